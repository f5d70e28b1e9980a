//! Energy bookkeeping and the computational-cost model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{NodeId, SensorNode};

/// Weights for data size, processing, bandwidth and overhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        CostCoefficients {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            k4: 1.0,
        }
    }
}

/// `k1*D + k2*D/R + k3*D/B + k4*O`.
pub fn computational_cost(coeff: &CostCoefficients, data_bytes: f64, rate: f64, bandwidth: f64, overhead: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::domain(format!("processing rate must be positive (got {rate})")));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::domain(format!("bandwidth must be positive (got {bandwidth})")));
    }
    Ok(coeff.k1 * data_bytes + coeff.k2 * data_bytes / rate + coeff.k3 * data_bytes / bandwidth + coeff.k4 * overhead)
}

/// Joules to transmit `bytes` at `tx_power` watts and `bitrate` bits/s.
pub fn transmission_energy(bytes: f64, tx_power: f64, bitrate: f64) -> Result<f64> {
    if !(bitrate > 0.0) {
        return Err(Error::domain(format!("bitrate must be positive (got {bitrate})")));
    }
    Ok(tx_power * (8.0 * bytes / bitrate))
}

pub fn movement_energy(distance: f64, e_move: f64) -> Result<f64> {
    if distance < 0.0 {
        return Err(Error::domain(format!("distance must be non-negative (got {distance})")));
    }
    Ok(e_move * distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EnergyCategory {
    Sensing,
    Transmission,
    Movement,
    Processing,
}

/// Joules spent by one node, by category.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spend {
    pub sensing: f64,
    pub transmission: f64,
    pub movement: f64,
    pub processing: f64,
}

impl Spend {
    pub fn total(&self) -> f64 {
        self.sensing + self.transmission + self.movement + self.processing
    }

    pub fn get(&self, category: EnergyCategory) -> f64 {
        match category {
            EnergyCategory::Sensing => self.sensing,
            EnergyCategory::Transmission => self.transmission,
            EnergyCategory::Movement => self.movement,
            EnergyCategory::Processing => self.processing,
        }
    }

    fn slot(&mut self, category: EnergyCategory) -> &mut f64 {
        match category {
            EnergyCategory::Sensing => &mut self.sensing,
            EnergyCategory::Transmission => &mut self.transmission,
            EnergyCategory::Movement => &mut self.movement,
            EnergyCategory::Processing => &mut self.processing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    spends: BTreeMap<NodeId, Spend>,
    deaths: Vec<NodeId>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spend(&self, node: NodeId) -> Spend {
        self.spends.get(&node).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Spend)> {
        self.spends.iter().map(|(k, v)| (*k, v))
    }

    /// Nodes whose energy reached zero through a charge, in order of death.
    pub fn deaths(&self) -> &[NodeId] {
        &self.deaths
    }

    pub fn total(&self, category: EnergyCategory) -> f64 {
        self.spends.values().map(|s| s.get(category)).sum()
    }

    /// CSV with header `node_id,sensing_J,tx_J,move_J,proc_J,remaining_J`.
    pub fn to_csv(&self, nodes: &[SensorNode]) -> String {
        let mut out = String::from("node_id,sensing_J,tx_J,move_J,proc_J,remaining_J\n");
        for (id, s) in &self.spends {
            let remaining = nodes.iter().find(|n| n.id == *id).map_or(0.0, |n| n.energy);
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{:.9},{:.9},{:.9}",
                id.0, s.sensing, s.transmission, s.movement, s.processing, remaining
            );
        }
        out
    }
}

/// Deducts `joules` from the node (never below zero), records the amount
/// actually drawn and kills the node when its energy reaches zero. Returns
/// the joules drawn.
pub fn charge(node: &mut SensorNode, ledger: &mut EnergyLedger, joules: f64, category: EnergyCategory) -> f64 {
    if !node.alive || joules <= 0.0 {
        return 0.0;
    }
    let drawn = joules.min(node.energy);
    node.energy -= drawn;
    *ledger.spends.entry(node.id).or_default().slot(category) += drawn;
    if node.energy <= 0.0 {
        node.energy = 0.0;
        node.alive = false;
        ledger.deaths.push(node.id);
    }
    drawn
}

/// Cost units attributed to nodes and to the network side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostAccount {
    pub node: f64,
    pub network: f64,
}

/// Constants that turn protocol activity into joules and cost units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    /// Radio bitrate in bits/s.
    pub bitrate: f64,
    /// Joules per metre moved.
    pub e_move: f64,
    /// Joules per step for sensing.
    pub sensing_per_step: f64,
    /// Joules per cost unit for computation performed on a node.
    pub cost_to_joule: f64,
    /// Processing rate R in operations/s.
    pub processing_rate: f64,
    /// Overhead units per operation.
    pub overhead: f64,
    pub coefficients: CostCoefficients,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            bitrate: 250_000.0,
            e_move: 0.01,
            sensing_per_step: 1e-4,
            cost_to_joule: 1e-5,
            processing_rate: 1.0e6,
            overhead: 1.0,
            coefficients: CostCoefficients::default(),
        }
    }
}

impl EnergyModel {
    /// Cost of one operation over `bytes`, with bandwidth equal to the radio
    /// bitrate.
    pub fn cost(&self, bytes: f64) -> f64 {
        computational_cost(&self.coefficients, bytes, self.processing_rate, self.bitrate, self.overhead)
            .expect("energy model validated")
    }

    pub fn tx_joules(&self, bytes: f64, tx_power: f64) -> f64 {
        transmission_energy(bytes, tx_power, self.bitrate).expect("energy model validated")
    }

    pub fn move_joules(&self, distance: f64) -> f64 {
        movement_energy(distance.max(0.0), self.e_move).expect("non-negative distance")
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.bitrate > 0.0) {
            v.push(format!("energy.bitrate must be positive (got {})", self.bitrate));
        }
        if !(self.processing_rate > 0.0) {
            v.push(format!("energy.processing_rate must be positive (got {})", self.processing_rate));
        }
        for (name, x) in [
            ("energy.e_move", self.e_move),
            ("energy.sensing_per_step", self.sensing_per_step),
            ("energy.cost_to_joule", self.cost_to_joule),
            ("energy.overhead", self.overhead),
            ("energy.coefficients.k1", self.coefficients.k1),
            ("energy.coefficients.k2", self.coefficients.k2),
            ("energy.coefficients.k3", self.coefficients.k3),
            ("energy.coefficients.k4", self.coefficients.k4),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{name} must be non-negative (got {x})"));
            }
        }
        v
    }
}
