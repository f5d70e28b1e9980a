//! Single-tier baseline: nodes around a hole repair it themselves with one
//! move each, and fall back to a global force redeployment when holes
//! survive. Every computation is paid for by the nodes.

use serde::{Deserialize, Serialize};

use crate::coverage::{CoverageCounts, CoverageMap};
use crate::energy::{charge, EnergyCategory, EnergyLedger, EnergyModel};
use crate::engine::ScenarioMetrics;
use crate::error::{Error, Result};
use crate::relocation::{apply_velocity_step, bordering_targets, relax_layout, step_toward, RelaxParams};
use crate::world::{NodeId, Position, SensorNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsoaParams {
    /// Size of one neighbour-table entry; a node's local data volume is its
    /// neighbour count times this.
    pub neighbor_entry_bytes: u32,
    /// Nodes within this distance are in a node's table. `None` uses twice
    /// the sensing radius, the reach of overlapping disks.
    pub neighbor_range: Option<f64>,
    /// Position beacon each node broadcasts per detection or relaxation
    /// round. `None` uses the field's packet size.
    pub beacon_bytes: Option<u32>,
    /// Single-tier move length. `None` uses the sensing radius.
    pub phase1_step: Option<f64>,
    /// Episodes the engine runs before giving up on a stalled recovery.
    pub max_episodes: usize,
}

impl Default for SsoaParams {
    fn default() -> Self {
        SsoaParams {
            neighbor_entry_bytes: 128,
            neighbor_range: None,
            beacon_bytes: None,
            phase1_step: None,
            max_episodes: 20,
        }
    }
}

impl SsoaParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(r) = self.neighbor_range {
            if !(r >= 0.0 && r.is_finite()) {
                v.push(format!("ssoa.neighbor_range must be non-negative (got {r})"));
            }
        }
        if let Some(s) = self.phase1_step {
            if !(s > 0.0 && s.is_finite()) {
                v.push(format!("ssoa.phase1_step must be positive (got {s})"));
            }
        }
        if self.max_episodes == 0 {
            v.push("ssoa.max_episodes must be at least 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    SingleTier,
    GlobalRedeploy,
}

/// Everything a baseline episode needs besides the nodes and the map.
#[derive(Debug, Clone, Copy)]
pub struct SsoaContext<'a> {
    pub sensing_radius: f64,
    /// Distance a node covers per simulation step.
    pub speed: f64,
    pub packet_size: u32,
    pub tx_power: f64,
    pub relax: RelaxParams,
    pub energy: &'a EnergyModel,
    pub params: &'a SsoaParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsoaResult {
    pub recovered: bool,
    pub residual_holes: usize,
    pub initial_holes: usize,
    pub tiers_used: Option<Tier>,
    /// Steps the episode occupies: single-tier travel plus relaxation rounds.
    pub steps: usize,
    pub relax_rounds: usize,
    pub distance_by_node: Vec<(NodeId, f64)>,
    pub total_distance: f64,
    /// Single-tier displacement per node, in node order.
    pub phase1_distance: Vec<f64>,
    pub node_processing_charges: f64,
    /// Cost-model units computed on nodes.
    pub node_cost: f64,
    pub deaths: Vec<NodeId>,
}

fn live_counts(nodes: &[SensorNode], map: &CoverageMap, radius: f64) -> CoverageCounts {
    CoverageCounts::from_positions(map, radius, nodes.iter().filter(|n| n.alive).map(|n| &n.position))
}

struct Books<'a, 'b> {
    ctx: &'a SsoaContext<'b>,
    ledger: &'a mut EnergyLedger,
    processing: f64,
    cost: f64,
    deaths: Vec<NodeId>,
}

impl Books<'_, '_> {
    fn neighbour_count(nodes: &[SensorNode], k: usize, range: f64) -> usize {
        let p = nodes[k].position;
        let r2 = range * range;
        nodes
            .iter()
            .enumerate()
            .filter(|(j, n)| *j != k && n.alive && n.position.distance_sq(&p) <= r2)
            .count()
    }

    /// One local computation over the node's neighbour table.
    fn compute(&mut self, nodes: &mut [SensorNode], k: usize) {
        if !nodes[k].alive {
            return;
        }
        let range = self.ctx.params.neighbor_range.unwrap_or(2.0 * self.ctx.sensing_radius);
        let d = Self::neighbour_count(nodes, k, range) as f64
            * self.ctx.params.neighbor_entry_bytes as f64;
        let units = self.ctx.energy.cost(d);
        self.cost += units;
        let node = &mut nodes[k];
        self.processing += charge(node, self.ledger, units * self.ctx.energy.cost_to_joule, EnergyCategory::Processing);
        self.note_death(node);
    }

    fn beacon(&mut self, node: &mut SensorNode) {
        if !node.alive {
            return;
        }
        let bytes = self.ctx.params.beacon_bytes.unwrap_or(self.ctx.packet_size) as f64;
        charge(node, self.ledger, self.ctx.energy.tx_joules(bytes, self.ctx.tx_power), EnergyCategory::Transmission);
        self.note_death(node);
    }

    fn travel(&mut self, node: &mut SensorNode, metres: f64) {
        charge(node, self.ledger, self.ctx.energy.move_joules(metres), EnergyCategory::Movement);
        self.note_death(node);
    }

    fn note_death(&mut self, node: &SensorNode) {
        if !node.alive && !self.deaths.contains(&node.id) {
            self.deaths.push(node.id);
        }
    }
}

/// One baseline recovery episode over a cluster's nodes.
pub fn ssoa_recover(
    nodes: &mut [SensorNode],
    map: &CoverageMap,
    ctx: &SsoaContext<'_>,
    ledger: &mut EnergyLedger,
) -> Result<SsoaResult> {
    if !(ctx.speed > 0.0) {
        return Err(Error::domain("ssoa: speed must be positive"));
    }
    let radius = ctx.sensing_radius;
    let counts = live_counts(nodes, map, radius);
    let initial_holes = counts.holes();
    let mut result = SsoaResult {
        recovered: initial_holes == 0,
        residual_holes: initial_holes,
        initial_holes,
        tiers_used: None,
        steps: 0,
        relax_rounds: 0,
        distance_by_node: Vec::new(),
        total_distance: 0.0,
        phase1_distance: vec![0.0; nodes.len()],
        node_processing_charges: 0.0,
        node_cost: 0.0,
        deaths: Vec::new(),
    };
    if initial_holes == 0 {
        return Ok(result);
    }

    let region = map.region();
    let mut moved = vec![0.0; nodes.len()];
    let mut books = Books {
        ctx,
        ledger,
        processing: 0.0,
        cost: 0.0,
        deaths: Vec::new(),
    };

    // Detection: every node exchanges a beacon and scans its neighbourhood.
    for k in 0..nodes.len() {
        books.beacon(&mut nodes[k]);
        books.compute(nodes, k);
    }

    // Single tier: one move per bordering node, of whichever length up to
    // the step limit uncovers the most hole cells.
    let mut counts = live_counts(nodes, map, radius);
    let (_, targets) = bordering_targets(nodes, &counts, map, radius);
    let step = ctx.params.phase1_step.unwrap_or(radius);
    let mut longest: f64 = 0.0;
    for (k, target) in targets.into_iter().enumerate() {
        let Some(target) = target else { continue };
        books.compute(nodes, k);
        let node = &mut nodes[k];
        if !node.alive {
            continue;
        }
        let here = node.position;
        let mut best: Option<(isize, Position)> = None;
        for frac in [1.0, 0.5, 0.25, 0.125] {
            let v = step_toward(&here, &target, step * frac);
            let next = apply_velocity_step(&here, &v, 1.0, &region);
            if next == here {
                continue;
            }
            let delta = counts.shift(&here, &next);
            counts.shift(&next, &here);
            if delta < 0 && best.is_none_or(|(d, _)| delta < d) {
                best = Some((delta, next));
            }
        }
        let Some((_, next)) = best else { continue };
        counts.shift(&here, &next);
        let dist = here.distance(&next);
        node.velocity = step_toward(&here, &next, dist);
        node.position = next;
        moved[k] += dist;
        result.phase1_distance[k] = dist;
        longest = longest.max(dist);
        books.travel(node, dist);
        if !node.alive {
            counts.remove(&next);
        }
    }
    result.steps = (longest / ctx.speed).ceil() as usize;
    result.tiers_used = Some(Tier::SingleTier);

    // Global fallback: force relaxation over every live node.
    if live_counts(nodes, map, radius).holes() > 0 {
        result.tiers_used = Some(Tier::GlobalRedeploy);
        let mut one_round = ctx.relax;
        one_round.max_rounds = 1;
        while result.relax_rounds < ctx.relax.max_rounds {
            let live: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].alive).collect();
            if live.is_empty() {
                break;
            }
            result.relax_rounds += 1;
            for &k in &live {
                books.beacon(&mut nodes[k]);
                books.compute(nodes, k);
            }
            let live: Vec<usize> = live.into_iter().filter(|&k| nodes[k].alive).collect();
            let mut positions: Vec<Position> = live.iter().map(|&k| nodes[k].position).collect();
            let report = relax_layout(
                &mut positions,
                &region,
                &one_round,
                ctx.seed.wrapping_add(result.relax_rounds as u64),
            );
            for ((&k, p), d) in live.iter().zip(positions).zip(report.distance) {
                if d > 0.0 {
                    nodes[k].position = p;
                    moved[k] += d;
                    books.travel(&mut nodes[k], d);
                }
            }
            if report.converged {
                break;
            }
        }
        result.steps += result.relax_rounds;
    }

    result.residual_holes = live_counts(nodes, map, radius).holes();
    result.recovered = result.residual_holes == 0;
    result.node_processing_charges = books.processing;
    result.node_cost = books.cost;
    result.deaths = books.deaths;
    result.distance_by_node = nodes
        .iter()
        .zip(&moved)
        .filter(|(_, &d)| d > 0.0)
        .map(|(n, &d)| (n.id, d))
        .collect();
    result.total_distance = moved.iter().sum();
    Ok(result)
}

/// Paired metrics of one scenario under both protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub fingerprint: u64,
    pub hybrid: ScenarioMetrics,
    pub ssoa: ScenarioMetrics,
    pub recovery_time_ratio: Option<f64>,
    pub coverage_ratio: Option<f64>,
    pub energy_ratio: Option<f64>,
    pub node_cost_ratio: Option<f64>,
}

/// `h / s`; 1 when both are zero; undefined when only `s` is.
pub fn ratio(h: f64, s: f64) -> Option<f64> {
    if s == 0.0 {
        (h == 0.0).then_some(1.0)
    } else {
        Some(h / s)
    }
}

pub fn compare_runs(hybrid: &ScenarioMetrics, ssoa: &ScenarioMetrics) -> Result<ComparisonRow> {
    if hybrid.fingerprint != ssoa.fingerprint {
        return Err(Error::ComparisonInvalid(format!(
            "scenario fingerprints differ ({:016x} vs {:016x})",
            hybrid.fingerprint, ssoa.fingerprint
        )));
    }
    Ok(ComparisonRow {
        fingerprint: hybrid.fingerprint,
        recovery_time_ratio: ratio(hybrid.recovery_time_steps as f64, ssoa.recovery_time_steps as f64),
        coverage_ratio: ratio(hybrid.final_coverage, ssoa.final_coverage),
        energy_ratio: ratio(hybrid.energy_spent_fraction, ssoa.energy_spent_fraction),
        node_cost_ratio: ratio(hybrid.node_cost, ssoa.node_cost),
        hybrid: hybrid.clone(),
        ssoa: ssoa.clone(),
    })
}

impl ComparisonRow {
    pub const CSV_HEADER: &'static str = "fingerprint,axis_value,seed,T_r_hybrid,T_r_ssoa,T_r_ratio,coverage_hybrid,coverage_ssoa,coverage_ratio,energy_frac_hybrid,energy_frac_ssoa,energy_ratio,node_cost_hybrid,node_cost_ssoa,node_cost_ratio";

    pub fn to_csv_row(&self, axis_value: f64) -> String {
        let r = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
        format!(
            "{:016x},{},{},{},{},{},{:.6},{:.6},{},{:.6},{:.6},{},{:.3},{:.3},{}",
            self.fingerprint,
            axis_value,
            self.hybrid.seed,
            self.hybrid.recovery_time_steps,
            self.ssoa.recovery_time_steps,
            r(self.recovery_time_ratio),
            self.hybrid.final_coverage,
            self.ssoa.final_coverage,
            r(self.coverage_ratio),
            self.hybrid.energy_spent_fraction,
            self.ssoa.energy_spent_fraction,
            r(self.energy_ratio),
            self.hybrid.node_cost,
            self.ssoa.node_cost,
            r(self.node_cost_ratio),
        )
    }
}
