//! Discrete-step scenario runner.
//!
//! A run deploys every cluster, kills nodes in the test cluster, and then
//! steps the chosen protocol until the test cluster is whole again or the
//! step budget runs out. Coverage, energy and cost are measured over the test
//! cluster only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterManager, Migration, MigrationPlan};
use crate::config::Config;
use crate::coverage::{CoverageCounts, CoverageMap};
use crate::energy::{charge, CostAccount, EnergyCategory, EnergyLedger};
use crate::error::{Error, Result};
use crate::protocol::{RegistrationError, RegistrationPath, Registrar};
use crate::relocation::{
    apply_velocity_step, initial_deploy, mix64, recover_holes_hybrid, step_toward, HybridParams, TraceRow,
};
use crate::ssoa::{ssoa_recover, SsoaContext};
use crate::world::{Cluster, NodeId, Position, Rect, SensorNode, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Hybrid,
    Ssoa,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Hybrid => "hybrid",
            Protocol::Ssoa => "ssoa",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(Protocol::Hybrid),
            "ssoa" => Ok(Protocol::Ssoa),
            other => Err(Error::config(format!("unknown protocol {other:?} (expected hybrid or ssoa)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolePlacement {
    #[default]
    UniformInTestCluster,
    Concentrated,
}

/// Which member of a donor cluster is sent to a cluster below minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrantSelection {
    /// The member closest to the destination cluster.
    #[default]
    Nearest,
    /// The first member in list order.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    /// Nodes deployed per zone, split evenly over its clusters (earlier
    /// clusters take the remainder).
    pub nodes_per_zone: usize,
    /// Index of the cluster that receives the injected holes.
    pub test_cluster: usize,
    /// Overrides the test cluster's share of `nodes_per_zone`.
    pub test_cluster_nodes: Option<usize>,
    pub min_threshold: usize,
    pub max_threshold: usize,
    /// Nodes killed in the test cluster.
    pub holes: usize,
    pub placement: HolePlacement,
    pub max_steps: u64,
    pub migrant_selection: MigrantSelection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: Protocol::Hybrid,
            nodes_per_zone: 674,
            test_cluster: 0,
            test_cluster_nodes: None,
            min_threshold: 124,
            max_threshold: 135,
            holes: 20,
            placement: HolePlacement::UniformInTestCluster,
            max_steps: 3000,
            migrant_selection: MigrantSelection::Nearest,
        }
    }
}

impl ScenarioConfig {
    /// Node count of cluster `index` before any holes are injected.
    pub fn cluster_size(&self, layout: &crate::world::Layout, index: usize) -> usize {
        if index == self.test_cluster {
            if let Some(n) = self.test_cluster_nodes {
                return n;
            }
        }
        let per_zone = layout.clusters_per_zone().max(1);
        let local = index % per_zone;
        self.nodes_per_zone / per_zone + usize::from(local < self.nodes_per_zone % per_zone)
    }

    pub fn test_cluster_size(&self, layout: &crate::world::Layout) -> usize {
        self.cluster_size(layout, self.test_cluster)
    }
}

/// Derives an independent stream seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

const HOLE_STREAM: u64 = 0x686f_6c65;
const SSOA_STREAM: u64 = 0x7373_6f61;

/// Kills `n` live members of a cluster. `nodes[k].id` must equal `NodeId(k)`.
pub fn inject_holes(
    nodes: &mut [SensorNode],
    members: &[NodeId],
    region: &Rect,
    n: usize,
    placement: HolePlacement,
    seed: u64,
) -> Result<Vec<NodeId>> {
    let mut live = Vec::new();
    for &id in members {
        let node = nodes
            .get(id.0 as usize)
            .filter(|node| node.id == id)
            .ok_or_else(|| Error::domain(format!("node {id} is not at its index")))?;
        if node.alive {
            live.push(id);
        }
    }
    if n > live.len() {
        return Err(Error::domain(format!(
            "cannot inject {n} holes into a cluster with {} live nodes",
            live.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut killed: Vec<NodeId> = match placement {
        HolePlacement::UniformInTestCluster => sample(&mut rng, live.len(), n).into_iter().map(|k| live[k]).collect(),
        HolePlacement::Concentrated => {
            let centre = Position::new(
                rng.gen_range(region.min.x..=region.max.x),
                rng.gen_range(region.min.y..=region.max.y),
            );
            let mut by_distance: Vec<(f64, NodeId)> = live
                .iter()
                .map(|&id| (nodes[id.0 as usize].position.distance_sq(&centre), id))
                .collect();
            by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            by_distance.into_iter().take(n).map(|(_, id)| id).collect()
        }
    };
    killed.sort();
    for id in &killed {
        nodes[id.0 as usize].alive = false;
    }
    Ok(killed)
}

/// Per-run outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMetrics {
    pub protocol: Protocol,
    pub seed: u64,
    /// Hash of every setting except the protocol.
    pub fingerprint: u64,
    pub holes_injected: usize,
    pub test_cluster_nodes: usize,
    /// Steps until the test cluster was fully recovered, or `max_steps`.
    pub recovery_time_steps: u64,
    pub recovered: bool,
    pub initial_coverage: f64,
    pub final_coverage: f64,
    /// Mean path length over nodes that moved.
    pub mean_distance_moved: f64,
    /// Mean fraction of initial energy spent, over the test cluster's
    /// surviving nodes and every migrant.
    pub energy_spent_fraction: f64,
    /// Cost units computed on nodes.
    pub node_cost: f64,
    /// Cost units computed by heads and gateways.
    pub network_cost: f64,
    pub registrations_intra: u64,
    pub registrations_inter: u64,
    pub protocol_bytes: u64,
    pub migrants: usize,
    /// Residents sent by the head to a hole that local moves could not close.
    pub dispatches: usize,
    pub deaths: usize,
}

impl ScenarioMetrics {
    pub const CSV_HEADER: &'static str =
        "protocol,axis_value,seed,T_r,coverage,mean_dist_m,energy_frac,comp_cost,reg_intra,reg_inter";

    pub fn total_computational_cost(&self) -> f64 {
        self.node_cost + self.network_cost
    }

    /// One results row; `comp_cost` is the node-attributed cost.
    pub fn to_csv_row(&self, axis_value: f64) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.3},{},{}",
            self.protocol,
            axis_value,
            self.seed,
            self.recovery_time_steps,
            self.final_coverage,
            self.mean_distance_moved,
            self.energy_spent_fraction,
            self.node_cost,
            self.registrations_intra,
            self.registrations_inter,
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "protocol            {}\n\
             seed                {}\n\
             holes injected      {}\n\
             recovered           {}\n\
             recovery time       {} steps\n\
             coverage            {:.4} -> {:.4}\n\
             mean distance       {:.3} m\n\
             energy spent        {:.4} of initial\n\
             node cost           {:.1}\n\
             network cost        {:.1}\n\
             registrations       {} intra, {} inter ({} bytes)\n\
             migrants            {}\n\
             spare dispatches    {}\n\
             energy deaths       {}\n",
            self.protocol,
            self.seed,
            self.holes_injected,
            self.recovered,
            self.recovery_time_steps,
            self.initial_coverage,
            self.final_coverage,
            self.mean_distance_moved,
            self.energy_spent_fraction,
            self.node_cost,
            self.network_cost,
            self.registrations_intra,
            self.registrations_inter,
            self.protocol_bytes,
            self.migrants,
            self.dispatches,
            self.deaths,
        )
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: ScenarioMetrics,
    /// Hole-cell count at injection and after each step.
    pub hole_trace: Vec<usize>,
    /// Log lines for registrations, deaths and per-iteration movement.
    pub events: Vec<String>,
    pub ledger_csv: String,
    pub final_grid: String,
    /// Every node at the end of the run, dead ones included.
    pub nodes: Vec<SensorNode>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Hash of the resolved config with the protocol normalised.
pub fn fingerprint(config: &Config) -> u64 {
    let mut c = config.resolved();
    c.scenario.protocol = Protocol::Hybrid;
    fnv1a(c.to_toml().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Travelling,
    Registering { until: u64 },
    Settling { target: Option<Position> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Migrant {
    dest: usize,
    phase: Phase,
}

/// A run in progress.
pub struct Simulation {
    cfg: Config,
    zones: Vec<Zone>,
    clusters: Vec<Cluster>,
    nodes: Vec<SensorNode>,
    manager: ClusterManager,
    registrar: Registrar,
    ledger: EnergyLedger,
    cost: CostAccount,
    template: CoverageMap,
    test: usize,
    transit: BTreeMap<NodeId, Migrant>,
    step: u64,
    distance: BTreeMap<NodeId, f64>,
    tracked: BTreeSet<NodeId>,
    reg_intra: u64,
    reg_inter: u64,
    protocol_bytes: u64,
    migrants: usize,
    dispatches: usize,
    best_holes: usize,
    last_gain: u64,
    deaths: BTreeSet<NodeId>,
    events: Vec<String>,
    hole_trace: Vec<usize>,
    initial_coverage: f64,
}

impl Simulation {
    /// Validates the config, deploys every cluster and injects the holes.
    pub fn new(config: &Config) -> Result<Simulation> {
        config.validate()?;
        let cfg = config.resolved();
        let s = &cfg.scenario;
        let (zones, clusters) = cfg.layout.build(&cfg.field, s.min_threshold, s.max_threshold)?;
        let relax = cfg.relocation.relax_params(cfg.field.sensing_radius);
        let seed = cfg.field.rng_seed;

        let layouts: Vec<Vec<Position>> = clusters
            .par_iter()
            .enumerate()
            .map(|(c, cluster)| {
                let n = s.cluster_size(&cfg.layout, c);
                if n == 0 {
                    Ok(Vec::new())
                } else {
                    initial_deploy(n, &cluster.bounds, &relax, derive_seed(seed, c as u64))
                }
            })
            .collect::<Result<_>>()?;

        let mut manager = ClusterManager::new(s.min_threshold, s.max_threshold)?;
        let mut nodes = Vec::new();
        let mut clusters = clusters;
        for (cluster, positions) in clusters.iter_mut().zip(layouts) {
            let c = manager.add_cluster(cluster.zone);
            for p in positions {
                let id = NodeId(nodes.len() as u32);
                nodes.push(SensorNode::new(id, p, cfg.field.initial_energy, cluster.prefix()));
                manager.add_sensor(c, id)?;
                cluster.members.push(id);
            }
        }
        let mut registrar = Registrar::new(
            &clusters,
            &zones,
            s.max_threshold,
            cfg.protocol.clone(),
            cfg.field.packet_size,
        );
        for n in &nodes {
            registrar.enrol(n, 0)?;
        }

        let test = s.test_cluster;
        let region = clusters[test].bounds;
        let template = CoverageMap::for_region(region, cfg.field.bounds(), cfg.field.grid_cell_size)?;
        let killed = inject_holes(
            &mut nodes,
            &clusters[test].members,
            &region,
            s.holes,
            s.placement,
            derive_seed(seed, HOLE_STREAM),
        )?;
        for id in &killed {
            manager.forget(*id);
        }
        let tracked = manager.members(test).iter().copied().collect();

        let mut sim = Simulation {
            zones,
            clusters,
            nodes,
            manager,
            registrar,
            ledger: EnergyLedger::new(),
            cost: CostAccount::default(),
            template,
            test,
            transit: BTreeMap::new(),
            step: 0,
            distance: BTreeMap::new(),
            tracked,
            reg_intra: 0,
            reg_inter: 0,
            protocol_bytes: 0,
            migrants: 0,
            dispatches: 0,
            best_holes: usize::MAX,
            last_gain: 0,
            deaths: BTreeSet::new(),
            events: Vec::new(),
            hole_trace: Vec::new(),
            initial_coverage: 0.0,
            cfg,
        };
        let holes = sim.holes();
        sim.hole_trace.push(holes);
        sim.initial_coverage = sim.coverage_of(holes);
        Ok(sim)
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn registrar(&self) -> &Registrar {
        &self.registrar
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.manager.sizes()
    }

    /// Live test-cluster members that are not in transit.
    fn resident(&self) -> Vec<usize> {
        self.manager
            .members(self.test)
            .iter()
            .filter(|id| !self.transit.contains_key(id))
            .map(|id| id.0 as usize)
            .filter(|&k| self.nodes[k].alive)
            .collect()
    }

    fn counts(&self) -> CoverageCounts {
        let r = self.cfg.field.sensing_radius;
        CoverageCounts::from_positions(
            &self.template,
            r,
            self.resident().into_iter().map(|k| &self.nodes[k].position),
        )
    }

    /// Uncovered cells in the test cluster.
    pub fn holes(&self) -> usize {
        self.counts().holes()
    }

    fn coverage_of(&self, holes: usize) -> f64 {
        1.0 - holes as f64 / self.template.total_cells() as f64
    }

    fn add_distance(&mut self, id: NodeId, d: f64) {
        if d > 0.0 {
            *self.distance.entry(id).or_insert(0.0) += d;
        }
    }

    fn charge(&mut self, k: usize, joules: f64, category: EnergyCategory) {
        charge(&mut self.nodes[k], &mut self.ledger, joules, category);
    }

    /// Drops nodes that died since the last call from memberships and
    /// transit. Returns whether any of them belonged to the test cluster.
    fn bury(&mut self) -> bool {
        let mut test_loss = false;
        let dead: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !n.alive && n.energy <= 0.0 && !self.deaths.contains(&n.id))
            .map(|n| n.id)
            .collect();
        for id in dead {
            if self.manager.cluster_of(id) == Some(self.test) && !self.transit.contains_key(&id) {
                test_loss = true;
            }
            self.manager.forget(id);
            self.transit.remove(&id);
            self.deaths.insert(id);
            self.events.push(format!("step={} node={} event=energy_death", self.step, id));
        }
        test_loss
    }

    fn charge_sensing(&mut self, steps: u64) {
        let joules = self.cfg.energy.sensing_per_step * steps as f64;
        if joules <= 0.0 {
            return;
        }
        let members: Vec<usize> = self
            .manager
            .members(self.test)
            .iter()
            .map(|id| id.0 as usize)
            .filter(|&k| self.nodes[k].alive)
            .collect();
        for k in members {
            self.charge(k, joules, EnergyCategory::Sensing);
        }
    }

    fn pick_migrant(&self, m: &Migration, taken: &BTreeSet<NodeId>) -> Option<NodeId> {
        let dest = &self.clusters[m.to].bounds;
        let candidates = self.manager.members(m.from).iter().copied().filter(|id| {
            !taken.contains(id) && !self.transit.contains_key(id) && self.nodes[id.0 as usize].alive
        });
        match self.cfg.scenario.migrant_selection {
            MigrantSelection::First => candidates.into_iter().next(),
            MigrantSelection::Nearest => candidates
                .map(|id| (dest.distance_to(&self.nodes[id.0 as usize].position), id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, id)| id),
        }
    }

    /// One manager pass, applied at once. Returns whether a test-cluster
    /// resident was sent away.
    fn balance(&mut self) -> Result<bool> {
        let plan = self.manager.plan();
        let mut taken = BTreeSet::new();
        let mut chosen = MigrationPlan::default();
        for m in &plan.moves {
            if let Some(sensor) = self.pick_migrant(m, &taken) {
                taken.insert(sensor);
                chosen.moves.push(Migration { sensor, ..*m });
            }
        }
        self.manager.apply(&chosen)?;
        let mut pushed_out = false;
        for m in &chosen.moves {
            pushed_out |= m.from == self.test;
            self.transit.insert(
                m.sensor,
                Migrant {
                    dest: m.to,
                    phase: Phase::Travelling,
                },
            );
            self.migrants += 1;
            self.tracked.insert(m.sensor);
            self.events.push(format!(
                "step={} node={} event=migrate from={} to={}",
                self.step, m.sensor, self.clusters[m.from].id, self.clusters[m.to].id
            ));
        }
        Ok(pushed_out)
    }

    fn move_node(&mut self, k: usize, target: &Position, bounds: &Rect) -> f64 {
        let dx = self.cfg.relocation.dx;
        let node = &self.nodes[k];
        let v = step_toward(&node.position, target, dx);
        let next = apply_velocity_step(&node.position, &v, 1.0, bounds);
        let d = node.position.distance(&next);
        if d > 0.0 {
            self.nodes[k].position = next;
            self.nodes[k].velocity = v;
            self.add_distance(NodeId(k as u32), d);
            let joules = self.cfg.energy.move_joules(d);
            self.charge(k, joules, EnergyCategory::Movement);
        }
        d
    }

    fn advance_migrants(&mut self) -> Result<()> {
        let field = self.cfg.field.bounds();
        let dx = self.cfg.relocation.dx;
        let ids: Vec<NodeId> = self.transit.keys().copied().collect();
        for id in ids {
            let k = id.0 as usize;
            let Some(mut m) = self.transit.get(&id).copied() else { continue };
            if !self.nodes[k].alive {
                continue;
            }
            let dest = self.clusters[m.dest].bounds;
            match m.phase {
                Phase::Travelling => {
                    let inset = dx.min(dest.width() / 2.0).min(dest.height() / 2.0);
                    let inner = Rect::new(
                        dest.min.x + inset,
                        dest.min.y + inset,
                        dest.max.x - inset,
                        dest.max.y - inset,
                    );
                    let aim = inner.clamp(self.nodes[k].position);
                    self.move_node(k, &aim, &field);
                    if !self.nodes[k].alive || !dest.contains(&self.nodes[k].position) {
                        continue;
                    }
                    let load = self.manager.members(m.dest).len().saturating_sub(1);
                    let cluster_id = self.clusters[m.dest].id;
                    match self.registrar.register_node(&mut self.nodes[k], cluster_id, load, self.step) {
                        Ok(out) => {
                            match out.path {
                                RegistrationPath::IntraZone => self.reg_intra += 1,
                                RegistrationPath::InterZone => self.reg_inter += 1,
                            }
                            self.protocol_bytes += out.total_bytes();
                            let tx = self.cfg.energy.tx_joules(out.node_bytes() as f64, self.cfg.field.tx_power);
                            self.charge(k, tx, EnergyCategory::Transmission);
                            self.cost.network += self.cfg.energy.cost(out.backbone_bytes() as f64);
                            let wait = self.registrar.params().steps_for(out.latency_ms);
                            m.phase = Phase::Registering { until: self.step + wait };
                            self.events.push(format!(
                                "step={} node={} event=register path={} hops={} latency_ms={} bytes={}",
                                self.step,
                                id,
                                out.path,
                                out.hops,
                                out.latency_ms,
                                out.total_bytes()
                            ));
                        }
                        Err(RegistrationError::AdmissionDeferred(c)) => {
                            self.events.push(format!("step={} node={} event=admission_deferred cluster={c}", self.step, id));
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                Phase::Registering { until } => {
                    if self.step >= until {
                        self.cost.network += self.cfg.energy.cost(self.registrar.params().message_bytes.unwrap_or(0) as f64);
                        let target = if m.dest == self.test { self.placement_target(self.nodes[k].position) } else { None };
                        m.phase = Phase::Settling { target };
                    }
                }
                Phase::Settling { target } => {
                    let arrived = match target {
                        Some(t) => {
                            self.move_node(k, &t, &dest);
                            self.nodes[k].position.distance(&t) < 1e-9
                        }
                        None => true,
                    };
                    if arrived {
                        self.transit.remove(&id);
                        self.registrar.refresh_position(&self.nodes[k], self.step);
                        continue;
                    }
                }
            }
            self.transit.insert(id, m);
        }
        Ok(())
    }

    /// Where the head sends an admitted migrant: the hole cell whose disk
    /// would cover the most cells that are neither covered nor promised to
    /// another settling migrant. Ties go to the cell nearest the migrant.
    fn placement_target(&self, here: Position) -> Option<Position> {
        let r = self.cfg.field.sensing_radius;
        let map = &self.template;
        let w = map.width_cells();
        let counts = self.counts();
        let mut open = counts.to_map();
        for m in self.transit.values() {
            if let Phase::Settling { target: Some(t) } = m.phase {
                for (i, j) in map.disk_cells(&t, r) {
                    open.set(i, j, true);
                }
            }
        }
        let mut best: Option<(usize, f64, usize)> = None;
        for j in 0..map.height_cells() {
            for i in 0..w {
                if open.get(i, j) {
                    continue;
                }
                let c = map.cell_center(i, j);
                let gain = map.disk_cells(&c, r).filter(|&(a, b)| !open.get(a, b)).count();
                let d = c.distance_sq(&here);
                let better = match best {
                    None => true,
                    Some((g, bd, _)) => gain > g || (gain == g && d < bd),
                };
                if better {
                    best = Some((gain, d, j * w + i));
                }
            }
        }
        best.map(|(_, _, idx)| map.cell_center(idx % w, idx / w))
    }

    fn local_recovery(&mut self) -> Result<bool> {
        let resident = self.resident();
        let mut local: Vec<SensorNode> = resident.iter().map(|&k| self.nodes[k].clone()).collect();
        let params = HybridParams {
            dx: self.cfg.relocation.dx,
            max_iterations: self.cfg.relocation.iterations_per_step,
            sensing_radius: self.cfg.field.sensing_radius,
            trace: self.cfg.relocation.trace,
        };
        let result = recover_holes_hybrid(&mut local, &self.template, &params, &self.cfg.energy, &mut self.ledger)?;
        for (&k, n) in resident.iter().zip(local) {
            self.nodes[k] = n;
        }
        for &(id, d) in &result.distance_by_node {
            self.add_distance(id, d);
            self.registrar.refresh_position(&self.nodes[id.0 as usize], self.step);
        }
        if !result.distance_by_node.is_empty() {
            let commands = result.distance_by_node.len() as f64 * self.registrar.params().message_bytes.unwrap_or(0) as f64;
            self.cost.network += self.cfg.energy.cost(commands);
        }
        for TraceRow {
            iteration,
            node,
            x,
            y,
            holes_remaining,
        } in result.trace
        {
            self.events.push(format!(
                "step={} iteration={iteration} node={node} x={x:.3} y={y:.3} holes_remaining={holes_remaining}",
                self.step
            ));
        }
        Ok(!result.deaths.is_empty())
    }

    fn hybrid_done(&self, holes: usize) -> bool {
        holes == 0 && self.transit.is_empty() && self.manager.plan().is_empty()
    }

    /// One hybrid step. Returns the hole count afterwards.
    pub fn step_hybrid(&mut self) -> Result<usize> {
        self.step += 1;
        let before = self.holes();
        let mut excused = self.balance()?;
        self.advance_migrants()?;
        excused |= self.local_recovery()?;
        self.charge_sensing(1);
        excused |= self.bury();
        let after = self.holes();
        if after > before && !excused {
            return Err(Error::Invariant(format!(
                "test-cluster holes rose from {before} to {after} at step {}",
                self.step
            )));
        }
        if !self.registrar.caches_consistent() {
            return Err(Error::Invariant(format!("head and gateway caches diverged at step {}", self.step)));
        }
        if after < self.best_holes {
            self.best_holes = after;
            self.last_gain = self.step;
        }
        let stalled = self.step - self.last_gain >= self.cfg.relocation.stall_steps;
        if after > 0 && stalled && !self.transit.values().any(|m| m.dest == self.test) {
            self.dispatch_spare();
            self.last_gain = self.step;
        }
        self.hole_trace.push(after);
        Ok(after)
    }

    /// Sends the resident closest to the best open spot whose disk is
    /// covered twice over, so that leaving uncovers nothing.
    fn dispatch_spare(&mut self) {
        let Some(target) = self.placement_target(self.clusters[self.test].head_position) else {
            return;
        };
        let r = self.cfg.field.sensing_radius;
        let counts = self.counts();
        let spare = self
            .resident()
            .into_iter()
            .filter(|&k| {
                self.template
                    .disk_cells(&self.nodes[k].position, r)
                    .all(|(i, j)| counts.count(i, j) >= 2)
            })
            .min_by(|&a, &b| {
                let da = self.nodes[a].position.distance_sq(&target);
                let db = self.nodes[b].position.distance_sq(&target);
                da.total_cmp(&db).then(a.cmp(&b))
            });
        if let Some(k) = spare {
            let id = NodeId(k as u32);
            self.transit.insert(
                id,
                Migrant {
                    dest: self.test,
                    phase: Phase::Settling { target: Some(target) },
                },
            );
            self.dispatches += 1;
            self.cost.network += self.cfg.energy.cost(self.registrar.params().message_bytes.unwrap_or(0) as f64);
            self.events.push(format!(
                "step={} node={} event=dispatch x={:.3} y={:.3}",
                self.step, id, target.x, target.y
            ));
        }
    }

    fn run_hybrid(&mut self) -> Result<Option<u64>> {
        let max = self.cfg.scenario.max_steps;
        if self.hybrid_done(self.hole_trace[0]) {
            return Ok(Some(0));
        }
        while self.step < max {
            let holes = self.step_hybrid()?;
            if self.hybrid_done(holes) {
                return Ok(Some(self.step));
            }
        }
        Ok(None)
    }

    fn run_ssoa(&mut self) -> Result<Option<u64>> {
        let max = self.cfg.scenario.max_steps;
        let mut prev = self.hole_trace[0];
        if prev == 0 {
            return Ok(Some(0));
        }
        let relax = self.cfg.relocation.relax_params(self.cfg.field.sensing_radius);
        for episode in 0..self.cfg.ssoa.max_episodes {
            let resident = self.resident();
            let mut local: Vec<SensorNode> = resident.iter().map(|&k| self.nodes[k].clone()).collect();
            let ctx = SsoaContext {
                sensing_radius: self.cfg.field.sensing_radius,
                speed: self.cfg.relocation.dx,
                packet_size: self.cfg.field.packet_size,
                tx_power: self.cfg.field.tx_power,
                relax,
                energy: &self.cfg.energy,
                params: &self.cfg.ssoa,
                seed: derive_seed(self.cfg.field.rng_seed, SSOA_STREAM + episode as u64),
            };
            let result = ssoa_recover(&mut local, &self.template, &ctx, &mut self.ledger)?;
            for (&k, n) in resident.iter().zip(local) {
                self.nodes[k] = n;
            }
            for &(id, d) in &result.distance_by_node {
                self.add_distance(id, d);
            }
            self.cost.node += result.node_cost;
            let steps = (result.steps as u64).max(1);
            self.step += steps;
            self.charge_sensing(steps);
            self.bury();
            let holes = self.holes();
            self.hole_trace.push(holes);
            self.events.push(format!(
                "step={} episode={} tier={:?} relax_rounds={} holes_remaining={holes}",
                self.step, episode, result.tiers_used, result.relax_rounds
            ));
            if holes == 0 {
                return Ok((self.step <= max).then_some(self.step));
            }
            if holes >= prev || self.step >= max {
                break;
            }
            prev = holes;
        }
        // An unrecovered field keeps sensing for the rest of the budget.
        if self.step < max {
            self.charge_sensing(max - self.step);
            self.bury();
            self.step = max;
        }
        Ok(None)
    }

    /// Runs the configured protocol to completion.
    pub fn run(mut self) -> Result<RunReport> {
        let recovered_at = match self.cfg.scenario.protocol {
            Protocol::Hybrid => self.run_hybrid()?,
            Protocol::Ssoa => self.run_ssoa()?,
        };
        let holes = self.holes();
        let energy0 = self.cfg.field.initial_energy;
        let energy_spent_fraction = if self.tracked.is_empty() || energy0 <= 0.0 {
            0.0
        } else {
            self.tracked.iter().map(|&id| self.ledger.spend(id).total() / energy0).sum::<f64>() / self.tracked.len() as f64
        };
        let movers = self.distance.len();
        let mean_distance_moved = if movers == 0 {
            0.0
        } else {
            self.distance.values().sum::<f64>() / movers as f64
        };
        let s = &self.cfg.scenario;
        let metrics = ScenarioMetrics {
            protocol: s.protocol,
            seed: self.cfg.field.rng_seed,
            fingerprint: fingerprint(&self.cfg),
            holes_injected: s.holes,
            test_cluster_nodes: s.test_cluster_size(&self.cfg.layout),
            recovery_time_steps: recovered_at.unwrap_or(s.max_steps),
            recovered: recovered_at.is_some(),
            initial_coverage: self.initial_coverage,
            final_coverage: self.coverage_of(holes),
            mean_distance_moved,
            energy_spent_fraction,
            node_cost: self.cost.node,
            network_cost: self.cost.network,
            registrations_intra: self.reg_intra,
            registrations_inter: self.reg_inter,
            protocol_bytes: self.protocol_bytes,
            migrants: self.migrants,
            dispatches: self.dispatches,
            deaths: self.deaths.len(),
        };
        let mut grid = self.template.clone();
        let resident: Vec<SensorNode> = self.resident().into_iter().map(|k| self.nodes[k].clone()).collect();
        grid.mark_covered(&resident, self.cfg.field.sensing_radius, Default::default())?;
        Ok(RunReport {
            metrics,
            hole_trace: self.hole_trace,
            events: self.events,
            ledger_csv: self.ledger.to_csv(&self.nodes),
            final_grid: grid.to_text_grid(),
            nodes: self.nodes,
        })
    }
}

pub fn run_scenario(config: &Config) -> Result<ScenarioMetrics> {
    Ok(Simulation::new(config)?.run()?.metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Holes,
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: usize,
    pub metrics: ScenarioMetrics,
}

/// Applies one axis value to a copy of `base`.
pub fn at_axis(base: &Config, axis: Axis, value: usize) -> Config {
    let mut c = base.clone();
    match axis {
        Axis::Holes => c.scenario.holes = value,
        Axis::Density => c.scenario.test_cluster_nodes = Some(value),
    }
    c
}

/// One run per (value, protocol). Row `i` of the value list runs with seed
/// `base seed + i` under every protocol. Rows come back value-major in input
/// order regardless of how the runs were scheduled.
pub fn sweep(base: &Config, axis: Axis, values: &[usize], protocols: &[Protocol]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::domain("sweep needs at least one axis value"));
    }
    let jobs: Vec<(usize, usize, Protocol)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| protocols.iter().map(move |&p| (i, v, p)))
        .collect();
    jobs.par_iter()
        .map(|&(i, value, protocol)| {
            let mut c = at_axis(base, axis, value);
            c.field.rng_seed = base.field.rng_seed.wrapping_add(i as u64);
            c.scenario.protocol = protocol;
            Ok(SweepRow {
                axis_value: value,
                metrics: run_scenario(&c)?,
            })
        })
        .collect()
}
