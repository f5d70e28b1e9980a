//! Node movement: virtual-force deployment and iterative hole recovery.
//!
//! Two movement regimes live here. [`relax_layout`] sums pairwise
//! attraction/repulsion around a distance threshold with an inward boundary
//! force; it drives initial deployment and the baseline's global
//! redeployment. [`recover_holes_hybrid`] is the network-controlled loop:
//! every iteration recomputes coverage, finds the hole components and steps
//! each bordering node a fixed small distance toward its component centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::{find_coverage_holes, CoverageCounts, CoverageMap, HoleSet};
use crate::energy::{charge, EnergyCategory, EnergyLedger, EnergyModel};
use crate::error::{Error, Result};
use crate::world::{NodeId, Position, Rect, SensorNode, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceVector {
    pub fx: f64,
    pub fy: f64,
}

impl ForceVector {
    pub const ZERO: ForceVector = ForceVector { fx: 0.0, fy: 0.0 };

    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }

    pub fn is_finite(&self) -> bool {
        self.fx.is_finite() && self.fy.is_finite()
    }
}

impl std::ops::Add for ForceVector {
    type Output = ForceVector;
    fn add(self, o: ForceVector) -> ForceVector {
        ForceVector {
            fx: self.fx + o.fx,
            fy: self.fy + o.fy,
        }
    }
}

impl std::ops::AddAssign for ForceVector {
    fn add_assign(&mut self, o: ForceVector) {
        self.fx += o.fx;
        self.fy += o.fy;
    }
}

impl std::ops::Neg for ForceVector {
    type Output = ForceVector;
    fn neg(self) -> ForceVector {
        ForceVector {
            fx: -self.fx,
            fy: -self.fy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceParams {
    pub d_threshold: f64,
    pub k_att: f64,
    pub k_rep: f64,
    /// Pairs farther apart than this exert no attraction.
    pub attraction_range: f64,
}

/// Force on `a` exerted by `b`. Repulsive below the threshold, attractive
/// above it (within `attraction_range`), zero at the threshold. Coincident
/// points yield zero; [`relax_layout`] resolves that case separately.
pub fn pairwise_virtual_force(a: &Position, b: &Position, params: &ForceParams) -> ForceVector {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let d = dx.hypot(dy);
    if d == 0.0 {
        return ForceVector::ZERO;
    }
    let (ux, uy) = (dx / d, dy / d);
    let signed = if d < params.d_threshold {
        -params.k_rep * (params.d_threshold - d)
    } else if d > params.d_threshold && d <= params.attraction_range {
        params.k_att * (d - params.d_threshold)
    } else {
        0.0
    };
    ForceVector {
        fx: signed * ux,
        fy: signed * uy,
    }
}

/// Inward push of `k_b * (margin - distance_to_edge)` from each edge closer
/// than `margin`.
pub fn boundary_force(p: &Position, bounds: &Rect, margin: f64, k_b: f64) -> ForceVector {
    let mut f = ForceVector::ZERO;
    let left = p.x - bounds.min.x;
    let right = bounds.max.x - p.x;
    let bottom = p.y - bounds.min.y;
    let top = bounds.max.y - p.y;
    if left < margin {
        f.fx += k_b * (margin - left);
    }
    if right < margin {
        f.fx -= k_b * (margin - right);
    }
    if bottom < margin {
        f.fy += k_b * (margin - bottom);
    }
    if top < margin {
        f.fy -= k_b * (margin - top);
    }
    f
}

/// `p + v * dt`, clamped to `bounds`.
pub fn apply_velocity_step(p: &Position, v: &Velocity, dt: f64, bounds: &Rect) -> Position {
    bounds.clamp(Position::new(p.x + v.vx * dt, p.y + v.vy * dt))
}

/// Velocity that moves `p` by `min(dx, |target - p|)` toward `target` in one
/// unit step.
pub fn step_toward(p: &Position, target: &Position, dx: f64) -> Velocity {
    let ex = target.x - p.x;
    let ey = target.y - p.y;
    let d = ex.hypot(ey);
    if d == 0.0 {
        return Velocity::ZERO;
    }
    let s = dx.min(d) / d;
    Velocity::new(ex * s, ey * s)
}

/// Tuning for movement. Lengths are metres; a `None` length is derived from
/// the sensing radius by [`RelocationParams::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelocationParams {
    /// Per-iteration displacement of a recovering node.
    pub dx: f64,
    /// Iteration budget of one standalone recovery episode.
    pub max_iterations: usize,
    /// Recovery iterations the engine runs per simulation step.
    pub iterations_per_step: usize,
    pub d_threshold: Option<f64>,
    pub k_att: f64,
    pub k_rep: f64,
    pub k_b: f64,
    pub boundary_margin: Option<f64>,
    pub attraction_range: Option<f64>,
    /// Metres of displacement per unit of force in one relaxation round.
    pub force_gain: f64,
    /// Displacement cap per relaxation round.
    pub max_step: Option<f64>,
    /// Relaxation stops once no node moves farther than this in a round.
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Steps without a drop in the hole count before the head sends a spare
    /// resident straight to the hole.
    pub stall_steps: u64,
    /// Emit per-iteration trace rows from the recovery loop.
    pub trace: bool,
}

impl Default for RelocationParams {
    fn default() -> Self {
        RelocationParams {
            dx: 0.5,
            max_iterations: 500,
            iterations_per_step: 1,
            d_threshold: None,
            k_att: 1.0,
            k_rep: 1.0,
            k_b: 2.0,
            boundary_margin: None,
            attraction_range: None,
            force_gain: 0.1,
            max_step: None,
            epsilon: 1e-3,
            max_rounds: 300,
            stall_steps: 20,
            trace: false,
        }
    }
}

impl RelocationParams {
    /// Fills derived lengths: threshold `sqrt(3) * r`, margin `r / 2`,
    /// attraction range 1.2 times the threshold, round cap `dx`.
    pub fn resolve(&mut self, sensing_radius: f64) {
        let d = *self.d_threshold.get_or_insert(3f64.sqrt() * sensing_radius);
        self.boundary_margin.get_or_insert(0.5 * sensing_radius);
        self.attraction_range.get_or_insert(1.2 * d);
        self.max_step.get_or_insert(self.dx);
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |name: &str, x: f64, v: &mut Vec<String>| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("relocation.{name} must be positive (got {x})"));
            }
        };
        pos("dx", self.dx, &mut v);
        pos("force_gain", self.force_gain, &mut v);
        pos("epsilon", self.epsilon, &mut v);
        for (name, x) in [
            ("d_threshold", self.d_threshold),
            ("boundary_margin", self.boundary_margin),
            ("attraction_range", self.attraction_range),
            ("max_step", self.max_step),
        ] {
            if let Some(x) = x {
                pos(name, x, &mut v);
            }
        }
        for (name, x) in [("k_att", self.k_att), ("k_rep", self.k_rep), ("k_b", self.k_b)] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("relocation.{name} must be non-negative (got {x})"));
            }
        }
        if self.max_iterations == 0 {
            v.push("relocation.max_iterations must be at least 1".into());
        }
        if self.iterations_per_step == 0 {
            v.push("relocation.iterations_per_step must be at least 1".into());
        }
        if self.stall_steps == 0 {
            v.push("relocation.stall_steps must be at least 1".into());
        }
        if self.max_rounds == 0 {
            v.push("relocation.max_rounds must be at least 1".into());
        }
        v
    }

    pub fn relax_params(&self, sensing_radius: f64) -> RelaxParams {
        let mut p = self.clone();
        p.resolve(sensing_radius);
        RelaxParams {
            force: ForceParams {
                d_threshold: p.d_threshold.unwrap(),
                k_att: p.k_att,
                k_rep: p.k_rep,
                attraction_range: p.attraction_range.unwrap(),
            },
            margin: p.boundary_margin.unwrap(),
            k_b: p.k_b,
            gain: p.force_gain,
            max_step: p.max_step.unwrap(),
            epsilon: p.epsilon,
            max_rounds: p.max_rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxParams {
    pub force: ForceParams,
    pub margin: f64,
    pub k_b: f64,
    pub gain: f64,
    pub max_step: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelaxReport {
    pub rounds: usize,
    pub converged: bool,
    /// Path length travelled by each node, in input order.
    pub distance: Vec<f64>,
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unit direction for a coincident pair, fixed by seed and pair indices.
fn coincident_direction(seed: u64, i: usize, j: usize) -> (f64, f64) {
    let h = mix64(seed ^ mix64(((i as u64) << 32) | j as u64));
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    (angle.cos(), angle.sin())
}

/// Net virtual force on every position.
pub fn net_forces(positions: &[Position], bounds: &Rect, params: &RelaxParams, seed: u64) -> Vec<ForceVector> {
    let n = positions.len();
    let mut forces: Vec<ForceVector> = positions
        .iter()
        .map(|p| boundary_force(p, bounds, params.margin, params.k_b))
        .collect();
    let reach = params.force.attraction_range.max(params.force.d_threshold);
    let reach2 = reach * reach;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&positions[i], &positions[j]);
            let d2 = a.distance_sq(b);
            if d2 > reach2 {
                continue;
            }
            let f = if d2 == 0.0 {
                let (ux, uy) = coincident_direction(seed, i, j);
                let m = params.force.k_rep * params.force.d_threshold;
                ForceVector { fx: m * ux, fy: m * uy }
            } else {
                pairwise_virtual_force(a, b, &params.force)
            };
            forces[i] += f;
            forces[j] += -f;
        }
    }
    forces
}

/// Iterates force-driven displacement, `gain * F` capped at `max_step`,
/// until the largest move in a round drops below `epsilon` or `max_rounds`
/// rounds have run.
pub fn relax_layout(positions: &mut [Position], bounds: &Rect, params: &RelaxParams, seed: u64) -> RelaxReport {
    let mut report = RelaxReport {
        distance: vec![0.0; positions.len()],
        ..RelaxReport::default()
    };
    while report.rounds < params.max_rounds {
        report.rounds += 1;
        let forces = net_forces(positions, bounds, params, seed);
        let mut largest: f64 = 0.0;
        for (k, (p, f)) in positions.iter_mut().zip(&forces).enumerate() {
            let mut sx = params.gain * f.fx;
            let mut sy = params.gain * f.fy;
            let len = sx.hypot(sy);
            if len > params.max_step {
                sx *= params.max_step / len;
                sy *= params.max_step / len;
            }
            let next = bounds.clamp(Position::new(p.x + sx, p.y + sy));
            let moved = p.distance(&next);
            report.distance[k] += moved;
            largest = largest.max(moved);
            *p = next;
        }
        if largest < params.epsilon {
            report.converged = true;
            break;
        }
    }
    report
}

/// Uniform random drop inside `bounds` followed by force relaxation.
pub fn initial_deploy(count: usize, bounds: &Rect, params: &RelaxParams, seed: u64) -> Result<Vec<Position>> {
    if count == 0 {
        return Err(Error::domain("initial_deploy: count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<Position> = (0..count)
        .map(|_| {
            Position::new(
                rng.gen_range(bounds.min.x..=bounds.max.x),
                rng.gen_range(bounds.min.y..=bounds.max.y),
            )
        })
        .collect();
    relax_layout(&mut positions, bounds, params, seed);
    Ok(positions)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridParams {
    pub dx: f64,
    pub max_iterations: usize,
    pub sensing_radius: f64,
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub node: NodeId,
    pub x: f64,
    pub y: f64,
    pub holes_remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryResult {
    pub iterations_used: usize,
    pub recovered: bool,
    /// Distance moved by each node that moved, in node order.
    pub distance_by_node: Vec<(NodeId, f64)>,
    pub total_distance: f64,
    pub residual_holes: usize,
    /// Hole-cell count at entry and after each iteration.
    pub hole_trace: Vec<usize>,
    /// Nodes that ran out of energy while moving.
    pub deaths: Vec<NodeId>,
    pub trace: Vec<TraceRow>,
}

/// Hole components of `counts` and, per node, the centroid of the nearest
/// component it borders. A live node borders a component when its sensing
/// disk reaches a covered cell 4-adjacent to one of the component's cells.
pub fn bordering_targets(
    nodes: &[SensorNode],
    counts: &CoverageCounts,
    map: &CoverageMap,
    radius: f64,
) -> (HoleSet, Vec<Option<Position>>) {
    let (w, h) = (map.width_cells(), map.height_cells());
    let holes = find_coverage_holes(&counts.to_map());
    let mut perimeter: Vec<Vec<usize>> = vec![Vec::new(); w * h];
    for (ci, comp) in holes.components.iter().enumerate() {
        for &(i, j) in &comp.cells {
            let mut mark = |ni: usize, nj: usize| {
                if counts.count(ni, nj) > 0 {
                    let slot = &mut perimeter[nj * w + ni];
                    if slot.last() != Some(&ci) {
                        slot.push(ci);
                    }
                }
            };
            if i > 0 {
                mark(i - 1, j);
            }
            if i + 1 < w {
                mark(i + 1, j);
            }
            if j > 0 {
                mark(i, j - 1);
            }
            if j + 1 < h {
                mark(i, j + 1);
            }
        }
    }
    let targets = nodes
        .iter()
        .map(|n| {
            if !n.alive || holes.is_empty() {
                return None;
            }
            let mut best: Option<(f64, Position)> = None;
            for (i, j) in map.disk_cells(&n.position, radius) {
                for &ci in &perimeter[j * w + i] {
                    let c = holes.components[ci].centroid;
                    let d = n.position.distance_sq(&c);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, c));
                    }
                }
            }
            best.map(|(_, c)| c)
        })
        .collect();
    (holes, targets)
}

/// Network-controlled recovery of the holes in `map`'s region.
///
/// `nodes` are the cluster's nodes; only live ones cover or move. A node
/// borders a hole component when its sensing disk reaches a covered cell
/// 4-adjacent to the component; it steps toward the centroid of the nearest
/// such component. A step that would raise the hole count is withdrawn, so the
/// count never increases except through energy death.
pub fn recover_holes_hybrid(
    nodes: &mut [SensorNode],
    map: &CoverageMap,
    params: &HybridParams,
    energy: &EnergyModel,
    ledger: &mut EnergyLedger,
) -> Result<RecoveryResult> {
    if params.max_iterations == 0 {
        return Err(Error::domain("max_iterations must be at least 1"));
    }
    if !(params.dx > 0.0) {
        return Err(Error::domain("dx must be positive"));
    }
    let region = map.region();
    let radius = params.sensing_radius;
    let mut counts = CoverageCounts::from_positions(
        map,
        radius,
        nodes.iter().filter(|n| n.alive).map(|n| &n.position),
    );
    let mut moved = vec![0.0; nodes.len()];
    let mut result = RecoveryResult {
        hole_trace: vec![counts.holes()],
        ..RecoveryResult::default()
    };

    while result.iterations_used < params.max_iterations && counts.holes() > 0 {
        let before = counts.holes();
        let (_, targets) = bordering_targets(nodes, &counts, map, radius);

        let iteration = result.iterations_used + 1;
        for (k, target) in targets.into_iter().enumerate() {
            let Some(target) = target else { continue };
            let node = &mut nodes[k];
            if !node.alive {
                continue;
            }
            let v = step_toward(&node.position, &target, params.dx);
            let next = apply_velocity_step(&node.position, &v, 1.0, &region);
            if next == node.position {
                continue;
            }
            if counts.shift(&node.position, &next) > 0 {
                counts.shift(&next, &node.position);
                continue;
            }
            let dist = node.position.distance(&next);
            node.position = next;
            node.velocity = v;
            moved[k] += dist;
            charge(node, ledger, energy.move_joules(dist), EnergyCategory::Movement);
            if !node.alive {
                counts.remove(&node.position);
                result.deaths.push(node.id);
            }
            if params.trace {
                result.trace.push(TraceRow {
                    iteration,
                    node: node.id,
                    x: node.position.x,
                    y: node.position.y,
                    holes_remaining: counts.holes(),
                });
            }
        }
        result.iterations_used = iteration;
        result.hole_trace.push(counts.holes());
        if counts.holes() > before && result.deaths.is_empty() {
            return Err(Error::Invariant(format!(
                "hole count rose from {before} to {} in recovery iteration {iteration}",
                counts.holes()
            )));
        }
    }

    result.residual_holes = counts.holes();
    result.recovered = result.residual_holes == 0;
    result.distance_by_node = nodes
        .iter()
        .zip(&moved)
        .filter(|(_, &d)| d > 0.0)
        .map(|(n, &d)| (n.id, d))
        .collect();
    result.total_distance = moved.iter().sum();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::CoverageModel;
    use proptest::prelude::*;
    use crate::world::{ClusterId, HomePrefix, ZoneId};

    fn fp(d: f64) -> ForceParams {
        ForceParams {
            d_threshold: d,
            k_att: 1.0,
            k_rep: 1.0,
            attraction_range: f64::INFINITY,
        }
    }

    fn sensor(id: u32, x: f64, y: f64) -> SensorNode {
        SensorNode::new(
            NodeId(id),
            Position::new(x, y),
            6.0,
            HomePrefix {
                zone: ZoneId(0),
                cluster: ClusterId(0),
            },
        )
    }

    #[test]
    fn pairwise_force_examples() {
        let o = Position::new(0.0, 0.0);
        assert_eq!(pairwise_virtual_force(&o, &Position::new(2.0, 0.0), &fp(2.0)), ForceVector::ZERO);
        let f = pairwise_virtual_force(&o, &Position::new(1.0, 0.0), &fp(2.0));
        assert!((f.fx + 1.0).abs() < 1e-12 && f.fy.abs() < 1e-12);
        let f = pairwise_virtual_force(&o, &Position::new(3.0, 0.0), &fp(2.0));
        assert!((f.fx - 1.0).abs() < 1e-12 && f.fy.abs() < 1e-12);
        let mut short = fp(2.0);
        short.attraction_range = 2.5;
        assert_eq!(pairwise_virtual_force(&o, &Position::new(3.0, 0.0), &short), ForceVector::ZERO);
    }

    #[test]
    fn boundary_force_examples() {
        let b = Rect::with_size(20.0, 20.0);
        assert_eq!(boundary_force(&Position::new(10.0, 10.0), &b, 5.0, 1.0), ForceVector::ZERO);
        assert_eq!(
            boundary_force(&Position::new(0.0, 10.0), &b, 5.0, 1.0),
            ForceVector { fx: 5.0, fy: 0.0 }
        );
        let corner = boundary_force(&Position::new(19.0, 1.0), &b, 5.0, 1.0);
        assert!(corner.fx < 0.0 && corner.fy > 0.0);
        assert_eq!(corner, ForceVector { fx: -4.0, fy: 4.0 });
    }

    #[test]
    fn velocity_step_examples() {
        let b = Rect::with_size(100.0, 100.0);
        assert_eq!(
            apply_velocity_step(&Position::new(0.0, 0.0), &Velocity::new(1.0, 2.0), 0.5, &b),
            Position::new(0.5, 1.0)
        );
        let p = Position::new(7.0, 3.0);
        assert_eq!(apply_velocity_step(&p, &Velocity::new(4.0, -9.0), 0.0, &b), p);
        assert_eq!(
            apply_velocity_step(&Position::new(2.0, 3.0), &Velocity::new(-1.0, 0.0), 2.0, &b),
            Position::new(0.0, 3.0)
        );
        assert_eq!(
            apply_velocity_step(&Position::new(2.0, 3.0), &Velocity::new(-1.0, 0.0), 5.0, &b),
            Position::new(0.0, 3.0)
        );
    }

    #[test]
    fn step_toward_examples() {
        let o = Position::new(0.0, 0.0);
        assert_eq!(step_toward(&o, &o, 1.0), Velocity::ZERO);
        assert_eq!(step_toward(&o, &Position::new(10.0, 0.0), 1.0), Velocity::new(1.0, 0.0));
        assert_eq!(step_toward(&o, &Position::new(0.5, 0.0), 1.0), Velocity::new(0.5, 0.0));
        let v = step_toward(&o, &Position::new(3.0, 4.0), 2.0);
        assert!((v.magnitude() - 2.0).abs() < 1e-12);
    }

    fn relax(d: f64) -> RelaxParams {
        RelaxParams {
            force: fp(d),
            margin: 2.0,
            k_b: 2.0,
            gain: 0.1,
            max_step: 0.5,
            epsilon: 1e-3,
            max_rounds: 5000,
        }
    }

    #[test]
    fn single_node_deploys_clear_of_edges() {
        let b = Rect::with_size(30.0, 30.0);
        let p = relax(5.0);
        for seed in 0..20 {
            let pos = initial_deploy(1, &b, &p, seed).unwrap();
            // Approach to the margin line is geometric with ratio
            // 1 - gain*k_b; it stops once a round moves less than epsilon.
            let slack = p.epsilon / (p.gain * p.k_b);
            let edge = [pos[0].x, pos[0].y, 30.0 - pos[0].x, 30.0 - pos[0].y]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            assert!(edge >= p.margin - slack, "seed {seed}: {edge}");
        }
        assert!(initial_deploy(0, &b, &p, 0).is_err());
    }

    #[test]
    fn two_nodes_settle_at_threshold() {
        // Each node moves gain*(d - t) toward the other per round, so the
        // gap error shrinks by (1 - 2*gain) and the loop halts once
        // gain*|d - t| < epsilon.
        let b = Rect::with_size(200.0, 200.0);
        let p = relax(8.0);
        for seed in 0..10 {
            let pos = initial_deploy(2, &b, &p, seed).unwrap();
            let d = pos[0].distance(&pos[1]);
            assert!((d - 8.0).abs() <= p.epsilon / p.gain, "seed {seed}: {d}");
        }
    }

    #[test]
    fn deployment_is_deterministic() {
        let b = Rect::with_size(60.0, 60.0);
        let p = relax(8.0);
        assert_eq!(
            initial_deploy(25, &b, &p, 42).unwrap(),
            initial_deploy(25, &b, &p, 42).unwrap()
        );
        assert_ne!(
            initial_deploy(25, &b, &p, 42).unwrap(),
            initial_deploy(25, &b, &p, 43).unwrap()
        );
    }

    #[test]
    fn coincident_nodes_are_pushed_apart() {
        let b = Rect::with_size(50.0, 50.0);
        let mut pos = vec![Position::new(25.0, 25.0); 3];
        let report = relax_layout(&mut pos, &b, &relax(8.0), 7);
        assert!(report.rounds > 0);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!(pos[i].distance(&pos[j]) > 4.0);
            }
        }
    }

    #[test]
    fn packing_keeps_nodes_apart() {
        let b = Rect::with_size(100.0, 100.0);
        let mut p = relax(3f64.sqrt() * 5.0);
        p.force.attraction_range = 1.2 * p.force.d_threshold;
        p.max_rounds = 500;
        for seed in 0..3 {
            let pos = initial_deploy(50, &b, &p, seed).unwrap();
            for i in 0..pos.len() {
                assert!(b.contains(&pos[i]));
                for j in (i + 1)..pos.len() {
                    assert!(pos[i].distance(&pos[j]) >= p.force.d_threshold / 2.0);
                }
            }
        }
    }

    fn hybrid(dx: f64, r: f64, iters: usize) -> HybridParams {
        HybridParams {
            dx,
            max_iterations: iters,
            sensing_radius: r,
            trace: true,
        }
    }

    #[test]
    fn no_holes_means_no_work() {
        let field = Rect::with_size(4.0, 2.0);
        let map = CoverageMap::for_region(field, field, 2.0).unwrap();
        let mut nodes = vec![sensor(0, 2.0, 1.0)];
        let mut ledger = EnergyLedger::new();
        let r = recover_holes_hybrid(&mut nodes, &map, &hybrid(0.5, 1.5, 10), &EnergyModel::default(), &mut ledger).unwrap();
        assert!(r.recovered);
        assert_eq!(r.iterations_used, 0);
        assert_eq!(r.total_distance, 0.0);
    }

    #[test]
    fn single_hole_cell_recovers_in_one_iteration() {
        // Cells centred at (1,1) and (3,1). The live node covers only the
        // first; one 1 m step to (2,1) puts both centres at distance 1.
        let field = Rect::with_size(4.0, 2.0);
        let map = CoverageMap::for_region(field, field, 2.0).unwrap();
        let mut dead = sensor(1, 3.5, 1.5);
        dead.alive = false;
        let mut nodes = vec![sensor(0, 1.0, 1.0), dead];
        let mut ledger = EnergyLedger::new();
        let energy = EnergyModel::default();
        let r = recover_holes_hybrid(&mut nodes, &map, &hybrid(1.0, 1.0, 10), &energy, &mut ledger).unwrap();
        assert!(r.recovered);
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.distance_by_node, vec![(NodeId(0), 1.0)]);
        assert_eq!(nodes[0].position, Position::new(2.0, 1.0));
        assert_eq!(nodes[1].position, Position::new(3.5, 1.5));
        assert!((ledger.spend(NodeId(0)).movement - 0.01).abs() < 1e-15);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.hole_trace, vec![1, 0]);
    }

    #[test]
    fn dead_cluster_cannot_recover() {
        let field = Rect::with_size(10.0, 10.0);
        let map = CoverageMap::for_region(field, field, 2.0).unwrap();
        let mut a = sensor(0, 2.0, 2.0);
        a.alive = false;
        let mut nodes = vec![a];
        let mut ledger = EnergyLedger::new();
        let r = recover_holes_hybrid(&mut nodes, &map, &hybrid(0.5, 3.0, 25), &EnergyModel::default(), &mut ledger).unwrap();
        assert!(!r.recovered);
        assert_eq!(r.iterations_used, 25);
        assert_eq!(r.total_distance, 0.0);
        assert_eq!(r.residual_holes, 25);
    }

    #[test]
    fn recovery_agrees_with_coverage_map() {
        let field = Rect::with_size(20.0, 20.0);
        let map = CoverageMap::for_region(field, field, 2.0).unwrap();
        let mut nodes: Vec<SensorNode> = (0..9)
            .map(|k| sensor(k, 3.0 + 6.5 * (k % 3) as f64, 3.0 + 6.5 * (k / 3) as f64))
            .collect();
        nodes[4].alive = false;
        let mut ledger = EnergyLedger::new();
        let r = recover_holes_hybrid(&mut nodes, &map, &hybrid(0.5, 5.0, 200), &EnergyModel::default(), &mut ledger).unwrap();
        let mut check = map.clone();
        check.mark_covered(&nodes, 5.0, CoverageModel::Disk).unwrap();
        assert_eq!(check.hole_cells(), r.residual_holes);
        assert!(r.hole_trace.windows(2).all(|w| w[1] <= w[0]));
        for (id, d) in &r.distance_by_node {
            assert!(*d <= 0.5 * r.iterations_used as f64 + 1e-9, "{id}: {d}");
        }
    }

    proptest! {
        #[test]
        fn velocity_step_is_exact_inside_and_clamped_outside(
            x in -50.0f64..50.0, y in -50.0f64..50.0, vx in -20.0f64..20.0, vy in -20.0f64..20.0, dt in 0.0f64..3.0,
        ) {
            let bounds = Rect::new(-40.0, -30.0, 40.0, 30.0);
            let p = bounds.clamp(Position::new(x, y));
            let q = apply_velocity_step(&p, &Velocity::new(vx, vy), dt, &bounds);
            prop_assert!(bounds.contains(&q));
            let (ex, ey) = (p.x + vx * dt, p.y + vy * dt);
            if bounds.contains(&Position::new(ex, ey)) {
                prop_assert!((q.x - ex).abs() <= 1e-9 && (q.y - ey).abs() <= 1e-9);
            }
        }

        #[test]
        fn recovery_steps_are_bounded_and_never_open_holes(
            raw in prop::collection::vec((0.0f64..=30.0, 0.0f64..=20.0), 5..25),
            dx in 0.1f64..1.5,
        ) {
            let field = Rect::with_size(30.0, 20.0);
            let map = CoverageMap::for_region(field, field, 2.0).unwrap();
            let mut nodes: Vec<SensorNode> = raw.iter().enumerate().map(|(k, &(x, y))| sensor(k as u32, x, y)).collect();
            let start: Vec<Position> = nodes.iter().map(|n| n.position).collect();
            let mut params = hybrid(dx, 5.0, 200);
            params.trace = true;
            let mut ledger = EnergyLedger::new();
            let r = recover_holes_hybrid(&mut nodes, &map, &params, &EnergyModel::default(), &mut ledger).unwrap();
            prop_assert!(r.iterations_used <= 200);
            if r.deaths.is_empty() {
                prop_assert!(r.hole_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.hole_trace);
            }
            let mut last = start.clone();
            for row in &r.trace {
                let k = row.node.0 as usize;
                let p = Position::new(row.x, row.y);
                prop_assert!(last[k].distance(&p) <= dx + 1e-9);
                prop_assert!(field.contains(&p));
                last[k] = p;
            }
            for (n, p) in nodes.iter().zip(&last) {
                prop_assert_eq!(n.position, *p);
            }
        }
    }
}
