//! Domain types for the sensor field: positions, nodes, clusters and zones.
//!
//! Coordinates are continuous metres with the origin at the lower-left
//! corner of the field. Grid indices are derived on demand by the coverage
//! module and never stored on nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LEN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Displacement per step, in metres/step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { vx: 0.0, vy: 0.0 };

    pub const fn new(vx: f64, vy: f64) -> Self {
        Velocity { vx, vy }
    }

    pub fn magnitude(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}", self.0)
    }
}

/// Network prefix a node was addressed under: the zone and cluster that
/// issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HomePrefix {
    pub zone: ZoneId,
    pub cluster: ClusterId,
}

impl fmt::Display for HomePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.zone, self.cluster)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNode {
    pub id: NodeId,
    pub position: Position,
    pub velocity: Velocity,
    /// Remaining energy in joules.
    pub energy: f64,
    pub home_prefix: HomePrefix,
    pub alive: bool,
    /// Proxy-registration flag bit.
    pub registered: bool,
}

impl SensorNode {
    pub fn new(id: NodeId, position: Position, energy: f64, home_prefix: HomePrefix) -> Self {
        SensorNode {
            id,
            position,
            velocity: Velocity::ZERO,
            energy,
            home_prefix,
            alive: energy > 0.0,
            registered: true,
        }
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Position,
    pub max: Position,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect {
            min: Position::new(x0, y0),
            max: Position::new(x1, y1),
        }
    }

    pub fn with_size(width: f64, height: f64) -> Self {
        Rect::new(0.0, 0.0, width, height)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Position {
        Position::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance_to(&self, p: &Position) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn shares_edge_with(&self, other: &Rect) -> bool {
        let x_overlap = self.min.x < other.max.x - LEN_EPS && other.min.x < self.max.x - LEN_EPS;
        let y_overlap = self.min.y < other.max.y - LEN_EPS && other.min.y < self.max.y - LEN_EPS;
        let x_touch = (self.max.x - other.min.x).abs() < LEN_EPS
            || (other.max.x - self.min.x).abs() < LEN_EPS;
        let y_touch = (self.max.y - other.min.y).abs() < LEN_EPS
            || (other.max.y - self.min.y).abs() < LEN_EPS;
        (x_touch && y_overlap) || (y_touch && x_overlap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    pub zone: ZoneId,
    /// Cluster-head anchor.
    pub head_position: Position,
    /// Region the cluster head controls.
    pub bounds: Rect,
    pub members: Vec<NodeId>,
    pub min_threshold: usize,
    pub max_threshold: usize,
}

impl Cluster {
    pub fn new(id: ClusterId, zone: ZoneId, bounds: Rect, min_threshold: usize, max_threshold: usize) -> Self {
        Cluster {
            id,
            zone,
            head_position: bounds.center(),
            bounds,
            members: Vec::new(),
            min_threshold,
            max_threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn prefix(&self) -> HomePrefix {
        HomePrefix {
            zone: self.zone,
            cluster: self.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    /// The zone gateway (Gz) shares the zone's identifier.
    pub gateway_id: ZoneId,
    pub bounds: Rect,
    pub clusters: Vec<ClusterId>,
}

/// Field-wide physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub field_width: f64,
    pub field_height: f64,
    pub sensing_radius: f64,
    pub transmission_range: f64,
    pub grid_cell_size: f64,
    /// Bytes per packet.
    pub packet_size: u32,
    /// Joules per node at deployment.
    pub initial_energy: f64,
    /// Transmit power in watts.
    pub tx_power: f64,
    pub rng_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            field_width: 220.0,
            field_height: 220.0,
            sensing_radius: 5.0,
            transmission_range: 5.0,
            grid_cell_size: 2.0,
            packet_size: 2048,
            initial_energy: 6.0,
            tx_power: 1.18e-3,
            rng_seed: 1,
        }
    }
}

impl FieldConfig {
    pub fn bounds(&self) -> Rect {
        Rect::with_size(self.field_width, self.field_height)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let positive = [
            ("field_width", self.field_width),
            ("field_height", self.field_height),
            ("sensing_radius", self.sensing_radius),
            ("transmission_range", self.transmission_range),
            ("grid_cell_size", self.grid_cell_size),
            ("initial_energy", self.initial_energy),
            ("tx_power", self.tx_power),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                out.push(Violation::NonPositive { field: name, value });
            }
        }
        if self.packet_size == 0 {
            out.push(Violation::NonPositive {
                field: "packet_size",
                value: 0.0,
            });
        }
        if self.grid_cell_size > 0.0 {
            for (name, len) in [("field_width", self.field_width), ("field_height", self.field_height)] {
                if len > 0.0 && cells_along(len, self.grid_cell_size).is_none() {
                    out.push(Violation::GridNotDivisible {
                        dimension: name,
                        length: len,
                        cell: self.grid_cell_size,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidField(v))
        }
    }
}

/// Number of cells of size `cell` spanning `length`, if it divides evenly.
pub fn cells_along(length: f64, cell: f64) -> Option<usize> {
    let n = (length / cell).round();
    if n < 1.0 || (n * cell - length).abs() > LEN_EPS * length.max(1.0) {
        None
    } else {
        Some(n as usize)
    }
}

/// A single type-invariant violation found by [`validate_field`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositive { field: &'static str, value: f64 },
    GridNotDivisible { dimension: &'static str, length: f64, cell: f64 },
    OutOfBounds { node: NodeId, position: Position },
    NegativeEnergy { node: NodeId, energy: f64 },
    AliveWithoutEnergy { node: NodeId },
    DuplicateNodeId { node: NodeId },
    DuplicateMembership { node: NodeId, clusters: Vec<ClusterId> },
    UnknownMember { node: NodeId, cluster: ClusterId },
    ThresholdOrder { cluster: ClusterId, min: usize, max: usize },
    ClusterZoneMismatch { cluster: ClusterId, zones: Vec<ZoneId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive { field, value } => {
                write!(f, "{field} must be strictly positive (got {value})")
            }
            Violation::GridNotDivisible { dimension, length, cell } => {
                write!(f, "{dimension} {length} m is not a multiple of grid_cell_size {cell} m")
            }
            Violation::OutOfBounds { node, position } => {
                write!(f, "node {node} at {position} is outside the field")
            }
            Violation::NegativeEnergy { node, energy } => {
                write!(f, "node {node} has negative energy {energy}")
            }
            Violation::AliveWithoutEnergy { node } => {
                write!(f, "node {node} is alive with zero energy")
            }
            Violation::DuplicateNodeId { node } => write!(f, "node id {node} is used more than once"),
            Violation::DuplicateMembership { node, clusters } => {
                write!(f, "node {node} is a member of several clusters: {clusters:?}")
            }
            Violation::UnknownMember { node, cluster } => {
                write!(f, "cluster {cluster} lists unknown node {node}")
            }
            Violation::ThresholdOrder { cluster, min, max } => {
                write!(f, "cluster {cluster} has min_threshold {min} >= max_threshold {max}")
            }
            Violation::ClusterZoneMismatch { cluster, zones } => {
                write!(f, "cluster {cluster} must belong to exactly one zone, found {zones:?}")
            }
        }
    }
}

/// Index of the head nearest to `p`, lowest index on ties.
pub fn nearest_cluster_head(p: &Position, heads: &[Position]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, h) in heads.iter().enumerate() {
        let d = p.distance_sq(h);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::domain("nearest_cluster_head: empty head list"))
}

/// Checks every type invariant and reports all violations found.
pub fn validate_field(
    nodes: &[SensorNode],
    clusters: &[Cluster],
    zones: &[Zone],
    config: &FieldConfig,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = config.violations();
    let bounds = config.bounds();

    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.id) {
            out.push(Violation::DuplicateNodeId { node: n.id });
        }
        if !bounds.contains(&n.position) {
            out.push(Violation::OutOfBounds {
                node: n.id,
                position: n.position,
            });
        }
        if n.energy < 0.0 {
            out.push(Violation::NegativeEnergy {
                node: n.id,
                energy: n.energy,
            });
        } else if n.energy == 0.0 && n.alive {
            out.push(Violation::AliveWithoutEnergy { node: n.id });
        }
    }

    let mut owners: BTreeMap<NodeId, Vec<ClusterId>> = BTreeMap::new();
    for c in clusters {
        if c.min_threshold >= c.max_threshold {
            out.push(Violation::ThresholdOrder {
                cluster: c.id,
                min: c.min_threshold,
                max: c.max_threshold,
            });
        }
        for &m in &c.members {
            owners.entry(m).or_default().push(c.id);
            if !seen.contains(&m) {
                out.push(Violation::UnknownMember { node: m, cluster: c.id });
            }
        }
    }
    for (node, cs) in owners {
        if cs.len() > 1 {
            out.push(Violation::DuplicateMembership { node, clusters: cs });
        }
    }

    if !zones.is_empty() {
        for c in clusters {
            let homes: Vec<ZoneId> = zones
                .iter()
                .filter(|z| z.clusters.contains(&c.id))
                .map(|z| z.id)
                .collect();
            if homes.len() != 1 {
                out.push(Violation::ClusterZoneMismatch {
                    cluster: c.id,
                    zones: homes,
                });
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Rectangular partition of the field into zones, and of each zone into
/// clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub zones_x: usize,
    pub zones_y: usize,
    pub clusters_x: usize,
    pub clusters_y: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            zones_x: 2,
            zones_y: 1,
            clusters_x: 1,
            clusters_y: 5,
        }
    }
}

impl Layout {
    pub fn clusters_per_zone(&self) -> usize {
        self.clusters_x * self.clusters_y
    }

    pub fn zone_count(&self) -> usize {
        self.zones_x * self.zones_y
    }

    /// Builds zones and clusters (with empty member lists). Cluster ids are
    /// global and zone-major; within a zone they run along x first.
    pub fn build(
        &self,
        config: &FieldConfig,
        min_threshold: usize,
        max_threshold: usize,
    ) -> Result<(Vec<Zone>, Vec<Cluster>)> {
        if self.zones_x == 0 || self.zones_y == 0 || self.clusters_x == 0 || self.clusters_y == 0 {
            return Err(Error::config("layout counts must all be at least 1"));
        }
        let zw = config.field_width / self.zones_x as f64;
        let zh = config.field_height / self.zones_y as f64;
        let cw = zw / self.clusters_x as f64;
        let ch = zh / self.clusters_y as f64;
        for (name, len) in [("cluster width", cw), ("cluster height", ch)] {
            if cells_along(len, config.grid_cell_size).is_none() {
                return Err(Error::config(format!(
                    "{name} {len} m is not a multiple of grid_cell_size {} m",
                    config.grid_cell_size
                )));
            }
        }

        let mut zones = Vec::with_capacity(self.zone_count());
        let mut clusters = Vec::with_capacity(self.zone_count() * self.clusters_per_zone());
        for zy in 0..self.zones_y {
            for zx in 0..self.zones_x {
                let zid = ZoneId(zones.len() as u32);
                let zb = Rect::new(
                    zx as f64 * zw,
                    zy as f64 * zh,
                    (zx + 1) as f64 * zw,
                    (zy + 1) as f64 * zh,
                );
                let mut ids = Vec::new();
                for cy in 0..self.clusters_y {
                    for cx in 0..self.clusters_x {
                        let cid = ClusterId(clusters.len() as u32);
                        let cb = Rect::new(
                            zb.min.x + cx as f64 * cw,
                            zb.min.y + cy as f64 * ch,
                            zb.min.x + (cx + 1) as f64 * cw,
                            zb.min.y + (cy + 1) as f64 * ch,
                        );
                        clusters.push(Cluster::new(cid, zid, cb, min_threshold, max_threshold));
                        ids.push(cid);
                    }
                }
                zones.push(Zone {
                    id: zid,
                    gateway_id: zid,
                    bounds: zb,
                    clusters: ids,
                });
            }
        }
        Ok((zones, clusters))
    }
}
