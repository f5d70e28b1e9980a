//! Threshold-driven cluster load balancing.
//!
//! The manager keeps one member list per cluster and plans single-sensor
//! migrations that push over-full clusters below `max_threshold` and pull
//! under-full clusters up to `min_threshold`. Planning is pure; applying a
//! plan is a separate step so the simulation engine can interleave physical
//! movement and registration.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::world::{NodeId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Migration {
    pub sensor: NodeId,
    /// Index of the donating cluster.
    pub from: usize,
    /// Index of the receiving cluster.
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MigrationPlan {
    pub moves: Vec<Migration>,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    /// CSV rows `sensor_id,from,to`, without a header.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for m in &self.moves {
            let _ = writeln!(s, "{},{},{}", m.sensor.0, m.from, m.to);
        }
        s
    }
}

/// Appends `sensor`; rejects a sensor that is already a member.
pub fn add_sensor(members: &mut Vec<NodeId>, sensor: NodeId) -> Result<()> {
    if members.contains(&sensor) {
        return Err(Error::domain(format!("sensor {sensor} is already a member")));
    }
    members.push(sensor);
    Ok(())
}

pub fn remove_sensor(members: &mut Vec<NodeId>, index: usize) -> Result<NodeId> {
    if index >= members.len() {
        return Err(Error::domain(format!(
            "index {index} out of range for cluster of {}",
            members.len()
        )));
    }
    Ok(members.remove(index))
}

pub fn move_sensor(source: &mut Vec<NodeId>, target: &mut Vec<NodeId>, index: usize) -> Result<NodeId> {
    let sensor = *source.get(index).ok_or_else(|| {
        Error::domain(format!(
            "index {index} out of range for cluster of {}",
            source.len()
        ))
    })?;
    add_sensor(target, sensor)?;
    source.remove(index);
    Ok(sensor)
}

/// Index of the smallest cluster, lowest index on ties.
pub fn find_target_cluster(sizes: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::domain("find_target_cluster: no clusters"))
}

/// Index of the largest cluster, lowest index on ties.
pub fn find_source_cluster(sizes: &[usize]) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::domain("find_source_cluster: no clusters"))
}

/// One balancing pass over a flat list of clusters.
pub fn manage_cluster_load(clusters: &[Vec<NodeId>], min_threshold: usize, max_threshold: usize) -> Result<MigrationPlan> {
    let zones = vec![ZoneId(0); clusters.len()];
    plan_pass(clusters, &zones, min_threshold, max_threshold)
}

fn check_thresholds(min_threshold: usize, max_threshold: usize) -> Result<()> {
    if min_threshold >= max_threshold {
        return Err(Error::domain(format!(
            "min_threshold {min_threshold} must be below max_threshold {max_threshold}"
        )));
    }
    Ok(())
}

/// Candidate lookup that prefers clusters in `zone`, falling back to the
/// whole field when the same-zone choice is unusable.
fn pick(
    sizes: &[usize],
    zones: &[ZoneId],
    zone: ZoneId,
    finder: fn(&[usize]) -> Result<usize>,
    usable: impl Fn(usize) -> bool,
) -> Option<usize> {
    let local: Vec<usize> = (0..sizes.len()).filter(|&k| zones[k] == zone).collect();
    let local_sizes: Vec<usize> = local.iter().map(|&k| sizes[k]).collect();
    if let Ok(k) = finder(&local_sizes) {
        if usable(local[k]) {
            return Some(local[k]);
        }
    }
    let k = finder(sizes).ok()?;
    usable(k).then_some(k)
}

fn plan_pass(
    clusters: &[Vec<NodeId>],
    zones: &[ZoneId],
    min_threshold: usize,
    max_threshold: usize,
) -> Result<MigrationPlan> {
    check_thresholds(min_threshold, max_threshold)?;
    let mut lists: Vec<Vec<NodeId>> = clusters.to_vec();
    let mut moved = BTreeSet::new();
    let mut plan = MigrationPlan::default();

    let first_unmoved = |list: &[NodeId], moved: &BTreeSet<NodeId>| list.iter().position(|s| !moved.contains(s));

    for i in 0..lists.len() {
        let size = lists[i].len();
        if size > max_threshold {
            let sizes: Vec<usize> = lists.iter().map(Vec::len).collect();
            let target = pick(&sizes, zones, zones[i], find_target_cluster, |t| {
                t != i && sizes[t] < max_threshold
            });
            if let (Some(t), Some(idx)) = (target, first_unmoved(&lists[i], &moved)) {
                let sensor = lists[i].remove(idx);
                lists[t].push(sensor);
                moved.insert(sensor);
                plan.moves.push(Migration { sensor, from: i, to: t });
            }
        } else if size < min_threshold {
            let sizes: Vec<usize> = lists.iter().map(Vec::len).collect();
            let source = pick(&sizes, zones, zones[i], find_source_cluster, |s| {
                s != i && sizes[s] > min_threshold
            });
            if let Some(s) = source {
                if let Some(idx) = first_unmoved(&lists[s], &moved) {
                    let sensor = lists[s].remove(idx);
                    lists[i].push(sensor);
                    moved.insert(sensor);
                    plan.moves.push(Migration { sensor, from: s, to: i });
                }
            }
        }
    }
    Ok(plan)
}

/// Owns cluster memberships and thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterManager {
    min_threshold: usize,
    max_threshold: usize,
    clusters: Vec<Vec<NodeId>>,
    zones: Vec<ZoneId>,
}

impl ClusterManager {
    pub fn new(min_threshold: usize, max_threshold: usize) -> Result<Self> {
        check_thresholds(min_threshold, max_threshold)?;
        Ok(ClusterManager {
            min_threshold,
            max_threshold,
            clusters: Vec::new(),
            zones: Vec::new(),
        })
    }

    pub fn min_threshold(&self) -> usize {
        self.min_threshold
    }

    pub fn max_threshold(&self) -> usize {
        self.max_threshold
    }

    /// Adds an empty cluster in `zone` and returns its index.
    pub fn add_cluster(&mut self, zone: ZoneId) -> usize {
        self.clusters.push(Vec::new());
        self.zones.push(zone);
        self.clusters.len() - 1
    }

    pub fn members(&self, cluster: usize) -> &[NodeId] {
        &self.clusters[cluster]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn cluster_of(&self, sensor: NodeId) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&sensor))
    }

    fn check_cluster(&self, cluster: usize) -> Result<()> {
        if cluster >= self.clusters.len() {
            return Err(Error::domain(format!("unknown cluster index {cluster}")));
        }
        Ok(())
    }

    pub fn add_sensor(&mut self, cluster: usize, sensor: NodeId) -> Result<()> {
        self.check_cluster(cluster)?;
        if let Some(c) = self.cluster_of(sensor) {
            return Err(Error::domain(format!("sensor {sensor} already belongs to cluster {c}")));
        }
        add_sensor(&mut self.clusters[cluster], sensor)
    }

    pub fn remove_sensor(&mut self, cluster: usize, index: usize) -> Result<NodeId> {
        self.check_cluster(cluster)?;
        remove_sensor(&mut self.clusters[cluster], index)
    }

    /// Drops `sensor` wherever it is a member (node death).
    pub fn forget(&mut self, sensor: NodeId) -> bool {
        for c in &mut self.clusters {
            if let Some(k) = c.iter().position(|&s| s == sensor) {
                c.remove(k);
                return true;
            }
        }
        false
    }

    pub fn move_sensor(&mut self, source: usize, target: usize, index: usize) -> Result<NodeId> {
        self.check_cluster(source)?;
        self.check_cluster(target)?;
        if source == target {
            let len = self.clusters[source].len();
            if index >= len {
                return Err(Error::domain(format!("index {index} out of range for cluster of {len}")));
            }
            let s = self.clusters[source].remove(index);
            self.clusters[source].push(s);
            return Ok(s);
        }
        let (a, b) = if source < target {
            let (lo, hi) = self.clusters.split_at_mut(target);
            (&mut lo[source], &mut hi[0])
        } else {
            let (lo, hi) = self.clusters.split_at_mut(source);
            (&mut hi[0], &mut lo[target])
        };
        move_sensor(a, b, index)
    }

    /// One balancing pass; same-zone candidates are preferred over other
    /// zones.
    pub fn plan(&self) -> MigrationPlan {
        plan_pass(&self.clusters, &self.zones, self.min_threshold, self.max_threshold)
            .expect("thresholds validated at construction")
    }

    /// Applies a plan, optionally substituting the migrating sensor per move.
    pub fn apply(&mut self, plan: &MigrationPlan) -> Result<()> {
        for m in &plan.moves {
            let idx = self.clusters[m.from]
                .iter()
                .position(|&s| s == m.sensor)
                .ok_or_else(|| Error::domain(format!("sensor {} not in cluster {}", m.sensor, m.from)))?;
            self.move_sensor(m.from, m.to, idx)?;
        }
        Ok(())
    }

    /// Plans and applies passes until a pass is empty or `max_rounds` passes
    /// have been applied. Returns the number of passes run.
    pub fn run_to_stability(&mut self, max_rounds: usize) -> Result<usize> {
        if max_rounds == 0 {
            return Err(Error::domain("max_rounds must be at least 1"));
        }
        let mut rounds = 0;
        while rounds < max_rounds {
            rounds += 1;
            let plan = self.plan();
            if plan.is_empty() {
                break;
            }
            self.apply(&plan)?;
        }
        Ok(rounds)
    }

    pub fn all_in_range(&self) -> bool {
        self.clusters
            .iter()
            .all(|c| (self.min_threshold..=self.max_threshold).contains(&c.len()))
    }
}
