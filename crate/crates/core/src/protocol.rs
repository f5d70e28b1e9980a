//! Registration of a node that crosses into a new cluster.
//!
//! The destination head asks its zone gateway for the node's identity. A node
//! from the same zone is authenticated by that gateway directly; a node from
//! another zone costs a second request/acknowledge pair with the node's home
//! gateway and a full authentication. Messages are counted, not transmitted.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::world::{Cluster, ClusterId, HomePrefix, NodeId, Position, SensorNode, Zone, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Node(NodeId),
    Head(ClusterId),
    Gateway(ZoneId),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Node(n) => write!(f, "{n}"),
            Entity::Head(c) => write!(f, "ch:{c}"),
            Entity::Gateway(z) => write!(f, "gz:{z}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    IdReq,
    ReqAck,
    Register,
    CacheUpdate,
}

impl MessageKind {
    /// Whether the message crosses the head/gateway backbone.
    pub fn is_backbone(self) -> bool {
        matches!(self, MessageKind::IdReq | MessageKind::ReqAck)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub from: Entity,
    pub to: Entity,
    pub payload_bytes: u32,
    pub includes_position: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub node: NodeId,
    pub home_prefix: HomePrefix,
    pub position: Position,
    pub owning_ch: ClusterId,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegistrationPath {
    IntraZone,
    InterZone,
}

impl fmt::Display for RegistrationPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegistrationPath::IntraZone => "intra_zone",
            RegistrationPath::InterZone => "inter_zone",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuthKind {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationOutcome {
    pub node: NodeId,
    pub from: HomePrefix,
    pub to: HomePrefix,
    pub path: RegistrationPath,
    pub messages: Vec<ProtocolMessage>,
    /// Backbone transmissions (identity requests and acknowledgements).
    pub hops: u32,
    pub latency_ms: f64,
    pub auth: AuthKind,
}

impl RegistrationOutcome {
    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.payload_bytes as u64).sum()
    }

    /// Bytes carried between heads and gateways.
    pub fn backbone_bytes(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.kind.is_backbone())
            .map(|m| m.payload_bytes as u64)
            .sum()
    }

    /// Bytes the migrating node transmits itself.
    pub fn node_bytes(&self) -> u64 {
        self.messages
            .iter()
            .filter(|m| matches!(m.from, Entity::Node(_)))
            .map(|m| m.payload_bytes as u64)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("registration refused: {node} carries prefix {prefix} unknown to every gateway")]
    Refused { node: NodeId, prefix: HomePrefix },
    #[error("admission deferred: cluster {0} is at its maximum")]
    AdmissionDeferred(ClusterId),
    #[error("unknown destination cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("node {0} is dead")]
    DeadNode(NodeId),
}

/// Timing and payload settings. `None` payloads fall back to the field's
/// packet size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub link_latency_ms: f64,
    pub auth_fast_ms: f64,
    pub auth_full_ms: f64,
    pub message_bytes: Option<u32>,
    pub register_bytes: Option<u32>,
    /// Wall time represented by one simulation step.
    pub ms_per_step: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            link_latency_ms: 2.0,
            auth_fast_ms: 1.0,
            auth_full_ms: 4.0,
            message_bytes: None,
            register_bytes: None,
            ms_per_step: 1.0,
        }
    }
}

impl ProtocolParams {
    pub fn resolve(&mut self, packet_size: u32) {
        self.message_bytes.get_or_insert(packet_size);
        self.register_bytes.get_or_insert(packet_size);
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("link_latency_ms", self.link_latency_ms),
            ("auth_fast_ms", self.auth_fast_ms),
            ("auth_full_ms", self.auth_full_ms),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("protocol.{name} must be non-negative (got {x})"));
            }
        }
        if !(self.ms_per_step > 0.0 && self.ms_per_step.is_finite()) {
            v.push(format!("protocol.ms_per_step must be positive (got {})", self.ms_per_step));
        }
        v
    }

    /// Whole simulation steps a registration keeps the node waiting.
    pub fn steps_for(&self, latency_ms: f64) -> u64 {
        (latency_ms / self.ms_per_step).ceil() as u64
    }
}

/// `hops * link + auth`, with the auth term chosen by the outcome.
pub fn registration_latency(
    outcome: &RegistrationOutcome,
    link_latency_ms: f64,
    auth_fast_ms: f64,
    auth_full_ms: f64,
) -> Result<f64> {
    if link_latency_ms < 0.0 || auth_fast_ms < 0.0 || auth_full_ms < 0.0 {
        return Err(Error::domain("latency parameters must be non-negative"));
    }
    let auth = match outcome.auth {
        AuthKind::Fast => auth_fast_ms,
        AuthKind::Full => auth_full_ms,
    };
    Ok(outcome.hops as f64 * link_latency_ms + auth)
}

/// Head and gateway caches for every cluster and zone, plus the handshake.
#[derive(Debug, Clone)]
pub struct Registrar {
    cluster_zone: BTreeMap<ClusterId, ZoneId>,
    ch_cache: BTreeMap<ClusterId, BTreeMap<NodeId, CacheEntry>>,
    gz_cache: BTreeMap<ZoneId, BTreeMap<NodeId, CacheEntry>>,
    max_threshold: usize,
    params: ProtocolParams,
    message_bytes: u32,
    register_bytes: u32,
}

impl Registrar {
    pub fn new(clusters: &[Cluster], zones: &[Zone], max_threshold: usize, params: ProtocolParams, packet_size: u32) -> Self {
        let mut resolved = params;
        resolved.resolve(packet_size);
        let message_bytes = resolved.message_bytes.unwrap_or(packet_size);
        let register_bytes = resolved.register_bytes.unwrap_or(packet_size);
        Registrar {
            cluster_zone: clusters.iter().map(|c| (c.id, c.zone)).collect(),
            ch_cache: clusters.iter().map(|c| (c.id, BTreeMap::new())).collect(),
            gz_cache: zones.iter().map(|z| (z.id, BTreeMap::new())).collect(),
            max_threshold,
            params: resolved,
            message_bytes,
            register_bytes,
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    fn knows(&self, prefix: &HomePrefix) -> bool {
        self.cluster_zone.get(&prefix.cluster) == Some(&prefix.zone)
    }

    fn write(&mut self, entry: CacheEntry, zone: ZoneId) {
        self.ch_cache.entry(entry.owning_ch).or_default().insert(entry.node, entry);
        self.gz_cache.entry(zone).or_default().insert(entry.node, entry);
    }

    /// Records a node at its home cluster without any messaging.
    pub fn enrol(&mut self, node: &SensorNode, step: u64) -> Result<()> {
        if !self.knows(&node.home_prefix) {
            return Err(RegistrationError::Refused {
                node: node.id,
                prefix: node.home_prefix,
            }
            .into());
        }
        self.write(
            CacheEntry {
                node: node.id,
                home_prefix: node.home_prefix,
                position: node.position,
                owning_ch: node.home_prefix.cluster,
                timestamp: step,
            },
            node.home_prefix.zone,
        );
        Ok(())
    }

    /// Runs the handshake for `node` arriving at `dest`, whose current member
    /// count is `dest_load`. On success the node's prefix names `dest`, it is
    /// flagged registered, and both destination caches hold its new position.
    pub fn register_node(
        &mut self,
        node: &mut SensorNode,
        dest: ClusterId,
        dest_load: usize,
        step: u64,
    ) -> std::result::Result<RegistrationOutcome, RegistrationError> {
        if !node.alive {
            return Err(RegistrationError::DeadNode(node.id));
        }
        let Some(&dest_zone) = self.cluster_zone.get(&dest) else {
            return Err(RegistrationError::UnknownCluster(dest));
        };
        let origin = node.home_prefix;
        if !self.knows(&origin) {
            return Err(RegistrationError::Refused {
                node: node.id,
                prefix: origin,
            });
        }
        if origin.cluster != dest && dest_load >= self.max_threshold {
            return Err(RegistrationError::AdmissionDeferred(dest));
        }

        let ch = Entity::Head(dest);
        let gz = Entity::Gateway(dest_zone);
        let backbone = |kind, from, to| ProtocolMessage {
            kind,
            from,
            to,
            payload_bytes: self.message_bytes,
            includes_position: kind == MessageKind::ReqAck,
        };
        let mut messages = vec![ProtocolMessage {
            kind: MessageKind::Register,
            from: Entity::Node(node.id),
            to: ch,
            payload_bytes: self.register_bytes,
            includes_position: true,
        }];
        let (path, auth) = if origin.zone == dest_zone {
            messages.push(backbone(MessageKind::IdReq, ch, gz));
            messages.push(backbone(MessageKind::ReqAck, gz, ch));
            (RegistrationPath::IntraZone, AuthKind::Fast)
        } else {
            let home = Entity::Gateway(origin.zone);
            messages.push(backbone(MessageKind::IdReq, ch, gz));
            messages.push(backbone(MessageKind::IdReq, gz, home));
            messages.push(backbone(MessageKind::ReqAck, home, gz));
            messages.push(backbone(MessageKind::ReqAck, gz, ch));
            (RegistrationPath::InterZone, AuthKind::Full)
        };
        for at in [ch, gz] {
            messages.push(ProtocolMessage {
                kind: MessageKind::CacheUpdate,
                from: at,
                to: at,
                payload_bytes: 0,
                includes_position: true,
            });
        }
        let hops = messages.iter().filter(|m| m.kind.is_backbone()).count() as u32;

        let to = HomePrefix {
            zone: dest_zone,
            cluster: dest,
        };
        if origin.cluster != dest {
            if let Some(c) = self.ch_cache.get_mut(&origin.cluster) {
                c.remove(&node.id);
            }
            if origin.zone != dest_zone {
                if let Some(g) = self.gz_cache.get_mut(&origin.zone) {
                    g.remove(&node.id);
                }
            }
        }
        node.home_prefix = to;
        node.registered = true;
        self.write(
            CacheEntry {
                node: node.id,
                home_prefix: to,
                position: node.position,
                owning_ch: dest,
                timestamp: step,
            },
            dest_zone,
        );

        let mut outcome = RegistrationOutcome {
            node: node.id,
            from: origin,
            to,
            path,
            messages,
            hops,
            latency_ms: 0.0,
            auth,
        };
        let p = &self.params;
        outcome.latency_ms = registration_latency(&outcome, p.link_latency_ms, p.auth_fast_ms, p.auth_full_ms)
            .expect("latency parameters validated at construction");
        Ok(outcome)
    }

    /// Most recent entry for `node` at gateway `gz`.
    pub fn lookup_cache(&self, gz: ZoneId, node: NodeId) -> Option<&CacheEntry> {
        self.gz_cache.get(&gz)?.get(&node)
    }

    pub fn lookup_head_cache(&self, ch: ClusterId, node: NodeId) -> Option<&CacheEntry> {
        self.ch_cache.get(&ch)?.get(&node)
    }

    /// Updates the position a head and its gateway hold for a resident node.
    pub fn refresh_position(&mut self, node: &SensorNode, step: u64) {
        let prefix = node.home_prefix;
        for entry in [
            self.ch_cache.get_mut(&prefix.cluster).and_then(|c| c.get_mut(&node.id)),
            self.gz_cache.get_mut(&prefix.zone).and_then(|g| g.get_mut(&node.id)),
        ]
        .into_iter()
        .flatten()
        {
            entry.position = node.position;
            entry.timestamp = step;
        }
    }

    /// Every head entry matches its gateway entry in position, prefix and
    /// owner.
    pub fn caches_consistent(&self) -> bool {
        self.ch_cache.iter().all(|(ch, entries)| {
            let zone = self.cluster_zone[ch];
            entries.values().all(|e| {
                self.gz_cache
                    .get(&zone)
                    .and_then(|g| g.get(&e.node))
                    .is_some_and(|g| g.position == e.position && g.home_prefix == e.home_prefix && g.owning_ch == *ch)
            })
        })
    }
}
