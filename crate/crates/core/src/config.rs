//! Scenario files: TOML with one table per subsystem. Every key is optional
//! and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::engine::ScenarioConfig;
use crate::error::{Error, Result};
use crate::protocol::ProtocolParams;
use crate::relocation::RelocationParams;
use crate::ssoa::SsoaParams;
use crate::world::{FieldConfig, Layout};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub field: FieldConfig,
    pub layout: Layout,
    pub scenario: ScenarioConfig,
    pub relocation: RelocationParams,
    pub protocol: ProtocolParams,
    pub energy: EnergyModel,
    pub ssoa: SsoaParams,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml_str(&text)
    }

    /// Copy with every derived default filled in.
    pub fn resolved(&self) -> Config {
        let mut c = self.clone();
        c.relocation.resolve(c.field.sensing_radius);
        c.protocol.resolve(c.field.packet_size);
        if c.ssoa.beacon_bytes.is_none() {
            c.ssoa.beacon_bytes = Some(c.field.packet_size);
        }
        if c.ssoa.neighbor_range.is_none() {
            c.ssoa.neighbor_range = Some(2.0 * c.field.sensing_radius);
        }
        if c.ssoa.phase1_step.is_none() {
            c.ssoa.phase1_step = Some(c.field.sensing_radius);
        }
        c
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self.field.violations().iter().map(|x| format!("field: {x}")).collect();
        let s = &self.scenario;
        if s.min_threshold >= s.max_threshold {
            v.push(format!(
                "scenario.min_threshold ({}) must be below scenario.max_threshold ({})",
                s.min_threshold, s.max_threshold
            ));
        }
        if v.is_empty() {
            if let Err(e) = self.layout.build(&self.field, 0, 1) {
                v.push(format!("layout: {e}"));
            }
        }
        let clusters = self.layout.zone_count() * self.layout.clusters_per_zone();
        if s.test_cluster >= clusters {
            v.push(format!(
                "scenario.test_cluster {} is out of range (layout has {clusters} clusters)",
                s.test_cluster
            ));
        }
        if s.nodes_per_zone == 0 {
            v.push("scenario.nodes_per_zone must be at least 1".into());
        }
        let test_nodes = s.test_cluster_size(&self.layout);
        if test_nodes == 0 {
            v.push("the test cluster must hold at least one node".into());
        }
        if s.holes > test_nodes {
            v.push(format!(
                "scenario.holes ({}) exceeds the test cluster's {test_nodes} nodes",
                s.holes
            ));
        }
        if s.max_steps == 0 {
            v.push("scenario.max_steps must be at least 1".into());
        }
        v.extend(self.relocation.violations());
        v.extend(self.protocol.violations());
        v.extend(self.energy.violations());
        v.extend(self.ssoa.violations());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }
}
