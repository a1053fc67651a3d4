//! Scenario configuration: the complete, validated description of one
//! experiment run.
//!
//! Scenarios are TOML with strict key checking (unknown keys are errors, so
//! typos surface immediately). UE trajectories resolve first against the
//! file's own `trajectories` section, then against the built-in set from
//! `mobility::bundled_scenarios`. The default report period is 100 ms.

use crate::channel::{ChannelCfg, LinkBudget};
use crate::mac_sched::SchedConfig;
use crate::mobility::{self, Trajectory};
use crate::phy_frame::TddConfig;
use crate::ran_node::{Attach, DEFAULT_SDU_BITS};
use crate::xapp_kpm::XappCfg;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub id: u32,
    #[serde(rename = "type")]
    pub attach: Attach,
    pub offered_load_bps: u64,
    /// Name of a trajectory defined in this scenario or bundled.
    pub trajectory: String,
    #[serde(default = "default_sdu_bits")]
    pub sdu_size_bits: u32,
}

fn default_sdu_bits() -> u32 {
    DEFAULT_SDU_BITS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransportCfg {
    #[default]
    Inproc,
    Socket {
        address: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub tdd: TddConfig,
    #[serde(default)]
    pub channel: ChannelCfg,
    pub budget: LinkBudget,
    #[serde(default)]
    pub sched: SchedConfig,
    /// gNB antenna position, local Cartesian meters.
    pub gnb_pos: [f64; 3],
    pub ues: Vec<UeSpec>,
    #[serde(default)]
    pub trajectories: BTreeMap<String, Trajectory>,
    #[serde(default)]
    pub xapp: XappCfg,
    #[serde(default)]
    pub transport: TransportCfg,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

impl Scenario {
    /// Resolves a trajectory name: scenario-defined first, bundled second.
    pub fn resolve_trajectory(&self, name: &str) -> Option<Trajectory> {
        if let Some(t) = self.trajectories.get(name) {
            let mut t = t.clone();
            if t.name.is_empty() {
                t.name = name.to_string();
            }
            return Some(t);
        }
        mobility::bundled_scenarios().get(name).cloned()
    }

    /// Full validation; returns human-facing warnings (teleporting hovers).
    pub fn validate(&self) -> Result<Vec<String>, ScenarioError> {
        let mut warnings = Vec::new();
        self.tdd
            .validate()
            .map_err(|e| invalid("tdd", e.to_string()))?;
        self.channel
            .validate()
            .map_err(|e| invalid("channel", e.to_string()))?;
        self.budget
            .validate()
            .map_err(|e| invalid("budget", e.to_string()))?;
        if !(self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be > 0"));
        }
        let slot_us = u64::from(self.tdd.slot_us());
        if (self.xapp.report_period_ms * 1000) % slot_us != 0 || self.xapp.report_period_ms == 0 {
            return Err(invalid(
                "xapp.report_period_ms",
                format!("must be a positive multiple of the {slot_us} us slot"),
            ));
        }
        if !(self.xapp.bin_m > 0.0) {
            return Err(invalid("xapp.bin_m", "must be > 0"));
        }
        if (self.channel.update_period_ms * 1000) % slot_us != 0 {
            return Err(invalid(
                "channel.update_period_ms",
                format!("must be a multiple of the {slot_us} us slot"),
            ));
        }
        for (name, traj) in &self.trajectories {
            traj.validate()
                .map_err(|e| invalid(&format!("trajectories.{name}"), e))?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, ue) in self.ues.iter().enumerate() {
            if !seen.insert(ue.id) {
                return Err(invalid(&format!("ues[{i}].id"), "duplicate ue id"));
            }
            if ue.sdu_size_bits == 0 {
                return Err(invalid(&format!("ues[{i}].sdu_size_bits"), "must be > 0"));
            }
            let Some(traj) = self.resolve_trajectory(&ue.trajectory) else {
                return Err(invalid(
                    &format!("ues[{i}].trajectory"),
                    format!(
                        "references undefined trajectory {:?} (not in this file or bundled)",
                        ue.trajectory
                    ),
                ));
            };
            if traj.teleports() {
                warnings.push(format!(
                    "trajectory {:?} hovers without speed_mps: transits are instantaneous",
                    ue.trajectory
                ));
            }
        }
        if let TransportCfg::Socket { address } = &self.transport {
            if address.parse::<std::net::SocketAddr>().is_err() {
                return Err(invalid("transport.address", "not a socket address"));
            }
        }
        Ok(warnings)
    }
}

/// Parses and validates a scenario file. Unknown keys are errors; every
/// failure names the offending key.
pub fn load_scenario(path: &Path) -> Result<(Scenario, Vec<String>), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario_str(&text, &path.display().to_string())
}

pub fn load_scenario_str(
    text: &str,
    path: &str,
) -> Result<(Scenario, Vec<String>), ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })?;
    let warnings = scenario.validate()?;
    Ok((scenario, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"
            name = "mini"
            seed = 1
            duration_s = 1.0
            gnb_pos = [0.0, 0.0, 2.5]

            [tdd]
            scs_khz = 30
            period_ms = 5
            full_dl_slots = 7
            extra_dl_symbols = 6
            full_ul_slots = 2
            extra_ul_symbols = 4
            n_prb = 106

            [budget]
            tx_power_dbm = -27.0
            tx_gain_db = 46.0
            rx_gain_db = 22.0
            noise_figure_db = 7.0
            bandwidth_hz = 40e6

            [[ues]]
            id = 1
            type = "ground"
            offered_load_bps = 2000000
            trajectory = "ground_static"
        "#
        .to_string()
    }

    #[test]
    fn minimal_scenario_loads_with_bundled_trajectory() {
        let (s, warnings) = load_scenario_str(&minimal(), "mini.toml").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(s.ues.len(), 1);
        assert_eq!(s.xapp.report_period_ms, 100);
        assert_eq!(s.transport, TransportCfg::Inproc);
        let traj = s.resolve_trajectory("ground_static").unwrap();
        assert_eq!(traj.waypoints[0].pos, [20.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let text = minimal().replace("scs_khz", "scs_khZ");
        let err = load_scenario_str(&text, "mini.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scs_khZ"), "error was: {msg}");
    }

    #[test]
    fn dangling_trajectory_named_in_error() {
        let text = minimal().replace("ground_static", "missing");
        let err = load_scenario_str(&text, "mini.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ues[0].trajectory"), "error was: {msg}");
        assert!(msg.contains("missing"), "error was: {msg}");
    }

    #[test]
    fn file_trajectories_shadow_bundled() {
        let text = format!(
            "{}\n{}",
            minimal(),
            r#"
            [trajectories.ground_static]
            mode = "static"
            waypoints = [{ pos = [5.0, 0.0, 1.0] }]
        "#
        );
        let (s, _) = load_scenario_str(&text, "mini.toml").unwrap();
        let traj = s.resolve_trajectory("ground_static").unwrap();
        assert_eq!(traj.waypoints[0].pos, [5.0, 0.0, 1.0]);
    }

    #[test]
    fn bad_report_period_rejected() {
        let text = format!("{}\n[xapp]\nreport_period_ms = 0\n", minimal());
        let err = load_scenario_str(&text, "mini.toml").unwrap_err();
        assert!(err.to_string().contains("report_period_ms"));
    }

    #[test]
    fn socket_transport_parses() {
        let text = format!(
            "{}\n[transport]\nmode = \"socket\"\naddress = \"127.0.0.1:0\"\n",
            minimal()
        );
        let (s, _) = load_scenario_str(&text, "mini.toml").unwrap();
        assert_eq!(
            s.transport,
            TransportCfg::Socket {
                address: "127.0.0.1:0".into()
            }
        );
    }
}
