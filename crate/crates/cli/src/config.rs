//! Experiment config files.
//!
//! A TOML document with the sections `[mesh]`, `[router]`, `[policy]`,
//! `[traffic]` and `[run]`. Every key is optional and unknown keys are
//! rejected. Defaults:
//!
//! ```toml
//! [mesh]
//! width = 8
//! height = 8
//!
//! [router]
//! vcs_per_port = 4
//! buffer_depth = 4
//!
//! [policy]
//! kind = "qrasp"
//! # alpha, gamma: per-policy defaults when omitted
//! mu = 0.1
//! shared_path = true
//! count_arriving_vc = true
//! epsilon = 0.0
//! learning_queue_capacity = 4
//! crq_half_life = 512.0
//! crq_floor = 0.0625
//!
//! [traffic]
//! pattern = "uniform"      # or phases = ["transpose", "bit_reversal", "butterfly"]
//! phase_cycles = 100000    # only with phases
//! injection_rate = 0.02    # flits per node per cycle
//! packet_len = 4
//!
//! [run]
//! warmup_cycles = 10000
//! measure_cycles = 100000
//! drain_timeout = 50000
//! window_cycles = 1000
//! seed = 1
//! ```

use std::fmt;
use std::path::Path;

use qnoc::{
    MeshConfig, PatternKind, Phase, PolicyConfig, PolicyKind, RouterConfig, SimConfig,
    TrafficSchedule,
};
use serde::{Deserialize, Serialize};

/// Bad or unreadable config; maps to its own exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub width: usize,
    pub height: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        let m = MeshConfig::default();
        MeshSection {
            width: m.width,
            height: m.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterSection {
    pub vcs_per_port: usize,
    pub buffer_depth: usize,
}

impl Default for RouterSection {
    fn default() -> Self {
        let r = RouterConfig::default();
        RouterSection {
            vcs_per_port: r.vcs_per_port,
            buffer_depth: r.buffer_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub mu: f64,
    pub shared_path: bool,
    pub count_arriving_vc: bool,
    pub epsilon: f64,
    pub learning_queue_capacity: usize,
    pub crq_half_life: f64,
    pub crq_floor: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = PolicyConfig::default();
        PolicySection {
            kind: p.kind,
            alpha: p.alpha,
            gamma: p.gamma,
            mu: p.mu,
            shared_path: p.shared_path,
            count_arriving_vc: p.count_arriving_vc,
            epsilon: p.epsilon,
            learning_queue_capacity: p.learning_queue_capacity,
            crq_half_life: p.crq_half_life,
            crq_floor: p.crq_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<PatternKind>>,
    pub phase_cycles: u64,
    pub injection_rate: f64,
    pub packet_len: usize,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            pattern: None,
            phases: None,
            phase_cycles: 100_000,
            injection_rate: 0.02,
            packet_len: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub warmup_cycles: u64,
    pub measure_cycles: u64,
    pub drain_timeout: u64,
    pub window_cycles: u64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        let s = SimConfig::default();
        RunSection {
            warmup_cycles: s.warmup_cycles,
            measure_cycles: s.measure_cycles,
            drain_timeout: s.drain_timeout,
            window_cycles: s.window_cycles,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub mesh: MeshSection,
    pub router: RouterSection,
    pub policy: PolicySection,
    pub traffic: TrafficSection,
    pub run: RunSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        ConfigFile::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// The config as TOML, for provenance headers.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Result<TrafficSchedule, ConfigError> {
        let t = &self.traffic;
        let phases = match (&t.pattern, &t.phases) {
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "[traffic]: set either `pattern` or `phases`, not both".into(),
                ))
            }
            (Some(p), None) => {
                return Ok(TrafficSchedule::fixed(*p, t.injection_rate, t.packet_len))
            }
            (None, None) => {
                return Ok(TrafficSchedule::fixed(
                    PatternKind::Uniform,
                    t.injection_rate,
                    t.packet_len,
                ))
            }
            (None, Some(ps)) => ps,
        };
        Ok(TrafficSchedule {
            phases: phases
                .iter()
                .map(|&pattern| Phase {
                    pattern,
                    cycles: t.phase_cycles,
                })
                .collect(),
            injection_rate: t.injection_rate,
            packet_len: t.packet_len,
        })
    }

    pub fn to_sim(&self) -> Result<SimConfig, ConfigError> {
        let p = &self.policy;
        let cfg = SimConfig {
            mesh: MeshConfig {
                width: self.mesh.width,
                height: self.mesh.height,
            },
            router: RouterConfig {
                vcs_per_port: self.router.vcs_per_port,
                buffer_depth: self.router.buffer_depth,
            },
            policy: PolicyConfig {
                kind: p.kind,
                alpha: p.alpha,
                gamma: p.gamma,
                mu: p.mu,
                shared_path: p.shared_path,
                count_arriving_vc: p.count_arriving_vc,
                epsilon: p.epsilon,
                learning_queue_capacity: p.learning_queue_capacity,
                crq_half_life: p.crq_half_life,
                crq_floor: p.crq_floor,
                cost_override: None,
            },
            traffic: self.schedule()?,
            warmup_cycles: self.run.warmup_cycles,
            measure_cycles: self.run.measure_cycles,
            drain_timeout: self.run.drain_timeout,
            window_cycles: self.run.window_cycles,
            seed: self.run.seed,
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_engine_defaults() {
        let sim = ConfigFile::parse("").unwrap().to_sim().unwrap();
        assert_eq!(sim, SimConfig::default());
    }

    #[test]
    fn typo_names_key_and_line() {
        let err = ConfigFile::parse("[policy]\nkind = \"qr\"\nalhpa = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alhpa"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(ConfigFile::parse("[mesh]\nwidth = 4\n[extra]\nx = 1\n").is_err());
    }

    #[test]
    fn phases_build_an_interval_schedule() {
        let c = ConfigFile::parse(
            "[traffic]\nphases = [\"transpose\", \"butterfly\"]\nphase_cycles = 500\ninjection_rate = 0.1\n",
        )
        .unwrap();
        let s = c.schedule().unwrap();
        assert_eq!(s.label(), "transpose+butterfly");
        assert_eq!(s.boundaries(2_000), vec![500, 1_000, 1_500]);
    }

    #[test]
    fn pattern_and_phases_conflict() {
        let c = ConfigFile::parse("[traffic]\npattern = \"transpose\"\nphases = [\"butterfly\"]\n")
            .unwrap();
        assert!(c.schedule().is_err());
    }

    #[test]
    fn invalid_values_surface_engine_errors() {
        let c = ConfigFile::parse("[mesh]\nwidth = 1\n").unwrap();
        assert!(c.to_sim().is_err());
        let c = ConfigFile::parse("[policy]\nalpha = 1.5\n").unwrap();
        assert!(c.to_sim().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = ConfigFile::parse(
            "[policy]\nkind = \"crq\"\nalpha = 0.25\n[traffic]\npattern = \"transpose\"\n",
        )
        .unwrap();
        assert_eq!(ConfigFile::parse(&c.echo()).unwrap(), c);
    }
}
