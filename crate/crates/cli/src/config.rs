//! The TOML configuration file. Every key is optional; unknown keys are
//! rejected.
//!
//! ```toml
//! backend = "tiny"          # or "curve" (default)
//! seed = 7                  # RNG seed (default 0)
//! range_bits = 8            # bit width of range proofs (default 8)
//! grant_value = 200         # value of the public mint input (default 200)
//!
//! [group]                   # tiny backend constants and curve generator seed
//! n = 23
//! G = 5
//! H = 7
//! J = 11
//! curve_seed = 0
//!
//! [features]
//! incubation = false
//! dandelion = false
//! beam_dummy = false
//!
//! [paths]
//! chain = "chain.jsonl"     # default for `chain validate|append`
//! state = "node.json"       # default for `node step`
//! report = "report.json"    # default for `sim run --report`
//!
//! [sim]
//! n_nodes = 5
//! topology = { kind = "clique" }
//! latency = { kind = "fixed", ticks = 1 }
//! loss = 0.0
//! coin_p = 0.5
//! max_stem = 32
//! incubation_min = 1
//! incubation_max = 10
//! ```

use std::path::{Path, PathBuf};

use mwk_core::consensus::VafRule;
use mwk_core::simnet::{BeamDummyConfig, DandelionConfig, Latency, SimConfig, Topology};
use mwk_core::{BackendId, TinyConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: Option<BackendId>,
    pub seed: Option<u64>,
    pub range_bits: Option<u32>,
    pub grant_value: Option<u64>,
    pub group: GroupSection,
    pub features: Features,
    pub paths: Paths,
    pub sim: SimSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupSection {
    pub n: u64,
    #[serde(rename = "G")]
    pub g: u64,
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "J")]
    pub j: u64,
    /// Seed from which the curve backend derives `H` and `J`.
    pub curve_seed: u64,
}

impl Default for GroupSection {
    fn default() -> Self {
        let t = TinyConfig::default();
        GroupSection { n: t.n, g: t.g, h: t.h, j: t.j, curve_seed: 0 }
    }
}

impl GroupSection {
    pub fn tiny(&self) -> TinyConfig {
        TinyConfig { n: self.n, g: self.g, h: self.h, j: self.j }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    pub incubation: bool,
    pub dandelion: bool,
    pub beam_dummy: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub chain: Option<PathBuf>,
    pub state: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_nodes: Option<u32>,
    pub topology: Option<Topology>,
    pub latency: Option<Latency>,
    pub loss: Option<f64>,
    pub coin_p: Option<f64>,
    pub max_stem: Option<u32>,
    pub incubation_min: Option<u64>,
    pub incubation_max: Option<u64>,
    pub vaf: Option<VafRule>,
    pub pool_cap: Option<usize>,
    pub max_events: Option<u64>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<CliConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Simulation settings with the shared knobs already resolved.
    pub fn sim_config(&self, backend: BackendId, seed: u64, features: Features) -> SimConfig {
        let d = SimConfig::default();
        let s = &self.sim;
        let dd = DandelionConfig::default();
        let bd = BeamDummyConfig::default();
        SimConfig {
            n_nodes: s.n_nodes.unwrap_or(d.n_nodes),
            topology: s.topology.unwrap_or(d.topology),
            latency: s.latency.unwrap_or(d.latency),
            loss: s.loss.unwrap_or(d.loss),
            seed,
            dandelion: DandelionConfig {
                enabled: features.dandelion,
                coin_p: s.coin_p.unwrap_or(dd.coin_p),
                max_stem: s.max_stem.unwrap_or(dd.max_stem),
            },
            beam_dummy: BeamDummyConfig {
                enabled: features.beam_dummy,
                incubation_min: s.incubation_min.unwrap_or(bd.incubation_min),
                incubation_max: s.incubation_max.unwrap_or(bd.incubation_max),
            },
            backend,
            tiny: self.group.tiny(),
            grant_value: self.grant_value.unwrap_or(d.grant_value),
            range_bits: self.range_bits.unwrap_or(d.range_bits),
            vaf: s.vaf.clone().or(d.vaf),
            pool_cap: s.pool_cap.unwrap_or(d.pool_cap),
            max_events: s.max_events.unwrap_or(d.max_events),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_example_parses() {
        let text = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let cfg: CliConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg.backend, Some(BackendId::Tiny));
        assert_eq!(cfg.sim.latency, Some(Latency::Fixed { ticks: 1 }));
        assert_eq!(cfg.group.tiny(), TinyConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<CliConfig>("colour = 1").is_err());
        assert!(toml::from_str::<CliConfig>("[features]\nwarp = true").is_err());
        assert!(toml::from_str::<CliConfig>("[sim]\nnodes = 3").is_err());
    }

    #[test]
    fn features_reach_the_simulator() {
        let cfg = CliConfig::default();
        let f = Features { dandelion: true, beam_dummy: true, incubation: false };
        let s = cfg.sim_config(BackendId::Tiny, 3, f);
        assert!(s.dandelion.enabled && s.beam_dummy.enabled);
        assert_eq!((s.seed, s.backend), (3, BackendId::Tiny));
    }
}
