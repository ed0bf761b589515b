//! Flat TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KramersError, Result};
use crate::kramers::LevelPolicy;
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Landscape,
    Predict,
    Simulate,
    VerifyCramer,
    VerifyLaplace,
    VerifyObservables,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Landscape,
        Stage::Predict,
        Stage::Simulate,
        Stage::VerifyCramer,
        Stage::VerifyLaplace,
        Stage::VerifyObservables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Landscape => "landscape",
            Stage::Predict => "predict",
            Stage::Simulate => "simulate",
            Stage::VerifyCramer => "verify-cramer",
            Stage::VerifyLaplace => "verify-laplace",
            Stage::VerifyObservables => "verify-observables",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Predict => &[Stage::Landscape],
            Stage::Simulate => &[Stage::Landscape, Stage::Predict],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = KramersError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| KramersError::ConfigInvalid(format!("unknown stage `{s}`")))
    }
}

/// Adds every dependency, returning the stages in pipeline order.
pub fn close_stages(stages: &[Stage]) -> Vec<Stage> {
    let mut out: Vec<Stage> = stages.to_vec();
    for s in stages {
        out.extend_from_slice(s.dependencies());
    }
    out.sort();
    out.dedup();
    out
}

pub fn parse_stage_list(s: &str) -> Result<Vec<Stage>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(Stage::from_str).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeChoice {
    LowTemperature,
    HighTemperature,
}

fn default_j() -> f64 {
    2.0
}
fn default_potential() -> String {
    "quartic_double_well".into()
}
fn default_regime() -> RegimeChoice {
    RegimeChoice::LowTemperature
}
fn default_n() -> Vec<usize> {
    vec![4]
}
fn default_stages() -> Vec<Stage> {
    vec![Stage::Landscape, Stage::Predict]
}
fn default_dt() -> f64 {
    5e-4
}
fn default_transitions() -> usize {
    2000
}
fn default_burn_in() -> u64 {
    2000
}
fn default_ceiling() -> u64 {
    50_000_000
}
fn default_substeps() -> u32 {
    2
}
fn default_levels() -> LevelPolicy {
    LevelPolicy::WellBottoms
}
fn default_true() -> bool {
    true
}
fn default_alpha() -> f64 {
    0.25
}
fn default_radius() -> f64 {
    2.0
}
fn default_cramer_n() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_cramer_m() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_observable() -> String {
    "z^2".into()
}
fn default_observable_m() -> f64 {
    0.5
}
fn default_laplace_eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}
fn default_laplace_k() -> Vec<usize> {
    vec![0, 1, 2]
}
fn default_laplace_m() -> f64 {
    1.1
}
fn default_charfn_xi() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `quartic_double_well` or an expression in `z` for the effective potential.
    #[serde(default = "default_potential")]
    pub potential: String,
    #[serde(default = "default_alpha")]
    pub growth_alpha: f64,
    #[serde(default = "default_radius")]
    pub growth_radius: f64,
    #[serde(default = "default_j")]
    pub j: f64,
    /// Required in the low-temperature regime; fixed to 1 otherwise.
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_regime")]
    pub regime: RegimeChoice,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,

    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_transitions")]
    pub transitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_ceiling")]
    pub max_steps_ceiling: u64,
    #[serde(default = "default_substeps")]
    pub noise_substeps: u32,
    #[serde(default = "default_levels")]
    pub levels: LevelPolicy,
    #[serde(default = "default_true")]
    pub dt_check: bool,
    #[serde(default = "default_true")]
    pub deterministic_init: bool,
    #[serde(default)]
    pub poincare: Option<f64>,

    #[serde(default = "default_cramer_n")]
    pub cramer_n: Vec<usize>,
    #[serde(default = "default_cramer_m")]
    pub cramer_m: Vec<f64>,
    #[serde(default = "default_true")]
    pub charfn: bool,
    #[serde(default = "default_charfn_xi")]
    pub charfn_xi: Vec<f64>,
    #[serde(default = "default_observable")]
    pub observable: String,
    #[serde(default = "default_observable_m")]
    pub observable_m: f64,
    #[serde(default = "default_laplace_eps")]
    pub laplace_eps: Vec<f64>,
    #[serde(default = "default_laplace_k")]
    pub laplace_k: Vec<usize>,
    /// The tilt is `tau = psi_J'(laplace_m)`.
    #[serde(default = "default_laplace_m")]
    pub laplace_m: f64,

    /// Where outputs go; not part of the echoed config or its hash.
    #[serde(default = "default_out", skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(default = "default_true")]
    pub csv: bool,
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| KramersError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KramersError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(KramersError::ConfigInvalid(msg));
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return bad(format!("j must be finite and non-negative, got {}", self.j));
        }
        match (self.regime, self.eps) {
            (RegimeChoice::LowTemperature, None) => return bad("eps is required in the low-temperature regime".into()),
            (RegimeChoice::LowTemperature, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return bad(format!("eps must be positive, got {e}"))
            }
            (RegimeChoice::HighTemperature, Some(e)) if e != 1.0 => {
                return bad(format!("the high-temperature regime fixes eps = 1, got {e}"))
            }
            _ => {}
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n must be a non-empty list of positive integers".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.noise_substeps == 0 || self.burn_in == 0 || self.max_steps_ceiling == 0 {
            return bad("noise_substeps, burn_in and max_steps_ceiling must be positive".into());
        }
        if self.dt_check && self.noise_substeps % 2 != 0 {
            return bad("dt_check needs an even noise_substeps".into());
        }
        if let Some(p) = self.poincare {
            if !(p > 0.0) {
                return bad(format!("poincare must be positive, got {p}"));
            }
        }
        if self.cramer_n.iter().any(|&n| n == 0 || n > crate::exactsmall::MAX_N) {
            return bad(format!("cramer_n entries must lie in 1..={}", crate::exactsmall::MAX_N));
        }
        if self.laplace_k.iter().any(|&k| k > crate::laplace::MAX_K) {
            return bad(format!("laplace_k entries must not exceed {}", crate::laplace::MAX_K));
        }
        if self.laplace_eps.iter().any(|&e| !(e > 0.0)) {
            return bad("laplace_eps entries must be positive".into());
        }
        crate::expr::Expr::parse(&self.observable)
            .map_err(|e| KramersError::ConfigInvalid(format!("observable: {e}")))?;
        self.potential_spec()?;
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        match self.regime {
            RegimeChoice::LowTemperature => self.eps.unwrap_or(f64::NAN),
            RegimeChoice::HighTemperature => 1.0,
        }
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let spec = match self.potential.trim() {
            "quartic_double_well" => Ok(PotentialSpec::quartic_double_well()),
            src => PotentialSpec::general(src, self.growth_alpha, self.growth_radius),
        };
        spec.map_err(|e| KramersError::ConfigInvalid(format!("potential: {e}")))
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_toml("eps = 0.05\nstages = [\"landscape\"]\n").unwrap();
        assert_eq!(c.stages, vec![Stage::Landscape]);
        assert_eq!(c.j, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("eps = 0.05\ntemperature = 3\n").unwrap_err();
        assert!(matches!(err, KramersError::ConfigInvalid(_)));
    }

    #[test]
    fn low_temperature_needs_eps() {
        assert!(ExperimentConfig::from_toml("j = 2.0\n").is_err());
        assert!(ExperimentConfig::from_toml("regime = \"high_temperature\"\nj = 3.0\n").is_ok());
    }

    #[test]
    fn dependencies_are_closed() {
        assert_eq!(close_stages(&[Stage::Simulate]), vec![Stage::Landscape, Stage::Predict, Stage::Simulate]);
        assert_eq!(parse_stage_list("landscape, verify-laplace").unwrap(), vec![Stage::Landscape, Stage::VerifyLaplace]);
        assert!(parse_stage_list("landscape,nope").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml("eps = 0.05\n").unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.content_hash(), b.content_hash());
        b.seed = 9;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }
}
