//! Run configuration: TOML sections with dotted-key overrides.
//!
//! ```toml
//! [model]
//! family = "gp"          # "mult1", "mult2" or "gp"
//! factors = 2
//! gp_variant = 1
//! length_scale = 0.2
//! seed_groups = [[0, 1, 2], [3, 4, 5]]
//!
//! [mcmc]
//! iters = 600
//! burn_in = 300
//! seed = 7
//! ```
//!
//! Any key can be overridden with `section.key=value`; the value is read as a
//! TOML literal and falls back to a plain string.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genomics::OverlapTestInput;
use crate::gibbs::McmcSettings;
use crate::simulate::SaddleConfig;
use crate::spec::{BetaPrior, HPriorStrategy, InvGammaPrior, ModelSpec, ValidatedSpec, ZPriorStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    pub factors: usize,
    pub gp_variant: u8,
    pub nu: Option<f64>,
    pub omega_alpha: f64,
    pub omega_theta: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub length_scale: f64,
    /// "per_entry" or "grouped"; defaults to the family/variant choice.
    pub h_prior: Option<String>,
    /// "per_feature", "global" or "grouped"; defaults to the family/variant choice.
    pub z_prior: Option<String>,
    pub gamma: Option<[f64; 2]>,
    pub beta: Option<[f64; 2]>,
    pub gamma_groups: Option<Vec<[f64; 2]>>,
    pub beta_groups: Option<Vec<[f64; 2]>>,
    pub seed_groups: Vec<Vec<usize>>,
    pub seed_constraints: bool,
    pub interactions: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: "gp".into(),
            factors: 2,
            gp_variant: 1,
            nu: None,
            omega_alpha: crate::spec::DEFAULT_OMEGA,
            omega_theta: crate::spec::DEFAULT_OMEGA,
            sigma2_shape: crate::spec::DEFAULT_SIGMA2_PRIOR.shape,
            sigma2_scale: crate::spec::DEFAULT_SIGMA2_PRIOR.scale,
            length_scale: crate::spec::DEFAULT_LENGTH_SCALE,
            h_prior: None,
            z_prior: None,
            gamma: None,
            beta: None,
            gamma_groups: None,
            beta_groups: None,
            seed_groups: Vec::new(),
            seed_constraints: true,
            interactions: true,
        }
    }
}

fn beta(p: [f64; 2]) -> BetaPrior {
    BetaPrior::new(p[0], p[1])
}

impl ModelConfig {
    pub fn to_spec(&self, n_features: usize) -> Result<ValidatedSpec> {
        let mut spec = match self.family.as_str() {
            "mult1" => ModelSpec::mult_approach1(self.factors, self.nu.unwrap_or(1e-5)),
            "mult2" => ModelSpec::mult_approach2(self.factors),
            "gp" => {
                let mut s = ModelSpec::gp(self.factors, self.gp_variant)?;
                s.length_scale = Some(self.length_scale);
                s
            }
            other => return Err(Error::Config(format!("unknown model family {other:?}"))),
        };
        if spec.family.is_mult() {
            spec.omega_theta = Some(self.omega_theta);
            if self.family == "mult2" && self.nu.is_some() {
                spec.nu = self.nu;
            }
        } else {
            spec.nu = self.nu;
        }
        spec.omega_alpha = self.omega_alpha;
        spec.sigma2_prior = InvGammaPrior {
            shape: self.sigma2_shape,
            scale: self.sigma2_scale,
        };
        if let Some(h) = &self.h_prior {
            spec.h_prior_strategy = match h.as_str() {
                "per_entry" => HPriorStrategy::PerEntry,
                "grouped" => HPriorStrategy::Grouped,
                other => return Err(Error::Config(format!("unknown h_prior {other:?}"))),
            };
        }
        if let Some(z) = &self.z_prior {
            spec.z_prior_strategy = match z.as_str() {
                "per_feature" => ZPriorStrategy::PerFeature,
                "global" => ZPriorStrategy::Global,
                "grouped" => ZPriorStrategy::Grouped,
                other => return Err(Error::Config(format!("unknown z_prior {other:?}"))),
            };
        }
        if let Some(g) = self.gamma {
            spec.gamma.default = beta(g);
        }
        if let Some(b) = self.beta {
            spec.beta.default = beta(b);
        }
        if let Some(g) = &self.gamma_groups {
            spec.gamma.groups = g.iter().copied().map(beta).collect();
        }
        if let Some(b) = &self.beta_groups {
            spec.beta.groups = b.iter().copied().map(beta).collect();
        }
        spec = spec.with_seed_groups(self.seed_groups.clone());
        if self.seed_constraints {
            spec = spec.with_seed_constraints();
        }
        if !self.interactions {
            spec = spec.without_interactions(n_features);
        }
        spec.validate(n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub rw_step: f64,
    pub adapt: bool,
    pub target_accept: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        let s = McmcSettings::default();
        Self {
            iters: s.iters,
            burn_in: s.burn_in,
            thin: s.thin,
            seed: s.seed,
            chains: 1,
            rw_step: s.rw_step,
            adapt: s.adapt,
            target_accept: s.target_accept,
        }
    }
}

impl McmcConfig {
    pub fn settings(&self, chain: u64) -> McmcSettings {
        McmcSettings {
            iters: self.iters,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            chain,
            rw_step: self.rw_step,
            adapt: self.adapt,
            target_accept: self.target_accept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub annotation: Option<PathBuf>,
    /// JSON list of seed-group index lists, used when `model.seed_groups` is empty.
    pub seed_groups: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub threshold: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapConfig {
    pub population_size: usize,
    pub counts: Vec<usize>,
    pub observed: u64,
    pub replicates: usize,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self {
            population_size: 3704,
            counts: vec![314, 170, 244, 255],
            observed: 136,
            replicates: 100_000,
        }
    }
}

impl OverlapConfig {
    pub fn input(&self) -> OverlapTestInput {
        OverlapTestInput {
            population_size: self.population_size,
            per_dataset_counts: self.counts.clone(),
            observed_overlap: self.observed,
            n_replicates: self.replicates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub feature: usize,
    pub grid_size: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            feature: 0,
            grid_size: 25,
        }
    }
}

/// Length scales fitted by `compare`, each as a GP variant-1 model, next to
/// the exact-product model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub length_scales: Vec<f64>,
    pub include_mult: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            length_scales: vec![0.2, 0.3, 0.5],
            include_mult: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub mcmc: McmcConfig,
    pub paths: PathsConfig,
    pub simulate: SaddleConfig,
    pub detect: DetectConfig,
    pub overlap: OverlapConfig,
    pub surface: SurfaceConfig,
    pub compare: CompareConfig,
}

fn parse_value(text: &str) -> toml::Value {
    match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Applies one `section.key=value` override to a parsed table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{k} is not a section")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.mcmc.settings(0).validate()?;
        if cfg.mcmc.chains == 0 {
            return Err(Error::Config("mcmc.chains must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("", &[]).unwrap();
        assert_eq!(cfg.mcmc.iters, 600);
        assert_eq!(cfg.overlap.counts, vec![314, 170, 244, 255]);
        let cfg = RunConfig::parse(
            "[model]\nfamily = \"mult2\"\n",
            &[
                "mcmc.seed=9".into(),
                "model.seed_groups=[[0,1],[2,3]]".into(),
                "model.family=gp".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.mcmc.seed, 9);
        assert_eq!(cfg.model.family, "gp");
        assert_eq!(cfg.model.seed_groups, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("[mcmc]\niters = 10\nburn_in = 10\n", &[]).is_err());
        assert!(RunConfig::parse("[model]\nbogus = 1\n", &[]).is_err());
        assert!(RunConfig::parse("", &["nokey".into()]).is_err());
        let cfg = RunConfig::parse("[model]\nfamily = \"weird\"\n", &[]).unwrap();
        assert!(cfg.model.to_spec(10).is_err());
    }

    #[test]
    fn spec_from_config() {
        let cfg = RunConfig::parse(
            "[model]\nfamily = \"gp\"\ngp_variant = 5\nseed_groups = [[0], [1]]\n",
            &[],
        )
        .unwrap();
        let spec = cfg.model.to_spec(6).unwrap();
        assert_eq!(spec.h_prior_strategy, HPriorStrategy::Grouped);
        assert_eq!(spec.degenerate_q.get(&(0, 0)), Some(&true));
        let cfg = RunConfig::parse("[model]\nfamily = \"gp\"\nnu = 0.1\n", &[]).unwrap();
        assert!(cfg.model.to_spec(6).is_err());
    }
}
