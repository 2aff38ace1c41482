//! JSON run configuration.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "model": {
//!     "environment": { "builder": "binomial_split", "z": { "law": "dirac", "value": 2 },
//!                      "p": [[0.5, 1.0]] },
//!     "immigration": { "mode": "contamination",
//!                      "y0": { "law": "bernoulli", "p": 0.5 },
//!                      "y1": { "law": "dirac", "value": 0 } },
//!     "k0": 0
//!   },
//!   "experiment": { "kind": "lineage", "n": 30, "replicates": 1000 },
//!   "output": { "dir": "out" }
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::offspring::{
    build_binomial_split, build_cluster_split, uniform_atoms, BivariateOffspringLaw, CountLaw, EnvironmentLaw,
    ImmigrationLaw, ImmigrationPair,
};
use crate::{lineage, oracle, tree, Error, Result};

/// A law on the nonnegative integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountLawConfig {
    Dirac { value: u64 },
    Bernoulli { p: f64 },
    /// `P(k) ∝ (1-p)^k p` on `0..=max`.
    Geometric { p: f64, max: u64 },
    Pmf { pmf: Vec<f64> },
    Support { support: Vec<(u64, f64)> },
    /// Contamination only: `P(0) = 1/2`, `P(n) ∝ 1/(n (1 + ln n)²)`.
    HeavyTail,
}

impl CountLawConfig {
    pub fn count_law(&self) -> Result<CountLaw> {
        match self {
            Self::Dirac { value } => Ok(CountLaw::dirac(*value)),
            Self::Bernoulli { p } => CountLaw::bernoulli(*p),
            Self::Geometric { p, max } => CountLaw::truncated_geometric(*p, *max),
            Self::Pmf { pmf } => CountLaw::from_pmf(pmf.clone()),
            Self::Support { support } => CountLaw::from_support(support),
            Self::HeavyTail => Err(Error::Config("heavy_tail is only allowed for contamination laws".into())),
        }
    }

    pub fn immigration_law(&self) -> Result<ImmigrationLaw> {
        match self {
            Self::HeavyTail => Ok(ImmigrationLaw::heavy_tail()),
            other => other.count_law().map(ImmigrationLaw::from),
        }
    }
}

/// Sharing parameters: explicit `(p, weight)` atoms or a discretized uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SharingConfig {
    Atoms(Vec<(f64, f64)>),
    Uniform { uniform_atoms: usize },
}

impl SharingConfig {
    fn atoms(&self) -> Result<Vec<(f64, f64)>> {
        match self {
            Self::Atoms(a) => Ok(a.clone()),
            Self::Uniform { uniform_atoms: 0 } => Err(Error::Config("uniform_atoms must be positive".into())),
            Self::Uniform { uniform_atoms: n } => Ok(uniform_atoms(*n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitComponent {
    pub weight: f64,
    /// `((first, second), probability)` entries.
    pub support: Vec<((u64, u64), f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixturePart {
    pub weight: f64,
    pub environment: EnvironmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    BinomialSplit { z: CountLawConfig, p: SharingConfig },
    ClusterSplit { z: CountLawConfig, p: SharingConfig },
    Explicit { components: Vec<ExplicitComponent> },
    Mixture { parts: Vec<MixturePart> },
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<EnvironmentLaw> {
        match self {
            Self::BinomialSplit { z, p } => build_binomial_split(&z.count_law()?, &p.atoms()?),
            Self::ClusterSplit { z, p } => build_cluster_split(&z.count_law()?, &p.atoms()?),
            Self::Explicit { components } => EnvironmentLaw::new(
                components
                    .iter()
                    .map(|c| Ok((BivariateOffspringLaw::new(&c.support)?, c.weight)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Self::Mixture { parts } => {
                let mut components = Vec::new();
                for part in parts {
                    let env = part.environment.build()?;
                    components.extend(env.components().map(|(l, w)| (l.clone(), w * part.weight)));
                }
                EnvironmentLaw::new(components)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImmigrationConfig {
    /// Validated: `0 < P(Y₀ = 0) < 1` and `P(Y₁ = 0) > 0`.
    Contamination { y0: CountLawConfig, y1: CountLawConfig },
    Zero,
    Unconstrained { y0: CountLawConfig, y1: CountLawConfig },
}

impl ImmigrationConfig {
    pub fn build(&self) -> Result<ImmigrationPair> {
        match self {
            Self::Contamination { y0, y1 } => ImmigrationPair::new(y0.immigration_law()?, y1.immigration_law()?),
            Self::Zero => Ok(ImmigrationPair::zero()),
            Self::Unconstrained { y0, y1 } => Ok(ImmigrationPair::unconstrained(
                y0.immigration_law()?,
                y1.immigration_law()?,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub environment: EnvironmentConfig,
    pub immigration: ImmigrationConfig,
    #[serde(default)]
    pub k0: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lineage,
    Tree,
    Oracle,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    #[default]
    Bfs,
    Dfs,
}

fn default_n() -> u32 {
    20
}
fn default_replicates() -> u64 {
    100
}
fn default_cap() -> u64 {
    lineage::DEFAULT_HITTING_CAP
}
fn default_truncation() -> usize {
    oracle::DEFAULT_TRUNCATION
}
fn default_overflow_budget() -> Option<f64> {
    oracle::KernelOptions::default().overflow_budget
}
fn default_bfs_depth() -> u32 {
    tree::DEFAULT_BFS_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    /// Step cap for return times.
    #[serde(default = "default_cap")]
    pub cap: u64,
    /// Oracle truncation `K`.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Largest overflow tolerated in a kernel row; `null` disables the check.
    #[serde(default = "default_overflow_budget")]
    pub overflow_budget: Option<f64>,
    #[serde(default)]
    pub traversal: Traversal,
    /// Depth bound for breadth-first trees.
    #[serde(default = "default_bfs_depth")]
    pub max_depth: u32,
    /// Suite name for `verify`.
    #[serde(default)]
    pub suite: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Validated model ready to simulate.
#[derive(Debug, Clone)]
pub struct Model {
    pub env: EnvironmentLaw,
    pub imm: ImmigrationPair,
    pub k0: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds every law, so that constraint violations surface at load.
    pub fn validate(&self) -> Result<()> {
        self.model.build().map(|_| ())?;
        if self.experiment.kind == ExperimentKind::Verify && self.experiment.suite.is_none() {
            return Err(Error::Config("verify experiments need a suite".into()));
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model> {
        Ok(Model {
            env: self.environment.build()?,
            imm: self.immigration.build()?,
            k0: self.k0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "seed": 7,
        "model": {
            "environment": { "builder": "explicit", "components": [ { "weight": 1.0, "support": [[[0, 0], 1.0]] } ] },
            "immigration": { "mode": "contamination", "y0": { "law": "bernoulli", "p": 0.5 }, "y1": { "law": "dirac", "value": 0 } }
        },
        "experiment": { "kind": "oracle", "n": 4, "truncation": 8 }
    }"#;

    #[test]
    fn parses_toy_config() {
        let cfg = RunConfig::from_json(TOY).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.k0, 0);
        assert_eq!(cfg.experiment.replicates, 100);
        assert_eq!(cfg.experiment.overflow_budget, Some(1e-6));
        let open = TOY.replace("\"truncation\": 8", "\"truncation\": 8, \"overflow_budget\": null");
        assert_eq!(RunConfig::from_json(&open).unwrap().experiment.overflow_budget, None);
        let model = cfg.model.build().unwrap();
        assert_eq!(model.env.len(), 1);
        assert_eq!(model.imm.y0().prob_zero(), 0.5);
    }

    #[test]
    fn rejects_contamination_without_clean_cells() {
        let bad = TOY.replace(r#"{ "law": "bernoulli", "p": 0.5 }"#, r#"{ "law": "dirac", "value": 1 }"#);
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::InvalidImmigration(_))));
        let free = bad.replace("\"contamination\"", "\"unconstrained\"");
        assert!(RunConfig::from_json(&free).is_ok());
    }

    #[test]
    fn builders_and_laws() {
        let env: EnvironmentConfig = serde_json::from_str(
            r#"{ "builder": "mixture", "parts": [
                { "weight": 0.5, "environment": { "builder": "binomial_split", "z": { "law": "dirac", "value": 4 }, "p": [[0.5, 1.0]] } },
                { "weight": 0.5, "environment": { "builder": "cluster_split", "z": { "law": "geometric", "p": 0.5, "max": 10 }, "p": { "uniform_atoms": 4 } } }
            ] }"#,
        )
        .unwrap();
        let law = env.build().unwrap();
        assert_eq!(law.len(), 5);
        let heavy: ImmigrationConfig =
            serde_json::from_str(r#"{ "mode": "contamination", "y0": { "law": "bernoulli", "p": 0.5 }, "y1": { "law": "heavy_tail" } }"#)
                .unwrap();
        assert!(heavy.build().unwrap().y1().is_heavy_tail());
        let z: EnvironmentConfig =
            serde_json::from_str(r#"{ "builder": "binomial_split", "z": { "law": "heavy_tail" }, "p": [[0.5, 1.0]] }"#).unwrap();
        assert!(matches!(z.build(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_fields_are_errors() {
        let bad = TOY.replace("\"seed\": 7", "\"seed\": 7, \"sede\": 1");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
    }
}
