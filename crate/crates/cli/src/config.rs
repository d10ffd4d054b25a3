//! Experiment configuration: a versioned JSON schema resolved into the
//! library objects a run needs.

use serde::{Deserialize, Serialize};

use ldlearn::affine::{
    enumerate_affine_class, enumerate_subspaces, AffineClassParams, AffineDistribution,
    AffineSubspace,
};
use ldlearn::boost::{k_choice, BoostConfig};
use ldlearn::core::{HypothesisClass, RealizableDistribution};
use ldlearn::littlestone::{ldim, LittlestoneError};
use ldlearn::stable::{lemma1_params, TournamentConfig};

use crate::CliError;

pub const SCHEMA: &str = "ldlearn.experiment.v1";

/// Sample sizes above this demand explicit desk-scale overrides.
pub const FAITHFUL_N_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub class: ClassSource,
    pub distribution: DistributionSource,
    pub regime: RegimeConfig,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Optional tiny instance for the exact-enumeration oracle inside the
    /// `mi` subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_oracle: Option<ExactOracleConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSource {
    /// Rows given directly as "0101" strings.
    Inline { rows: Vec<String> },
    /// Thresholds `x >= a` over the chain `{1, ..., n}`.
    Thresholds { n: usize },
    /// Indicators of affine subspaces of dimension at most `d` in `F_q^l`.
    Affine { q: u64, l: usize, d: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSource {
    Uniform { target_id: usize },
    Pmf { pmf: Vec<f64>, target_id: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeConfig {
    /// Parameters straight from the closed-form formulas at (ldim, epsilon,
    /// delta). Rejected when the faithful `n` is beyond desk scale.
    Faithful,
    /// Explicit overrides; every report is watermarked with the regime.
    DeskScale {
        leaf_size: usize,
        n1: usize,
        k: usize,
        eta: f64,
    },
}

impl RegimeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeConfig::Faithful => "faithful",
            RegimeConfig::DeskScale { .. } => "desk_scale",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactOracleConfig {
    pub n: usize,
    pub k: usize,
}

/// Extra machinery available when the class is an affine family.
pub struct AffineSetup {
    pub params: AffineClassParams,
    pub dist: AffineDistribution,
    pub target: AffineSubspace,
}

/// A validated configuration resolved into runnable objects.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub class: HypothesisClass,
    pub dist: RealizableDistribution,
    pub ldim: u32,
    pub tournament: TournamentConfig,
    pub boost: BoostConfig,
    pub affine: Option<AffineSetup>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("config does not match the schema: {e}")))?;
    if config.schema != SCHEMA {
        return Err(CliError::Config(format!(
            "unsupported schema {:?} (expected {SCHEMA:?})",
            config.schema
        )));
    }
    Ok(config)
}

impl ExperimentConfig {
    /// Resolve into runnable objects, applying an optional seed override
    /// (CLI flag or environment; only the master seed may be overridden).
    pub fn resolve(self, seed_override: Option<u64>) -> Result<Experiment, CliError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Config(format!(
                "epsilon {} outside (0,1)",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Config(format!(
                "delta {} outside (0,1)",
                self.delta
            )));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }

        let class = match &self.class {
            ClassSource::Inline { rows } => {
                let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
                HypothesisClass::from_strings(&refs).map_err(|e| CliError::Config(e.to_string()))?
            }
            ClassSource::Thresholds { n } => {
                HypothesisClass::thresholds(*n).map_err(|e| CliError::Config(e.to_string()))?
            }
            ClassSource::Affine { q, l, d } => {
                let params = AffineClassParams {
                    q: *q,
                    l: *l,
                    d: *d,
                };
                enumerate_affine_class(&params).map_err(|e| CliError::Config(e.to_string()))?
            }
        };

        let dimension = ldim(&class).map_err(|e| match e {
            LittlestoneError::ResourceGuard { .. } => CliError::Resource(e.to_string()),
            other => CliError::Config(other.to_string()),
        })?;

        let (pmf_source, target_id) = match &self.distribution {
            DistributionSource::Uniform { target_id } => (None, *target_id),
            DistributionSource::Pmf { pmf, target_id } => (Some(pmf.clone()), *target_id),
        };
        let dist = match &pmf_source {
            None => RealizableDistribution::uniform(&class, target_id),
            Some(pmf) => RealizableDistribution::new(&class, pmf.clone(), target_id),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;

        let (leaf_size, n1, k, eta) = match &self.regime {
            RegimeConfig::Faithful => {
                let params = lemma1_params(dimension, self.epsilon)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if !params.executable_at_desk_scale() {
                    return Err(CliError::Config(format!(
                        "faithful n has {} digits; desk-scale overrides are required beyond n = {FAITHFUL_N_LIMIT}",
                        params.n_digits()
                    )));
                }
                let k = k_choice(self.delta, params.eta)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                (params.n1 as usize, params.n1 as usize, k, params.eta)
            }
            RegimeConfig::DeskScale {
                leaf_size,
                n1,
                k,
                eta,
            } => (*leaf_size, *n1, *k, *eta),
        };

        let boost = BoostConfig {
            k,
            eta,
            // worst-case examples one inner run consumes
            n: ((leaf_size as u64) << dimension) + n1 as u64,
        };
        boost
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let tournament = TournamentConfig {
            leaf_size,
            n1,
            max_level: dimension,
        };
        tournament
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        let affine = match &self.class {
            ClassSource::Affine { q, l, d } => {
                let params = AffineClassParams {
                    q: *q,
                    l: *l,
                    d: *d,
                };
                let target_row = class
                    .hypothesis(target_id)
                    .ok_or_else(|| CliError::Config(format!("target id {target_id} out of range")))?
                    .labels
                    .bits()
                    .to_vec();
                let target = enumerate_subspaces(&params)
                    .map_err(|e| CliError::Config(e.to_string()))?
                    .into_iter()
                    .find(|s| s.indicator_row().ok().as_deref() == Some(target_row.as_slice()))
                    .ok_or_else(|| {
                        CliError::Config("target id does not name a subspace indicator".into())
                    })?;
                let dist = match &pmf_source {
                    None => AffineDistribution::uniform(target.clone()),
                    Some(pmf) => AffineDistribution::new(pmf.clone(), target.clone()),
                }
                .map_err(|e| CliError::Config(e.to_string()))?;
                Some(AffineSetup {
                    params,
                    dist,
                    target,
                })
            }
            _ => None,
        };

        let seed = seed_override.unwrap_or(self.seed);
        let canonical = serde_json::to_vec(&self).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Experiment {
            config_hash: sha256_hex(&canonical),
            config: self,
            seed,
            class,
            dist,
            ldim: dimension,
            tournament,
            boost,
            affine,
        })
    }
}
