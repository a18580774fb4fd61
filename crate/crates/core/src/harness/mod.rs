//! Repeated paired experiments over random splits of one synthetic corpus.
//!
//! Every repetition draws its own split from a seed derived from the master
//! seed and the repetition index, then runs each requested variant on that
//! same split. Repetitions are independent and run on the rayon pool when
//! the `parallel` feature is enabled; results are collected by index before
//! aggregation, so reports do not depend on scheduling or worker count.

mod aggregate;
mod report;

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::active_learner::{run, LearnerConfig, MetricPoint};
use crate::classifier::ConjugatePrior;
use crate::dataset::{generate, split, DatasetConfig, Observation, SplitConfig};
use crate::decision::{TransitionModel, UtilityModel};
use crate::error::{Error, Result};

pub use aggregate::{align_curves, quantile, AggregateReport, QuantilePoint, VariantReport};
pub use report::{emit, load_report, ReportFormat, REPORT_FILES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Supervised refits only.
    Plain,
    /// Supervised refit followed by semi-supervised EM after each query.
    Em,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Em => "em",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain" => Ok(Variant::Plain),
            "em" => Ok(Variant::Em),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected plain or em)"
            ))),
        }
    }
}

/// A complete experiment description; also the schema of the JSON config
/// file accepted by the CLI. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_reps: usize,
    pub master_seed: u64,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub variants: Vec<Variant>,
    pub learner: LearnerConfig,
    pub transition: TransitionModel,
    pub utility: UtilityModel,
    /// Defaults to [`ConjugatePrior::weakly_informative`] for the dataset
    /// dimension.
    pub prior: Option<ConjugatePrior>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_reps: 100,
            master_seed: 0,
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            variants: vec![Variant::Plain, Variant::Em],
            learner: LearnerConfig::default(),
            transition: TransitionModel::default(),
            utility: UtilityModel::default(),
            prior: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("no variants requested".into()));
        }
        self.dataset.validate()?;
        self.learner.validate()?;
        if let Some(prior) = &self.prior {
            if prior.dim() != self.dataset.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dataset.dim(),
                    found: prior.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn resolved_prior(&self) -> ConjugatePrior {
        self.prior
            .clone()
            .unwrap_or_else(|| ConjugatePrior::weakly_informative(self.dataset.dim()))
    }

    /// Variants in canonical order without duplicates.
    pub fn variant_set(&self) -> Vec<Variant> {
        let mut v = self.variants.clone();
        v.sort();
        v.dedup();
        v
    }
}

/// Seed for repetition `rep`: the first word of ChaCha stream `rep` under the
/// master seed.
pub fn rep_seed(master_seed: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// What the aggregator keeps from one (repetition, variant) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rep: usize,
    pub variant: Variant,
    pub split_fingerprint: String,
    pub stream_len: usize,
    pub query_count: usize,
    /// Positions in the unlabeled stream that were queried.
    pub queried_indices: Vec<usize>,
    /// Queries whose time index falls in the first deterioration cycle.
    pub first_cycle_queries: usize,
    pub curve: Vec<MetricPoint>,
}

impl RunSummary {
    /// Share of this run's queries made during the first cycle (0 when the
    /// run made no queries).
    pub fn first_cycle_fraction(&self) -> f64 {
        if self.query_count == 0 {
            0.0
        } else {
            self.first_cycle_queries as f64 / self.query_count as f64
        }
    }
}

fn run_rep(
    config: &ExperimentConfig,
    data: &[Observation],
    prior: &ConjugatePrior,
    variants: &[Variant],
    rep: usize,
) -> Result<Vec<RunSummary>> {
    let wrap = |variant: &str, e: Error| Error::Repetition {
        rep,
        variant: variant.to_string(),
        source: Box::new(e),
    };
    let seed = rep_seed(config.master_seed, rep);
    let parts = split(
        data,
        config.split.test_fraction,
        config.split.labeled_fraction,
        seed,
    )
    .map_err(|e| wrap("split", e))?;
    let fingerprint = parts.fingerprint();
    let cycle_len = config.dataset.points_per_cycle as u64;

    variants
        .iter()
        .map(|&variant| {
            let learner = LearnerConfig {
                em_enabled: variant == Variant::Em,
                ..config.learner.clone()
            };
            let result = run(&parts, prior, &config.transition, &config.utility, &learner)
                .map_err(|e| wrap(variant.name(), e))?;
            let queried_indices: Vec<usize> = result.queried_indices().collect();
            let first_cycle_queries = queried_indices
                .iter()
                .filter(|&&i| result.step_records[i].t < cycle_len)
                .count();
            Ok(RunSummary {
                rep,
                variant,
                split_fingerprint: fingerprint.clone(),
                stream_len: parts.unlabeled_stream.len(),
                query_count: result.query_count,
                queried_indices,
                first_cycle_queries,
                curve: result.metric_curve,
            })
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn run_all<F>(n_reps: usize, threads: Option<usize>, job: F) -> Result<Vec<Vec<RunSummary>>>
where
    F: Fn(usize) -> Result<Vec<RunSummary>> + Sync + Send,
{
    use rayon::prelude::*;
    let collect = || (0..n_reps).into_par_iter().map(&job).collect();
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?
            .install(collect),
        None => collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_all<F>(n_reps: usize, _threads: Option<usize>, job: F) -> Result<Vec<Vec<RunSummary>>>
where
    F: Fn(usize) -> Result<Vec<RunSummary>>,
{
    (0..n_reps).map(job).collect()
}

/// Runs every repetition and aggregates. `threads` sizes a dedicated worker
/// pool (ignored without the `parallel` feature); `None` uses the global one.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<AggregateReport> {
    let runs = run_repetitions(config, threads)?;
    AggregateReport::from_runs(config, runs)
}

/// Per-run summaries ordered by repetition, then variant.
pub fn run_repetitions(config: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<RunSummary>> {
    config.validate()?;
    let data = generate(&config.dataset)?;
    let prior = config.resolved_prior();
    let variants = config.variant_set();
    let per_rep = run_all(config.n_reps, threads, |rep| {
        run_rep(config, &data, &prior, &variants, rep)
    })?;
    Ok(per_rep.into_iter().flatten().collect())
}
