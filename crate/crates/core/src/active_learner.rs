//! Online risk-based active learning over a recorded data stream.
//!
//! Every incoming point is classified, and its label is bought (an
//! inspection) only when the EVPI of that label exceeds the inspection
//! cost. After each purchase the classifier is refit from the prior on the
//! grown labeled set and, in the semi-supervised variant, refined by EM over
//! the unlabeled pool. Actions are evaluated counterfactually; they never
//! alter the stream.

use serde::{Deserialize, Serialize};

use crate::classifier::{em_refine, fit_supervised, ClassifierState, ConjugatePrior, LabeledPoint, Posterior};
use crate::dataset::{DatasetSplit, HealthLabel};
use crate::decision::{evpi, meu, optimal_action_given_state, MaintenanceAction, TransitionModel, UtilityModel};
use crate::error::{Error, Result};
use crate::metrics::evaluate;

/// Which unlabeled points EM sees after a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmPoolPolicy {
    /// Only stream points that have already arrived.
    #[default]
    SeenSoFar,
    /// The whole unlabeled stream, including points not yet streamed.
    FullStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub em_enabled: bool,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub em_pool_policy: EmPoolPolicy,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            em_enabled: false,
            em_tol: 1e-6,
            em_max_iter: 100,
            em_pool_policy: EmPoolPolicy::SeenSoFar,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.em_tol > 0.0) || self.em_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "learner needs em_tol > 0 and em_max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub posterior: Posterior,
    pub evpi_value: f64,
    pub queried: bool,
    pub chosen_action: MaintenanceAction,
    pub true_label: HealthLabel,
    pub optimal_action: MaintenanceAction,
}

/// Test-set performance after `query_count` purchased labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub query_count: usize,
    pub decision_accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: LearnerConfig,
    pub c_ins: f64,
    pub step_records: Vec<StepRecord>,
    pub query_count: usize,
    pub em_invocations: usize,
    pub labeled_final: Vec<LabeledPoint>,
    /// One entry at initialization plus one after every query.
    pub metric_curve: Vec<MetricPoint>,
    pub final_state: ClassifierState,
}

impl RunResult {
    /// Stream positions (indices into the unlabeled stream) that were queried.
    pub fn queried_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.step_records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.queried)
            .map(|(i, _)| i)
    }
}

/// Unlabeled points visible to EM, kept in stream order.
struct Pool {
    indices: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl Pool {
    fn remove(&mut self, stream_index: usize) {
        if let Ok(pos) = self.indices.binary_search(&stream_index) {
            self.indices.remove(pos);
            self.points.remove(pos);
        }
    }
}

pub fn run(
    split: &DatasetSplit,
    prior: &ConjugatePrior,
    tm: &TransitionModel,
    um: &UtilityModel,
    config: &LearnerConfig,
) -> Result<RunResult> {
    config.validate()?;
    if split.labeled_seed.is_empty() {
        return Err(Error::EmptyLabeledSeed);
    }
    let stream = &split.unlabeled_stream;
    let mut labeled: Vec<LabeledPoint> = split
        .labeled_seed
        .iter()
        .map(|o| LabeledPoint {
            x: o.x.clone(),
            y: o.y_true,
        })
        .collect();
    let mut pool = match config.em_pool_policy {
        EmPoolPolicy::SeenSoFar => Pool {
            indices: Vec::new(),
            points: Vec::new(),
        },
        EmPoolPolicy::FullStream => Pool {
            indices: (0..stream.len()).collect(),
            points: stream.iter().map(|o| o.x.clone()).collect(),
        },
    };

    // EM follows every query-triggered refit. At initialization it only
    // runs when the pool is non-empty (never under `SeenSoFar`), so there
    // the number of refinements equals the number of queries.
    let mut em_invocations = 0;
    let mut retrain = |labeled: &[LabeledPoint], pool: &Pool, initial: bool| -> Result<ClassifierState> {
        let state = fit_supervised(prior, labeled)?;
        if !config.em_enabled || (initial && pool.points.is_empty()) {
            return Ok(state);
        }
        em_invocations += 1;
        Ok(em_refine(&state, labeled, &pool.points, config.em_tol, config.em_max_iter)?.state)
    };
    let measure = |state: &ClassifierState, query_count: usize| -> Result<MetricPoint> {
        let e = evaluate(state, &split.test, tm, um)?;
        Ok(MetricPoint {
            query_count,
            decision_accuracy: e.decision_accuracy,
            macro_f1: e.macro_f1,
        })
    };

    let mut state = retrain(&labeled, &pool, true)?;
    let mut metric_curve = vec![measure(&state, 0)?];
    let mut step_records = Vec::with_capacity(stream.len());
    let mut query_count = 0;

    for (index, obs) in stream.iter().enumerate() {
        let posterior = state.predict_posterior(&obs.x)?;
        let evpi_value = evpi(&posterior, tm, um)?;
        let optimal_action = optimal_action_given_state(obs.y_true, tm, um);
        let queried = evpi_value > um.c_ins;
        let chosen_action = if queried {
            optimal_action
        } else {
            meu(&posterior, tm, um)?.0
        };
        step_records.push(StepRecord {
            t: obs.t,
            posterior,
            evpi_value,
            queried,
            chosen_action,
            true_label: obs.y_true,
            optimal_action,
        });

        if queried {
            labeled.push(LabeledPoint {
                x: obs.x.clone(),
                y: obs.y_true,
            });
            pool.remove(index);
            query_count += 1;
            state = retrain(&labeled, &pool, false)?;
            metric_curve.push(measure(&state, query_count)?);
        } else if config.em_pool_policy == EmPoolPolicy::SeenSoFar {
            pool.indices.push(index);
            pool.points.push(obs.x.clone());
        }
    }

    Ok(RunResult {
        config: config.clone(),
        c_ins: um.c_ins,
        step_records,
        query_count,
        em_invocations,
        labeled_final: labeled,
        metric_curve,
        final_state: state,
    })
}
