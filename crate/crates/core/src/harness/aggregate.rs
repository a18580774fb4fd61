use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, RunSummary, Variant};
use crate::error::{Error, Result};

/// Linear-interpolation quantile of an ascending slice (the usual "type 7"
/// estimator). Returns NaN for an empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub query_count: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Aligns per-run curves on the query count. `curves[r][q]` is run `r`'s
/// value after `q` queries. A run that stopped before `q` contributes its
/// last value. The output stops at the largest `q` that at least a quarter
/// of the runs reached on their own.
pub fn align_curves(curves: &[Vec<f64>]) -> Vec<QuantilePoint> {
    let runs: Vec<&Vec<f64>> = curves.iter().filter(|c| !c.is_empty()).collect();
    if runs.is_empty() {
        return Vec::new();
    }
    let mut lengths: Vec<usize> = runs.iter().map(|c| c.len()).collect();
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    // Need ceil(n / 4) runs with a raw value at q, i.e. len > q.
    let needed = runs.len().div_ceil(4);
    let last_q = lengths[needed - 1] - 1;

    let mut column = Vec::with_capacity(runs.len());
    (0..=last_q)
        .map(|q| {
            column.clear();
            column.extend(runs.iter().map(|c| c[q.min(c.len() - 1)]));
            column.sort_by(f64::total_cmp);
            QuantilePoint {
                query_count: q,
                q25: quantile(&column, 0.25),
                median: quantile(&column, 0.5),
                q75: quantile(&column, 0.75),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub total_queries: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    /// Total queries per repetition, in repetition order.
    pub query_counts: Vec<usize>,
    pub median_queries: f64,
    pub query_histogram: Vec<HistogramBin>,
    /// Number of repetitions that queried each unlabeled-stream position.
    pub queries_by_index: Vec<usize>,
    /// Per-repetition share of queries made in the first cycle.
    pub first_cycle_fraction: Vec<f64>,
    pub mean_first_cycle_fraction: f64,
    pub split_fingerprints: Vec<String>,
    pub decision_accuracy: Vec<QuantilePoint>,
    pub macro_f1: Vec<QuantilePoint>,
}

impl VariantReport {
    fn from_runs(variant: Variant, runs: &[&RunSummary]) -> Self {
        let query_counts: Vec<usize> = runs.iter().map(|r| r.query_count).collect();
        let mut sorted: Vec<f64> = query_counts.iter().map(|&q| q as f64).collect();
        sorted.sort_by(f64::total_cmp);

        let mut hist = BTreeMap::new();
        for &q in &query_counts {
            *hist.entry(q).or_insert(0usize) += 1;
        }
        let stream_len = runs.iter().map(|r| r.stream_len).max().unwrap_or(0);
        let mut queries_by_index = vec![0usize; stream_len];
        for r in runs {
            for &i in &r.queried_indices {
                queries_by_index[i] += 1;
            }
        }
        let first_cycle_fraction: Vec<f64> =
            runs.iter().map(|r| r.first_cycle_fraction()).collect();
        let mean_first_cycle_fraction =
            first_cycle_fraction.iter().sum::<f64>() / first_cycle_fraction.len().max(1) as f64;

        let curve_of = |f: fn(&crate::active_learner::MetricPoint) -> f64| {
            let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.curve.iter().map(f).collect()).collect();
            align_curves(&curves)
        };
        Self {
            variant,
            median_queries: quantile(&sorted, 0.5),
            query_histogram: hist
                .into_iter()
                .map(|(total_queries, count)| HistogramBin {
                    total_queries,
                    count,
                })
                .collect(),
            queries_by_index,
            first_cycle_fraction,
            mean_first_cycle_fraction,
            split_fingerprints: runs.iter().map(|r| r.split_fingerprint.clone()).collect(),
            decision_accuracy: curve_of(|m| m.decision_accuracy),
            macro_f1: curve_of(|m| m.macro_f1),
            query_counts,
        }
    }
}

/// Everything `report.json` holds: the full config echo plus per-variant
/// aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub variants: Vec<VariantReport>,
}

impl AggregateReport {
    /// Aggregates run summaries. Runs are keyed by repetition index, so the
    /// input order does not matter.
    pub fn from_runs(config: &ExperimentConfig, mut runs: Vec<RunSummary>) -> Result<Self> {
        runs.sort_by_key(|r| (r.variant, r.rep));
        let variants = config
            .variant_set()
            .into_iter()
            .map(|variant| {
                let selected: Vec<&RunSummary> =
                    runs.iter().filter(|r| r.variant == variant).collect();
                if selected.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "no runs recorded for variant {variant}"
                    )));
                }
                Ok(VariantReport::from_runs(variant, &selected))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            variants,
        })
    }

    pub fn variant(&self, variant: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.variant == variant)
    }
}
