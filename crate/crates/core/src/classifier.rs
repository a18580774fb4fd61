//! Four-class Bayesian Gaussian mixture classifier.
//!
//! Each class carries a Normal-Inverse-Wishart prior over its mean and
//! covariance, and the mixing proportions carry a Dirichlet prior. The state
//! keeps the joint posterior mode (MAP) of every parameter and classifies by
//! plugging those point estimates into the mixture density.
//!
//! Supervised fitting is a single conjugate update from labeled counts.
//! Semi-supervised refinement runs MAP-EM: labeled points keep one-hot
//! responsibilities at their true class, unlabeled points receive soft
//! responsibilities from the current model, and the M-step is the same
//! conjugate update with fractional counts. Each iteration therefore cannot
//! decrease the penalized log posterior returned by
//! [`penalized_log_posterior`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataset::{HealthLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gaussian::{
    cholesky_lower, log_det_from_cholesky, log_sum_exp, serde_matrix, serde_vector,
    GaussianDensity,
};

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub type Posterior = [f64; NUM_CLASSES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: HealthLabel,
}

/// Normal-Inverse-Wishart hyperparameters for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    #[serde(with = "serde_vector")]
    pub mean: DVector<f64>,
    pub kappa: f64,
    pub nu: f64,
    #[serde(with = "serde_matrix")]
    pub scatter: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct ConjugatePrior {
    classes: Vec<ClassPrior>,
    alpha: [f64; NUM_CLASSES],
}

#[derive(Deserialize)]
struct RawPrior {
    classes: Vec<ClassPrior>,
    alpha: [f64; NUM_CLASSES],
}

impl TryFrom<RawPrior> for ConjugatePrior {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        ConjugatePrior::new(raw.classes, raw.alpha)
    }
}

impl ConjugatePrior {
    pub fn new(classes: Vec<ClassPrior>, alpha: [f64; NUM_CLASSES]) -> Result<Self> {
        if classes.len() != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "prior needs {NUM_CLASSES} classes, got {}",
                classes.len()
            )));
        }
        let dim = classes[0].mean.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("prior dimension must be positive".into()));
        }
        for (k, c) in classes.iter().enumerate() {
            if c.mean.len() != dim || c.scatter.nrows() != dim || c.scatter.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.mean.len(),
                });
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            if !(c.kappa > 0.0) || !(c.nu > dim as f64 - 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "class {} prior needs kappa > 0 and nu > D - 1",
                    k + 1
                )));
            }
            cholesky_lower(&c.scatter, &format!("class {} prior scatter", k + 1))?;
        }
        if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidConfig(
                "mixing pseudo-counts must be positive".into(),
            ));
        }
        Ok(Self { classes, alpha })
    }

    /// Weakly informative defaults: zero mean, `kappa = 0.1`, `nu = D + 2`,
    /// identity scatter and unit pseudo-counts.
    pub fn weakly_informative(dim: usize) -> Self {
        let class = ClassPrior {
            mean: DVector::zeros(dim),
            kappa: 0.1,
            nu: dim as f64 + 2.0,
            scatter: DMatrix::identity(dim, dim),
        };
        Self {
            classes: vec![class; NUM_CLASSES],
            alpha: [1.0; NUM_CLASSES],
        }
    }

    pub fn dim(&self) -> usize {
        self.classes[0].mean.len()
    }

    pub fn classes(&self) -> &[ClassPrior] {
        &self.classes
    }

    pub fn alpha(&self) -> &[f64; NUM_CLASSES] {
        &self.alpha
    }

    /// `log p(Θ)`: NIW density of every component plus the Dirichlet density
    /// of the mixing weights.
    fn log_density(&self, components: &[Component], mixing: &Posterior) -> f64 {
        let dim = self.dim();
        let d = dim as f64;
        let mut total = 0.0;
        for (prior, comp) in self.classes.iter().zip(components) {
            let log_det_cov = comp.log_det;
            // mean | cov ~ N(m0, cov / kappa0)
            total += -0.5 * d * LN_2PI - 0.5 * (log_det_cov - d * prior.kappa.ln())
                - 0.5 * prior.kappa * comp.density.mahalanobis_sq(prior.mean.as_slice());
            // cov ~ IW(S0, nu0)
            let prior_log_det = log_det_from_cholesky(
                &cholesky_lower(&prior.scatter, "prior scatter").expect("validated"),
            );
            let trace = (&prior.scatter * &comp.precision).trace();
            total += 0.5 * prior.nu * prior_log_det
                - 0.5 * prior.nu * d * LN_2
                - ln_multigamma(dim, 0.5 * prior.nu)
                - 0.5 * (prior.nu + d + 1.0) * log_det_cov
                - 0.5 * trace;
        }
        let alpha_sum: f64 = self.alpha.iter().sum();
        total += ln_gamma(alpha_sum) - self.alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>();
        for (a, p) in self.alpha.iter().zip(mixing) {
            if *a != 1.0 {
                total += (a - 1.0) * p.ln();
            }
        }
        total
    }
}

/// `log Γ_D(a)`.
fn ln_multigamma(dim: usize, a: f64) -> f64 {
    let d = dim as f64;
    0.25 * d * (d - 1.0) * LN_PI + (1..=dim).map(|j| ln_gamma(a + 0.5 * (1.0 - j as f64))).sum::<f64>()
}

/// Weighted sufficient statistics for one class. `count` is fractional after
/// EM; `scatter` is centred on `mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: f64,
    #[serde(with = "serde_vector")]
    pub mean: DVector<f64>,
    #[serde(with = "serde_matrix")]
    pub scatter: DMatrix<f64>,
}

impl ClassStats {
    fn empty(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    /// Two-pass weighted mean and scatter. `points` is iterated twice.
    fn from_weighted<'a, I>(dim: usize, points: I) -> Self
    where
        I: Iterator<Item = (&'a [f64], f64)> + Clone,
    {
        let mut count = 0.0;
        let mut sum = vec![0.0; dim];
        for (x, w) in points.clone() {
            count += w;
            for (s, v) in sum.iter_mut().zip(x) {
                *s += w * v;
            }
        }
        if !(count > 0.0) {
            return Self::empty(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut scatter = vec![0.0; dim * dim];
        let mut diff = vec![0.0; dim];
        for (x, w) in points {
            if w == 0.0 {
                continue;
            }
            for ((d, v), m) in diff.iter_mut().zip(x).zip(&mean) {
                *d = v - m;
            }
            for i in 0..dim {
                for j in 0..=i {
                    scatter[i * dim + j] += w * diff[i] * diff[j];
                }
            }
        }
        let scatter = DMatrix::from_fn(dim, dim, |i, j| {
            let (a, b) = if j <= i { (i, j) } else { (j, i) };
            scatter[a * dim + b]
        });
        Self {
            count,
            mean: DVector::from_vec(mean),
            scatter,
        }
    }
}

#[derive(Debug, Clone)]
struct Component {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det: f64,
    density: GaussianDensity,
}

impl Component {
    fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let l = cholesky_lower(&covariance, "MAP covariance")?;
        let log_det = log_det_from_cholesky(&l);
        let precision = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: "MAP covariance".into(),
            })?
            .inverse();
        let density = GaussianDensity::new(&mean, &covariance)?;
        Ok(Self {
            mean,
            covariance,
            precision,
            log_det,
            density,
        })
    }
}

/// Posterior mode of the mixing weights: Dirichlet mode when every
/// `alpha_k + n_k > 1`, otherwise the normalized posterior mean (the mode
/// would put zero mass on some class).
fn map_mixing(alpha: &[f64; NUM_CLASSES], counts: &[f64; NUM_CLASSES]) -> Posterior {
    let post: Vec<f64> = alpha.iter().zip(counts).map(|(a, n)| a + n).collect();
    let use_mode = post.iter().all(|p| *p > 1.0);
    let shifted: Vec<f64> = if use_mode {
        post.iter().map(|p| p - 1.0).collect()
    } else {
        post
    };
    let total: f64 = shifted.iter().sum();
    let mut out = [0.0; NUM_CLASSES];
    for (o, s) in out.iter_mut().zip(&shifted) {
        *o = s / total;
    }
    out
}

/// Joint NIW posterior mode for one class.
fn map_component(prior: &ClassPrior, stats: &ClassStats) -> Result<Component> {
    let d = prior.mean.len() as f64;
    let n = stats.count;
    if !(n > 0.0) {
        let cov = &prior.scatter / (prior.nu + d + 2.0);
        return Component::new(prior.mean.clone(), cov);
    }
    let kappa_n = prior.kappa + n;
    let mean_n = (&prior.mean * prior.kappa + &stats.mean * n) / kappa_n;
    let nu_n = prior.nu + n;
    let delta = &stats.mean - &prior.mean;
    let mut scatter_n =
        &prior.scatter + &stats.scatter + (&delta * delta.transpose()) * (prior.kappa * n / kappa_n);
    // keep exact symmetry for the Cholesky check
    scatter_n = (&scatter_n + scatter_n.transpose()) * 0.5;
    Component::new(mean_n, scatter_n / (nu_n + d + 2.0))
}

/// MAP parameters of the mixture together with the statistics and prior that
/// produced them. Immutable; every update returns a new state.
#[derive(Debug, Clone)]
pub struct ClassifierState {
    prior: ConjugatePrior,
    stats: Vec<ClassStats>,
    components: Vec<Component>,
    mixing: Posterior,
    log_mixing: Posterior,
}

impl ClassifierState {
    pub fn from_stats(prior: ConjugatePrior, stats: Vec<ClassStats>) -> Result<Self> {
        if stats.len() != NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "expected statistics for {NUM_CLASSES} classes"
            )));
        }
        let components = prior
            .classes
            .iter()
            .zip(&stats)
            .map(|(p, s)| map_component(p, s))
            .collect::<Result<Vec<_>>>()?;
        let counts: [f64; NUM_CLASSES] = std::array::from_fn(|k| stats[k].count);
        let mixing = map_mixing(&prior.alpha, &counts);
        Ok(Self {
            log_mixing: mixing.map(f64::ln),
            prior,
            stats,
            components,
            mixing,
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &ConjugatePrior {
        &self.prior
    }

    pub fn stats(&self) -> &[ClassStats] {
        &self.stats
    }

    pub fn map_mean(&self, class: usize) -> &DVector<f64> {
        &self.components[class].mean
    }

    pub fn map_covariance(&self, class: usize) -> &DMatrix<f64> {
        &self.components[class].covariance
    }

    pub fn map_mixing(&self) -> &Posterior {
        &self.mixing
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `log π_k + log N(x; μ_k, Σ_k)` per class.
    #[inline]
    fn log_joint(&self, x: &[f64]) -> Posterior {
        std::array::from_fn(|k| self.log_mixing[k] + self.components[k].density.log_pdf(x))
    }

    /// `p(y = k | x)` under the MAP plug-in mixture.
    pub fn predict_posterior(&self, x: &[f64]) -> Result<Posterior> {
        self.check_point(x)?;
        Ok(self.posterior_unchecked(x))
    }

    #[inline]
    pub(crate) fn posterior_unchecked(&self, x: &[f64]) -> Posterior {
        let logs = self.log_joint(x);
        let norm = log_sum_exp(&logs);
        logs.map(|l| (l - norm).exp())
    }

    /// Most probable class under the plug-in posterior (lowest index on ties).
    pub fn predict_label(&self, x: &[f64]) -> Result<HealthLabel> {
        let p = self.predict_posterior(x)?;
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if p[k] > p[best] {
                best = k;
            }
        }
        HealthLabel::from_index(best)
    }

    /// Largest absolute difference between the MAP parameters of two states.
    pub fn parameter_distance(&self, other: &ClassifierState) -> f64 {
        let mut dist: f64 = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            dist = dist.max((&a.mean - &b.mean).amax());
            dist = dist.max((&a.covariance - &b.covariance).amax());
        }
        for (a, b) in self.mixing.iter().zip(&other.mixing) {
            dist = dist.max((a - b).abs());
        }
        dist
    }
}

/// Conjugate MAP fit from labeled data only. An empty set yields the
/// prior-only state.
pub fn fit_supervised(prior: &ConjugatePrior, labeled: &[LabeledPoint]) -> Result<ClassifierState> {
    let dim = prior.dim();
    check_labeled(dim, labeled)?;
    let stats = (0..NUM_CLASSES)
        .map(|k| {
            ClassStats::from_weighted(
                dim,
                labeled
                    .iter()
                    .filter(move |p| p.y.index() == k)
                    .map(|p| (p.x.as_slice(), 1.0)),
            )
        })
        .collect();
    ClassifierState::from_stats(prior.clone(), stats)
}

fn check_labeled(dim: usize, labeled: &[LabeledPoint]) -> Result<()> {
    check_points(dim, labeled.iter().map(|p| p.x.as_slice()))
}

fn check_points<'a>(dim: usize, points: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    for x in points {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

/// Result of [`em_refine`]. `trace[0]` is the objective of the input state
/// and `trace[i]` the objective after the `i`-th M-step.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub state: ClassifierState,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Weighted moments per class, taken about a fixed shift point per class so
/// that the scatter can be formed in one pass without cancellation.
struct MomentAccumulator {
    dim: usize,
    shift: Vec<f64>,
    weight: [f64; NUM_CLASSES],
    first: Vec<f64>,
    /// Lower triangle, row-major `dim × dim` block per class.
    second: Vec<f64>,
}

impl MomentAccumulator {
    fn new(state: &ClassifierState) -> Self {
        let dim = state.dim();
        let shift = state
            .components
            .iter()
            .flat_map(|c| c.mean.iter().copied())
            .collect();
        Self {
            dim,
            shift,
            weight: [0.0; NUM_CLASSES],
            first: vec![0.0; NUM_CLASSES * dim],
            second: vec![0.0; NUM_CLASSES * dim * dim],
        }
    }

    #[inline]
    fn add(&mut self, k: usize, w: f64, x: &[f64]) {
        if w == 0.0 {
            return;
        }
        let d = self.dim;
        let shift = &self.shift[k * d..(k + 1) * d];
        let first = &mut self.first[k * d..(k + 1) * d];
        let second = &mut self.second[k * d * d..(k + 1) * d * d];
        self.weight[k] += w;
        for i in 0..d {
            let di = x[i] - shift[i];
            first[i] += w * di;
            let wdi = w * di;
            for j in 0..=i {
                second[i * d + j] += wdi * (x[j] - shift[j]);
            }
        }
    }

    fn finish(self) -> Vec<ClassStats> {
        let d = self.dim;
        (0..NUM_CLASSES)
            .map(|k| {
                let n = self.weight[k];
                if !(n > 0.0) {
                    return ClassStats::empty(d);
                }
                let first = &self.first[k * d..(k + 1) * d];
                let second = &self.second[k * d * d..(k + 1) * d * d];
                let mean = DVector::from_fn(d, |i, _| self.shift[k * d + i] + first[i] / n);
                let scatter = DMatrix::from_fn(d, d, |i, j| {
                    let (a, b) = if j <= i { (i, j) } else { (j, i) };
                    second[a * d + b] - first[a] * first[b] / n
                });
                ClassStats {
                    count: n,
                    mean,
                    scatter,
                }
            })
            .collect()
    }
}

/// One sweep over the data under `state`: returns the data part of the
/// penalized objective together with the expected sufficient statistics
/// (labeled points one-hot, unlabeled points weighted by responsibility).
fn em_pass(
    state: &ClassifierState,
    labeled: &[LabeledPoint],
    unlabeled: &[Vec<f64>],
) -> (f64, Vec<ClassStats>) {
    let mut acc = MomentAccumulator::new(state);
    let mut ll = 0.0;
    for p in labeled {
        let k = p.y.index();
        ll += state.log_mixing[k] + state.components[k].density.log_pdf(&p.x);
        acc.add(k, 1.0, &p.x);
    }
    for x in unlabeled {
        let logs = state.log_joint(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled = logs.map(|l| (l - max).exp());
        let total: f64 = scaled.iter().sum();
        ll += max + total.ln();
        for (k, e) in scaled.iter().enumerate() {
            acc.add(k, e / total, x);
        }
    }
    (ll, acc.finish())
}

/// Semi-supervised MAP-EM warm-started from `state`.
///
/// Stops when the relative change of the penalized log posterior falls below
/// `tol` or after `max_iter` M-steps. With no unlabeled data the problem has
/// no latent variables and a single M-step is exact.
pub fn em_refine(
    state: &ClassifierState,
    labeled: &[LabeledPoint],
    unlabeled: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<EmOutcome> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidConfig(
            "EM needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let dim = state.dim();
    check_labeled(dim, labeled)?;
    check_points(dim, unlabeled.iter().map(Vec::as_slice))?;

    let prior = &state.prior;
    let mut current = state.clone();
    let (ll, mut stats) = em_pass(&current, labeled, unlabeled);
    let mut objective = ll + prior.log_density(&current.components, &current.mixing);
    let mut trace = vec![objective];
    let mut iterations = 0;

    while iterations < max_iter {
        current = ClassifierState::from_stats(prior.clone(), stats)?;
        iterations += 1;
        let (ll, next_stats) = em_pass(&current, labeled, unlabeled);
        let next = ll + prior.log_density(&current.components, &current.mixing);
        trace.push(next);
        stats = next_stats;
        let converged = (next - objective).abs() / (1.0 + objective.abs()) < tol;
        objective = next;
        if converged || unlabeled.is_empty() {
            break;
        }
    }
    Ok(EmOutcome {
        state: current,
        iterations,
        trace,
    })
}

/// `J(Θ)`: labeled complete-data log-likelihood, unlabeled marginal
/// log-likelihood, and the log prior density of the MAP parameters.
pub fn penalized_log_posterior(
    state: &ClassifierState,
    labeled: &[LabeledPoint],
    unlabeled: &[Vec<f64>],
) -> Result<f64> {
    let dim = state.dim();
    check_labeled(dim, labeled)?;
    check_points(dim, unlabeled.iter().map(Vec::as_slice))?;
    Ok(em_pass(state, labeled, unlabeled).0 + state.prior.log_density(&state.components, &state.mixing))
}

#[derive(Serialize, Deserialize)]
struct ComponentSnapshot {
    #[serde(with = "serde_vector")]
    mean: DVector<f64>,
    #[serde(with = "serde_matrix")]
    covariance: DMatrix<f64>,
}

/// JSON form of a [`ClassifierState`].
#[derive(Serialize, Deserialize)]
struct StateSnapshot {
    prior: ConjugatePrior,
    stats: Vec<ClassStats>,
    map_components: Vec<ComponentSnapshot>,
    map_mixing: Posterior,
}

impl Serialize for ClassifierState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateSnapshot {
            prior: self.prior.clone(),
            stats: self.stats.clone(),
            map_components: self
                .components
                .iter()
                .map(|c| ComponentSnapshot {
                    mean: c.mean.clone(),
                    covariance: c.covariance.clone(),
                })
                .collect(),
            map_mixing: self.mixing,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassifierState {
    /// MAP parameters are recomputed from the prior and statistics.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let snap = StateSnapshot::deserialize(d)?;
        ClassifierState::from_stats(snap.prior, snap.stats).map_err(serde::de::Error::custom)
    }
}
