//! Test-set performance measures: decision accuracy and macro-averaged f1.

use crate::classifier::{ClassifierState, Posterior};
use crate::dataset::{HealthLabel, Observation, NUM_CLASSES};
use crate::decision::{meu, optimal_action_given_state, TransitionModel, UtilityModel};
use crate::error::{Error, Result};

/// Anything that produces a class posterior for a feature vector.
pub trait Classifier {
    fn posterior(&self, x: &[f64]) -> Result<Posterior>;
}

impl Classifier for ClassifierState {
    fn posterior(&self, x: &[f64]) -> Result<Posterior> {
        self.predict_posterior(x)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &Posterior) -> usize {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// Fraction of test points where the classifier-driven action matches the
/// action of an agent that knows the true state.
pub fn decision_accuracy<C: Classifier + ?Sized>(
    classifier: &C,
    test: &[Observation],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> Result<f64> {
    Ok(evaluate(classifier, test, tm, um)?.decision_accuracy)
}

/// Unweighted mean of per-class f1 over all four classes; a class with
/// `precision + recall = 0` scores 0.
pub fn macro_f1<C: Classifier + ?Sized>(classifier: &C, test: &[Observation]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut predicted = Vec::with_capacity(test.len());
    for obs in test {
        predicted.push(HealthLabel::from_index(argmax(&classifier.posterior(&obs.x)?))?);
    }
    let truth: Vec<_> = test.iter().map(|o| o.y_true).collect();
    Ok(macro_f1_from_labels(&predicted, &truth))
}

pub fn macro_f1_from_labels(predicted: &[HealthLabel], truth: &[HealthLabel]) -> f64 {
    let mut tp = [0usize; NUM_CLASSES];
    let mut fp = [0usize; NUM_CLASSES];
    let mut fn_ = [0usize; NUM_CLASSES];
    for (p, t) in predicted.iter().zip(truth) {
        if p == t {
            tp[p.index()] += 1;
        } else {
            fp[p.index()] += 1;
            fn_[t.index()] += 1;
        }
    }
    let f1_sum: f64 = (0..NUM_CLASSES)
        .map(|k| {
            let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            let precision = ratio(tp[k], tp[k] + fp[k]);
            let recall = ratio(tp[k], tp[k] + fn_[k]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    f1_sum / NUM_CLASSES as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub decision_accuracy: f64,
    pub macro_f1: f64,
    pub label_accuracy: f64,
}

/// All test-set measures from a single posterior pass.
pub fn evaluate<C: Classifier + ?Sized>(
    classifier: &C,
    test: &[Observation],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let optimal: Vec<_> = HealthLabel::ALL
        .iter()
        .map(|&y| optimal_action_given_state(y, tm, um))
        .collect();
    let mut correct_actions = 0usize;
    let mut predicted = Vec::with_capacity(test.len());
    let mut truth = Vec::with_capacity(test.len());
    for obs in test {
        let p = classifier.posterior(&obs.x)?;
        if meu(&p, tm, um)?.0 == optimal[obs.y_true.index()] {
            correct_actions += 1;
        }
        predicted.push(HealthLabel::from_index(argmax(&p))?);
        truth.push(obs.y_true);
    }
    let n = test.len() as f64;
    let label_hits = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
    Ok(Evaluation {
        decision_accuracy: correct_actions as f64 / n,
        macro_f1: macro_f1_from_labels(&predicted, &truth),
        label_accuracy: label_hits as f64 / n,
    })
}
