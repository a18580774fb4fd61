//! One-step maintenance decision process and the value of perfect information.
//!
//! The agent holds a belief over the current health state, picks an action,
//! and is paid the utility of the next state (through the action-conditioned
//! transition model) plus the utility of the action itself. Observing the
//! current state before acting swaps the order of `max` and expectation,
//! and the gap between the two orderings is the EVPI.

use serde::{Deserialize, Serialize};

use crate::dataset::{HealthLabel, NUM_CLASSES};
use crate::error::{Error, Result};

pub const NUM_ACTIONS: usize = 2;

const SIMPLEX_TOL: f64 = 1e-9;
const EVPI_NEGATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MaintenanceAction {
    DoNothing = 0,
    Repair = 1,
}

impl MaintenanceAction {
    pub const ALL: [MaintenanceAction; NUM_ACTIONS] =
        [MaintenanceAction::DoNothing, MaintenanceAction::Repair];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<u8> for MaintenanceAction {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(MaintenanceAction::DoNothing),
            1 => Ok(MaintenanceAction::Repair),
            _ => Err(format!("maintenance action {v} is not 0 or 1")),
        }
    }
}

impl From<MaintenanceAction> for u8 {
    fn from(a: MaintenanceAction) -> u8 {
        a as u8
    }
}

pub type Cpt = [[f64; NUM_CLASSES]; NUM_CLASSES];

/// `probs[a][i][j] = P(next = j | current = i, action = a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionModel {
    probs: [Cpt; NUM_ACTIONS],
}

impl TransitionModel {
    pub fn new(probs: [Cpt; NUM_ACTIONS]) -> Result<Self> {
        for (a, cpt) in probs.iter().enumerate() {
            for (i, row) in cpt.iter().enumerate() {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidConfig(format!(
                        "transition row {} for action {a} has entries outside [0, 1]",
                        i + 1
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "transition row {} for action {a} sums to {sum}",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[Cpt; NUM_ACTIONS] {
        &self.probs
    }
}

impl Default for TransitionModel {
    fn default() -> Self {
        Self {
            probs: [
                [
                    [0.8, 0.18, 0.015, 0.005],
                    [0.0, 0.8, 0.15, 0.05],
                    [0.0, 0.0, 0.8, 0.2],
                    [0.0, 0.0, 0.0, 1.0],
                ],
                [
                    [1.0, 0.0, 0.0, 0.0],
                    [0.99, 0.01, 0.0, 0.0],
                    [0.99, 0.0, 0.01, 0.0],
                    [0.99, 0.0, 0.0, 0.01],
                ],
            ],
        }
    }
}

impl<'de> Deserialize<'de> for TransitionModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            probs: [Cpt; NUM_ACTIONS],
        }
        let raw = Raw::deserialize(d)?;
        TransitionModel::new(raw.probs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityModel {
    pub u_state: [f64; NUM_CLASSES],
    pub u_action: [f64; NUM_ACTIONS],
    pub c_ins: f64,
}

impl UtilityModel {
    pub fn new(u_state: [f64; NUM_CLASSES], u_action: [f64; NUM_ACTIONS], c_ins: f64) -> Result<Self> {
        if !(c_ins >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inspection cost must be non-negative, got {c_ins}"
            )));
        }
        if u_state.iter().chain(&u_action).any(|u| !u.is_finite()) {
            return Err(Error::InvalidConfig("utilities must be finite".into()));
        }
        Ok(Self {
            u_state,
            u_action,
            c_ins,
        })
    }
}

impl Default for UtilityModel {
    fn default() -> Self {
        Self {
            u_state: [10.0, 10.0, 5.0, -75.0],
            u_action: [0.0, -30.0],
            c_ins: 7.0,
        }
    }
}

impl<'de> Deserialize<'de> for UtilityModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(default)]
        struct Raw {
            u_state: [f64; NUM_CLASSES],
            u_action: [f64; NUM_ACTIONS],
            c_ins: f64,
        }
        impl Default for Raw {
            fn default() -> Self {
                let u = UtilityModel::default();
                Raw {
                    u_state: u.u_state,
                    u_action: u.u_action,
                    c_ins: u.c_ins,
                }
            }
        }
        let raw = Raw::deserialize(d)?;
        UtilityModel::new(raw.u_state, raw.u_action, raw.c_ins).map_err(serde::de::Error::custom)
    }
}

/// Expected next-state utility of taking `action` in `state`, excluding the
/// action's own cost.
#[inline]
fn next_state_value(state: usize, action: usize, tm: &TransitionModel, um: &UtilityModel) -> f64 {
    tm.probs[action][state]
        .iter()
        .zip(&um.u_state)
        .map(|(p, u)| p * u)
        .sum()
}

fn check_simplex(posterior: &[f64; NUM_CLASSES]) -> Result<()> {
    let sum: f64 = posterior.iter().sum();
    let deviation = (sum - 1.0).abs();
    if !(deviation <= SIMPLEX_TOL) || posterior.iter().any(|p| !(*p >= -SIMPLEX_TOL)) {
        return Err(Error::InvalidSimplex {
            deviation: if deviation.is_nan() { f64::INFINITY } else { deviation },
        });
    }
    Ok(())
}

pub fn expected_utility(
    posterior: &[f64; NUM_CLASSES],
    action: MaintenanceAction,
    tm: &TransitionModel,
    um: &UtilityModel,
) -> Result<f64> {
    check_simplex(posterior)?;
    Ok(expected_utility_unchecked(posterior, action.index(), tm, um))
}

#[inline]
fn expected_utility_unchecked(
    posterior: &[f64; NUM_CLASSES],
    action: usize,
    tm: &TransitionModel,
    um: &UtilityModel,
) -> f64 {
    posterior
        .iter()
        .enumerate()
        .map(|(i, p)| p * next_state_value(i, action, tm, um))
        .sum::<f64>()
        + um.u_action[action]
}

/// Maximum expected utility without observing the state. Exact ties go to
/// `DoNothing`.
pub fn meu(
    posterior: &[f64; NUM_CLASSES],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> Result<(MaintenanceAction, f64)> {
    check_simplex(posterior)?;
    Ok(meu_unchecked(posterior, tm, um))
}

fn meu_unchecked(
    posterior: &[f64; NUM_CLASSES],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> (MaintenanceAction, f64) {
    let mut best = (MaintenanceAction::DoNothing, f64::NEG_INFINITY);
    for action in MaintenanceAction::ALL {
        let eu = expected_utility_unchecked(posterior, action.index(), tm, um);
        if eu > best.1 {
            best = (action, eu);
        }
    }
    best
}

/// Best action and its utility when the state is known exactly.
fn best_given_state(state: usize, tm: &TransitionModel, um: &UtilityModel) -> (MaintenanceAction, f64) {
    let mut best = (MaintenanceAction::DoNothing, f64::NEG_INFINITY);
    for action in MaintenanceAction::ALL {
        let v = next_state_value(state, action.index(), tm, um) + um.u_action[action.index()];
        if v > best.1 {
            best = (action, v);
        }
    }
    best
}

/// Maximum expected utility when the state is revealed before acting.
pub fn meu_perfect_info(
    posterior: &[f64; NUM_CLASSES],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> Result<f64> {
    check_simplex(posterior)?;
    Ok(meu_perfect_info_unchecked(posterior, tm, um))
}

fn meu_perfect_info_unchecked(
    posterior: &[f64; NUM_CLASSES],
    tm: &TransitionModel,
    um: &UtilityModel,
) -> f64 {
    posterior
        .iter()
        .enumerate()
        .map(|(i, p)| p * best_given_state(i, tm, um).1)
        .sum()
}

pub fn evpi(posterior: &[f64; NUM_CLASSES], tm: &TransitionModel, um: &UtilityModel) -> Result<f64> {
    check_simplex(posterior)?;
    let value = meu_perfect_info_unchecked(posterior, tm, um) - meu_unchecked(posterior, tm, um).1;
    if value < -EVPI_NEGATIVE_TOL {
        return Err(Error::Inconsistent(format!(
            "EVPI evaluated to {value:e} for posterior {posterior:?}"
        )));
    }
    Ok(value.max(0.0))
}

/// The action an agent holding perfect state information would take.
pub fn optimal_action_given_state(
    y: HealthLabel,
    tm: &TransitionModel,
    um: &UtilityModel,
) -> MaintenanceAction {
    best_given_state(y.index(), tm, um).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> (TransitionModel, UtilityModel) {
        (TransitionModel::default(), UtilityModel::default())
    }

    fn one_hot(k: usize) -> [f64; 4] {
        let mut p = [0.0; 4];
        p[k] = 1.0;
        p
    }

    #[test]
    fn expected_utility_hand_cases() {
        let (tm, um) = defaults();
        let eu = |p, a| expected_utility(&p, a, &tm, &um).unwrap();
        assert!((eu(one_hot(0), MaintenanceAction::DoNothing) - 9.5).abs() < 1e-12);
        assert!((eu(one_hot(3), MaintenanceAction::DoNothing) + 75.0).abs() < 1e-12);
        assert!((eu(one_hot(0), MaintenanceAction::Repair) + 20.0).abs() < 1e-12);
    }

    #[test]
    fn meu_hand_cases() {
        let (tm, um) = defaults();
        let (a, v) = meu(&[0.25; 4], &tm, &um).unwrap();
        assert_eq!(a, MaintenanceAction::DoNothing);
        assert!((v + 17.875).abs() < 1e-12);
        let (a, v) = meu(&one_hot(3), &tm, &um).unwrap();
        assert_eq!(a, MaintenanceAction::Repair);
        assert!((v + 20.85).abs() < 1e-12);
        let (a, v) = meu(&one_hot(0), &tm, &um).unwrap();
        assert_eq!(a, MaintenanceAction::DoNothing);
        assert!((v - 9.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_info_and_evpi_hand_cases() {
        let (tm, um) = defaults();
        let pi = |p| meu_perfect_info(&p, &tm, &um).unwrap();
        assert!((pi([0.25; 4]) + 4.3375).abs() < 1e-12);
        assert!((pi([0.5, 0.5, 0.0, 0.0]) - 7.25).abs() < 1e-12);
        assert!((evpi(&[0.25; 4], &tm, &um).unwrap() - 13.5375).abs() < 1e-9);
        assert!(evpi(&[0.5, 0.5, 0.0, 0.0], &tm, &um).unwrap().abs() < 1e-9);
        for k in 0..4 {
            assert_eq!(evpi(&one_hot(k), &tm, &um).unwrap(), 0.0);
            assert_eq!(pi(one_hot(k)), meu(&one_hot(k), &tm, &um).unwrap().1);
        }
    }

    #[test]
    fn optimal_policy_under_defaults() {
        let (tm, um) = defaults();
        let policy: Vec<_> = HealthLabel::ALL
            .iter()
            .map(|&y| optimal_action_given_state(y, &tm, &um))
            .collect();
        use MaintenanceAction::*;
        assert_eq!(policy, vec![DoNothing, DoNothing, DoNothing, Repair]);
    }

    #[test]
    fn ties_prefer_do_nothing() {
        let tm = TransitionModel::default();
        // Repair's action cost offsets its state gain exactly for class 1.
        let um = UtilityModel::new([10.0; 4], [0.0, 0.0], 7.0).unwrap();
        assert_eq!(
            meu(&one_hot(0), &tm, &um).unwrap().0,
            MaintenanceAction::DoNothing
        );
        assert_eq!(
            optimal_action_given_state(HealthLabel::new(1).unwrap(), &tm, &um),
            MaintenanceAction::DoNothing
        );
    }

    #[test]
    fn rejects_invalid_inputs() {
        let (tm, um) = defaults();
        assert!(matches!(
            evpi(&[0.5, 0.5, 0.5, 0.0], &tm, &um),
            Err(Error::InvalidSimplex { .. })
        ));
        assert!(evpi(&[f64::NAN, 0.5, 0.5, 0.0], &tm, &um).is_err());
        let mut probs = *tm.probs();
        probs[0][1][1] = 0.7;
        assert!(TransitionModel::new(probs).is_err());
        assert!(UtilityModel::new([0.0; 4], [0.0; 2], -1.0).is_err());
    }

    #[test]
    fn config_json_round_trip_validates() {
        let tm: TransitionModel =
            serde_json::from_str(&serde_json::to_string(&TransitionModel::default()).unwrap())
                .unwrap();
        assert_eq!(tm, TransitionModel::default());
        let bad = r#"{"probs": [[[0.5,0.5,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,0.9]],
                                [[1,0,0,0],[1,0,0,0],[1,0,0,0],[1,0,0,0]]]}"#;
        assert!(serde_json::from_str::<TransitionModel>(bad).is_err());
        let um: UtilityModel = serde_json::from_str(r#"{"c_ins": 3.0}"#).unwrap();
        assert_eq!(um.u_state, [10.0, 10.0, 5.0, -75.0]);
        assert_eq!(um.c_ins, 3.0);
    }
}
