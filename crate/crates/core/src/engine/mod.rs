//! The adaptive test loop: select, answer, update, check.

mod config;
mod session;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::irt::{Ability, ItemBank, ItemParams};

pub use config::{EngineConfig, ExplorationConfig, SelectionPolicy, StopRule, TerminationCriterion};
pub use session::{
    check_termination, effective_theta, init_session, top_informative, trend_slope, Decision, Phase, ResponseEntry,
    SessionState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("item bank is empty")]
    EmptyBank,
    #[error("out of items: no eligible unadministered item remains")]
    OutOfItems,
    #[error("item {0} already has a recorded response")]
    DuplicateResponse(String),
    #[error("response recorded for {got} but {expected} was selected")]
    NotSelected { expected: String, got: String },
    #[error("item index {0} is outside the bank")]
    UnknownItemIndex(usize),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Estimation(#[from] CalibrationError),
}

/// Supplies answers to presented items.
pub trait AnswerSource {
    /// Whether the learner answers `item` correctly at `step`.
    fn answer(&mut self, item_index: usize, item: &ItemParams, step: usize) -> bool;

    /// Restricts selection, e.g. to items with a recorded answer.
    fn is_eligible(&self, _item_index: usize) -> bool {
        true
    }
}

impl<F: FnMut(usize, &ItemParams, usize) -> bool> AnswerSource for F {
    fn answer(&mut self, item_index: usize, item: &ItemParams, step: usize) -> bool {
        self(item_index, item, step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    /// Hit `max_steps` without converging.
    ForcedStop,
    /// No eligible item was left; also a forced termination.
    OutOfItems,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::Converged => "converged",
            TerminationReason::ForcedStop => "forced_stop",
            TerminationReason::OutOfItems => "out_of_items",
        }
    }
}

/// Outcome of a finished session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    pub seed: u64,
    pub ability: Ability,
    pub responses: Vec<ResponseEntry>,
    pub theta_trajectory: Vec<f64>,
    pub sem_trajectory: Vec<f64>,
    /// Number of administered items when the test stopped.
    pub length: usize,
    pub reason: TerminationReason,
    /// Step at which the criterion first reported convergence, if it did.
    pub converged_at: Option<usize>,
}

impl SessionResult {
    fn from_state(state: SessionState, reason: TerminationReason, converged_at: Option<usize>, length: usize) -> Self {
        let n_counted = state.responses().iter().filter(|r| r.counted).count();
        let ability = Ability {
            theta: state.theta_trajectory()[length],
            standard_error: state.sem_trajectory()[length],
            n_responses: n_counted,
        };
        Self {
            seed: state.rng_seed(),
            ability,
            responses: state.responses().to_vec(),
            theta_trajectory: state.theta_trajectory().to_vec(),
            sem_trajectory: state.sem_trajectory().to_vec(),
            length,
            reason,
            converged_at,
        }
    }

    /// Estimate at the end of the recorded trajectory.
    pub fn final_theta(&self) -> f64 {
        *self.theta_trajectory.last().expect("trajectory is never empty")
    }
}

/// Runs a full session until the criterion stops it.
pub fn run_session<S: AnswerSource + ?Sized>(
    source: &mut S,
    bank: &ItemBank,
    config: &EngineConfig,
    seed: u64,
) -> Result<SessionResult, EngineError> {
    run_session_with_overrun(source, bank, config, seed, 0)
}

/// As [`run_session`], but keeps administering `overrun` more items after
/// convergence. The reported ability and length stay those at convergence.
pub fn run_session_with_overrun<S: AnswerSource + ?Sized>(
    source: &mut S,
    bank: &ItemBank,
    config: &EngineConfig,
    seed: u64,
    overrun: usize,
) -> Result<SessionResult, EngineError> {
    let mut state = init_session(seed, bank, config)?;
    let mut stop: Option<(TerminationReason, usize)> = None;
    loop {
        match stop {
            Some((TerminationReason::Converged, at)) if state.step() < at + overrun => {}
            Some(_) => break,
            None => match check_termination(&state, &config.criterion) {
                Decision::Continue => {}
                Decision::Converged => {
                    stop = Some((TerminationReason::Converged, state.step()));
                    continue;
                }
                Decision::ForcedStop => {
                    stop = Some((TerminationReason::ForcedStop, state.step()));
                    break;
                }
            },
        }
        let item = match state.select_next_item(bank, &config.policy, &config.exploration, |i| source.is_eligible(i)) {
            Ok(i) => i,
            Err(EngineError::OutOfItems) => {
                if stop.is_none() {
                    stop = Some((TerminationReason::OutOfItems, state.step()));
                }
                break;
            }
            Err(e) => return Err(e),
        };
        let correct = source.answer(item, bank.get(item), state.step());
        state.record_response(bank, item, correct)?;
    }
    let (reason, length) = stop.expect("loop exits only after deciding");
    let converged_at = (reason == TerminationReason::Converged).then_some(length);
    Ok(SessionResult::from_state(state, reason, converged_at, length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::ItemParams;

    fn bank(n: usize, c: f64) -> ItemBank {
        ItemBank::new(
            (0..n)
                .map(|i| ItemParams::new(format!("Q{i:04}"), 0.8 + (i % 7) as f64 * 0.2, -3.5 + 7.0 * i as f64 / n as f64, c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn always_correct_is_monotone() {
        let b = bank(300, 0.0);
        let cfg = EngineConfig { warmup_length: 10, ..EngineConfig::new(TerminationCriterion::fixed_length(40)) };
        let mut always = |_: usize, _: &ItemParams, _: usize| true;
        let r = run_session(&mut always, &b, &cfg, 3).unwrap();
        assert_eq!(r.reason, TerminationReason::Converged);
        assert_eq!(r.length, 40);
        let main = &r.theta_trajectory[10..];
        assert!(main.iter().all(|t| r.ability.theta >= *t));
        assert_eq!(r.theta_trajectory.len(), r.responses.len() + 1);
    }

    #[test]
    fn seeded_sessions_are_identical() {
        let b = bank(200, 0.25);
        let cfg = EngineConfig {
            exploration: ExplorationConfig::default(),
            ..EngineConfig::new(TerminationCriterion::early_stop(10, 0.05))
        };
        let run = |seed| {
            let mut k = 0u64;
            let mut alt = move |_: usize, _: &ItemParams, s: usize| {
                k = k.wrapping_mul(6364136223846793005).wrapping_add(s as u64 + 1);
                !(k >> 33).is_multiple_of(3)
            };
            run_session(&mut alt, &b, &cfg, seed).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).theta_trajectory, run(10).theta_trajectory);
    }

    #[test]
    fn no_item_twice_and_out_of_items() {
        let b = bank(30, 0.0);
        let cfg = EngineConfig::new(TerminationCriterion::fixed_length(60));
        let mut flip = |i: usize, _: &ItemParams, _: usize| i.is_multiple_of(2);
        let r = run_session(&mut flip, &b, &cfg, 1).unwrap();
        assert_eq!(r.reason, TerminationReason::OutOfItems);
        assert_eq!(r.length, 30);
        let mut seen: Vec<usize> = r.responses.iter().map(|e| e.item).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn forced_stop_at_max_steps() {
        let b = bank(300, 0.25);
        let cfg = EngineConfig::new(TerminationCriterion::sem_threshold(0.01));
        let mut src = |i: usize, _: &ItemParams, _: usize| !i.is_multiple_of(3);
        let r = run_session(&mut src, &b, &cfg, 1).unwrap();
        assert_eq!(r.reason, TerminationReason::ForcedStop);
        assert_eq!(r.length, 100);
        assert_eq!(r.converged_at, None);
    }

    #[test]
    fn overrun_continues_past_convergence() {
        let b = bank(400, 0.25);
        let cfg = EngineConfig::new(TerminationCriterion::fixed_length(30));
        let mut src = |i: usize, _: &ItemParams, _: usize| i.is_multiple_of(2);
        let r = run_session_with_overrun(&mut src, &b, &cfg, 5, 10).unwrap();
        assert_eq!(r.converged_at, Some(30));
        assert_eq!(r.length, 30);
        assert_eq!(r.responses.len(), 40);
        assert_eq!(r.ability.theta, r.theta_trajectory[30]);
    }

    struct Restricted;
    impl AnswerSource for Restricted {
        fn answer(&mut self, _: usize, _: &ItemParams, _: usize) -> bool {
            true
        }
        fn is_eligible(&self, i: usize) -> bool {
            i.is_multiple_of(10)
        }
    }

    #[test]
    fn eligibility_restricts_selection() {
        let b = bank(300, 0.25);
        let cfg = EngineConfig::new(TerminationCriterion::fixed_length(25));
        let r = run_session(&mut Restricted, &b, &cfg, 5).unwrap();
        assert!(r.responses.iter().all(|e| e.item % 10 == 0));
    }
}
