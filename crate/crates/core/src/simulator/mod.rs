//! Monte-Carlo examinees and the batch experiments built on them.

mod batch;
mod replay;
mod sweeps;
pub mod synth;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_session_with_overrun, AnswerSource, EngineConfig, EngineError, SessionResult};
use crate::irt::{prob_correct, ItemBank, ItemParams};
use crate::rng::{stream_rng, SimRng, Stream};

pub use batch::{run_batch, run_batch_against, BatchMetrics, BatchOutcome, BatchSettings, SessionSummary};
pub use replay::{
    group_sessions, manual_difficulty_bank, run_real_replay, ReplayMode, ReplayOutcome, ReplaySession, ReplaySource,
};
pub use sweeps::{
    appendix_overall_rules, early_stop_grid, fixed_length_grid, run_artificial_grid, run_slip_exploration_sweep,
    run_termination_sweep, sem_grid, slip_exploration_grid, GRID_OVERRUN, GridTrace, MetricsRow, SweepKind, SweepSetting, TermSweepSettings,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("session {learner} references unknown item {item}")]
    UnknownItem { learner: String, item: String },
    #[error("no CEFR level for item {0}")]
    MissingItemLevel(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Probability that a sampled correct answer is flipped to wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlipSchedule {
    pub base_rate: f64,
    /// Rate applied while `step < early_window`.
    pub early_rate: f64,
    pub early_window: usize,
}

impl Default for SlipSchedule {
    fn default() -> Self {
        Self::constant(0.05)
    }
}

impl SlipSchedule {
    pub fn constant(rate: f64) -> Self {
        Self {
            base_rate: rate,
            early_rate: rate,
            early_window: 0,
        }
    }

    pub fn none() -> Self {
        Self::constant(0.0)
    }

    /// 0.6 for the first ten steps, then 0.1.
    pub fn early_aberrant() -> Self {
        Self {
            base_rate: 0.1,
            early_rate: 0.6,
            early_window: 10,
        }
    }

    pub fn rate_at(&self, step: usize) -> f64 {
        if step < self.early_window {
            self.early_rate
        } else {
            self.base_rate
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.base_rate) || !(0.0..=1.0).contains(&self.early_rate) {
            return Err(SimError::InvalidConfig("slip rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One simulated examinee and the engine settings used to test them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub theta_true: f64,
    #[serde(default)]
    pub slip: SlipSchedule,
    pub engine: EngineConfig,
    pub seed: u64,
}

/// Samples an answer from the true ability, then applies the slip flip.
pub fn simulate_answer<R: Rng + ?Sized>(theta_true: f64, item: &ItemParams, step: usize, slip: &SlipSchedule, rng: &mut R) -> bool {
    let correct = rng.random::<f64>() < prob_correct(theta_true, item);
    if !correct {
        return false;
    }
    let rate = slip.rate_at(step);
    !(rate > 0.0 && rng.random::<f64>() < rate)
}

/// Answer source for a simulated examinee with its own random stream.
///
/// With `answer_bank` set, answers follow that bank's parameters for the
/// presented position instead of the parameters the engine sees.
#[derive(Debug, Clone)]
pub struct SimulatedExaminee<'a> {
    pub theta_true: f64,
    pub slip: SlipSchedule,
    answer_bank: Option<&'a ItemBank>,
    rng: SimRng,
}

impl<'a> SimulatedExaminee<'a> {
    pub fn new(theta_true: f64, slip: SlipSchedule, seed: u64) -> Self {
        Self {
            theta_true,
            slip,
            answer_bank: None,
            rng: stream_rng(seed, Stream::Answers),
        }
    }

    pub fn with_answer_bank(mut self, bank: &'a ItemBank) -> Self {
        self.answer_bank = Some(bank);
        self
    }
}

impl AnswerSource for SimulatedExaminee<'_> {
    fn answer(&mut self, item_index: usize, item: &ItemParams, step: usize) -> bool {
        let item = self.answer_bank.map_or(item, |b| b.get(item_index));
        simulate_answer(self.theta_true, item, step, &self.slip, &mut self.rng)
    }
}

/// Runs one simulated session, optionally continuing `overrun` items past convergence.
pub fn run_simulation(config: &SimulationConfig, bank: &ItemBank, overrun: usize) -> Result<SessionResult, SimError> {
    run_simulation_against(config, bank, bank, overrun)
}

/// One session where the engine uses `bank` and the examinee answers from `answer_bank`.
pub fn run_simulation_against(
    config: &SimulationConfig,
    bank: &ItemBank,
    answer_bank: &ItemBank,
    overrun: usize,
) -> Result<SessionResult, SimError> {
    config.slip.validate()?;
    let mut examinee = SimulatedExaminee::new(config.theta_true, config.slip, config.seed).with_answer_bank(answer_bank);
    Ok(run_session_with_overrun(&mut examinee, bank, &config.engine, config.seed, overrun)?)
}
