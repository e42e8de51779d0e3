use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, TerminationReason};
use crate::irt::ItemBank;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::stats::{mean, std_dev};

use super::{run_simulation_against, SimError, SimulationConfig, SlipSchedule};

/// Shared settings for a batch of simulated sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSettings {
    #[serde(default)]
    pub slip: SlipSchedule,
    pub engine: EngineConfig,
    #[serde(default = "default_sessions")]
    pub n_sessions: usize,
    /// True abilities are drawn uniformly from this closed interval.
    #[serde(default = "default_range")]
    pub theta_range: (f64, f64),
}

fn default_sessions() -> usize {
    500
}

fn default_range() -> (f64, f64) {
    (-3.5, 3.5)
}

impl BatchSettings {
    pub fn new(engine: EngineConfig, slip: SlipSchedule) -> Self {
        Self {
            slip,
            engine,
            n_sessions: default_sessions(),
            theta_range: default_range(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.slip.validate()?;
        self.engine.validate()?;
        let (lo, hi) = self.theta_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SimError::InvalidConfig("theta_range must be a finite interval".into()));
        }
        Ok(())
    }
}

/// Per-session record kept by a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub index: usize,
    pub seed: u64,
    pub theta_true: f64,
    pub theta_hat: f64,
    pub length: usize,
    pub reason: TerminationReason,
}

impl SessionSummary {
    pub fn error(&self) -> f64 {
        self.theta_hat - self.theta_true
    }
}

/// Aggregates over a batch. Forced stops are included in every error metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMetrics {
    pub n_sessions: usize,
    pub mean_iterations: f64,
    pub sd_iterations: f64,
    pub mae: f64,
    /// SD of the signed error.
    pub sd_error: f64,
    pub mean_signed_error: f64,
    /// Share of sessions that stopped without converging.
    pub forced_stop_fraction: f64,
}

impl BatchMetrics {
    pub fn from_sessions(sessions: &[SessionSummary]) -> Self {
        let lengths: Vec<f64> = sessions.iter().map(|s| s.length as f64).collect();
        let errors: Vec<f64> = sessions.iter().map(SessionSummary::error).collect();
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        let forced = sessions.iter().filter(|s| s.reason != TerminationReason::Converged).count();
        Self {
            n_sessions: sessions.len(),
            mean_iterations: mean(&lengths),
            sd_iterations: std_dev(&lengths),
            mae: mean(&abs),
            sd_error: std_dev(&errors),
            mean_signed_error: mean(&errors),
            forced_stop_fraction: if sessions.is_empty() { 0.0 } else { forced as f64 / sessions.len() as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchOutcome {
    pub metrics: BatchMetrics,
    pub sessions: Vec<SessionSummary>,
}

/// True ability and seed of session `index`; identical across settings that share `master_seed`.
pub(crate) fn session_draw(master_seed: u64, index: usize, range: (f64, f64)) -> (u64, f64) {
    let seed = derive_seed(master_seed, index as u64);
    let u: f64 = stream_rng(seed, Stream::Truth).random();
    (seed, range.0 + (range.1 - range.0) * u)
}

/// Runs `n_sessions` independent sessions in parallel. Results are collected in
/// index order, so they do not depend on the number of worker threads.
pub fn run_batch(bank: &ItemBank, settings: &BatchSettings, master_seed: u64) -> Result<BatchOutcome, SimError> {
    run_batch_against(bank, bank, settings, master_seed)
}

/// As [`run_batch`], but examinees answer according to `answer_bank` while the
/// engine selects and scores with `bank`. Both banks must list the same items
/// in the same order.
pub fn run_batch_against(
    bank: &ItemBank,
    answer_bank: &ItemBank,
    settings: &BatchSettings,
    master_seed: u64,
) -> Result<BatchOutcome, SimError> {
    settings.validate()?;
    if bank.len() != answer_bank.len() {
        return Err(SimError::InvalidConfig("engine and answer banks differ in size".into()));
    }
    let sessions = (0..settings.n_sessions)
        .into_par_iter()
        .map(|index| {
            let (seed, theta_true) = session_draw(master_seed, index, settings.theta_range);
            let cfg = SimulationConfig {
                theta_true,
                slip: settings.slip,
                engine: settings.engine.clone(),
                seed,
            };
            let r = run_simulation_against(&cfg, bank, answer_bank, 0)?;
            Ok(SessionSummary {
                index,
                seed,
                theta_true,
                theta_hat: r.ability.theta,
                length: r.length,
                reason: r.reason,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(BatchOutcome {
        metrics: BatchMetrics::from_sessions(&sessions),
        sessions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TerminationCriterion;
    use crate::simulator::synth::BankSpec;

    #[test]
    fn deterministic_and_thread_independent() {
        let bank = BankSpec { n_items: 400, ..BankSpec::default() }.generate(4).unwrap();
        let mut s = BatchSettings::new(EngineConfig::new(TerminationCriterion::early_stop(10, 0.05)), SlipSchedule::constant(0.05));
        s.n_sessions = 24;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_batch(&bank, &s, 77)).unwrap();
        let b = three.install(|| run_batch(&bank, &s, 77)).unwrap();
        assert_eq!(a, b);
        assert!(a.sessions.iter().all(|x| (-3.5..=3.5).contains(&x.theta_true)));
    }

    #[test]
    fn fixed_length_batch_has_zero_length_spread() {
        let bank = BankSpec { n_items: 300, ..BankSpec::default() }.generate(4).unwrap();
        let mut s = BatchSettings::new(EngineConfig::new(TerminationCriterion::fixed_length(30)), SlipSchedule::none());
        s.n_sessions = 10;
        let m = run_batch(&bank, &s, 1).unwrap().metrics;
        assert_eq!(m.sd_iterations, 0.0);
        assert_eq!(m.mean_iterations, 30.0);
        assert_eq!(m.forced_stop_fraction, 0.0);
    }

    #[test]
    fn empty_batch() {
        let bank = BankSpec { n_items: 50, ..BankSpec::default() }.generate(4).unwrap();
        let mut s = BatchSettings::new(EngineConfig::new(TerminationCriterion::fixed_length(30)), SlipSchedule::none());
        s.n_sessions = 0;
        let m = run_batch(&bank, &s, 1).unwrap().metrics;
        assert_eq!(m.n_sessions, 0);
        assert_eq!(m.forced_stop_fraction, 0.0);
    }
}
