use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, ExplorationConfig, SelectionPolicy, SessionResult, TerminationCriterion};
use crate::irt::ItemBank;
use crate::rng::derive_seed;

use super::batch::{run_batch, BatchMetrics, BatchSettings};
use super::{run_simulation, SimError, SimulationConfig, SlipSchedule};

/// Items administered after convergence in artificial-grid traces.
pub const GRID_OVERRUN: usize = 10;

/// One artificial-learner session, continued past convergence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTrace {
    pub level: usize,
    pub replicate: usize,
    pub theta_true: f64,
    pub seed: u64,
    pub result: SessionResult,
}

/// Runs `per_level` sessions at each true ability. Session `k` in level-major
/// order uses the seed `derive_seed(master_seed, k)`.
pub fn run_artificial_grid(
    bank: &ItemBank,
    levels: &[f64],
    per_level: usize,
    engine: &EngineConfig,
    slip: SlipSchedule,
    master_seed: u64,
) -> Result<Vec<GridTrace>, SimError> {
    engine.validate()?;
    slip.validate()?;
    let jobs: Vec<(usize, usize)> = (0..levels.len()).flat_map(|l| (0..per_level).map(move |r| (l, r))).collect();
    jobs.into_par_iter()
        .enumerate()
        .map(|(k, (level, replicate))| {
            let seed = derive_seed(master_seed, k as u64);
            let cfg = SimulationConfig {
                theta_true: levels[level],
                slip,
                engine: engine.clone(),
                seed,
            };
            Ok(GridTrace {
                level,
                replicate,
                theta_true: levels[level],
                seed,
                result: run_simulation(&cfg, bank, GRID_OVERRUN)?,
            })
        })
        .collect()
}

/// A labelled configuration inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSetting {
    pub label: String,
    pub slip: SlipSchedule,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub setting: String,
    #[serde(flatten)]
    pub metrics: BatchMetrics,
}

fn run_rows(
    bank: &ItemBank,
    settings: &[SweepSetting],
    n_sessions: usize,
    theta_range: (f64, f64),
    master_seed: u64,
) -> Result<Vec<MetricsRow>, SimError> {
    settings
        .iter()
        .map(|s| {
            let batch = BatchSettings {
                slip: s.slip,
                engine: s.engine.clone(),
                n_sessions,
                theta_range,
            };
            Ok(MetricsRow {
                setting: s.label.clone(),
                metrics: run_batch(bank, &batch, master_seed)?.metrics,
            })
        })
        .collect()
}

/// Default slip and exploration grid: a no-slip baseline, slip without
/// exploration, a zero-probability exploration row and every
/// `(alpha, n_exp)` pair, where `n_exp` is the step at which exploration ends.
pub fn slip_exploration_grid(criterion: TerminationCriterion, slip_rate: f64, alphas: &[f64], ranges: &[usize]) -> Vec<SweepSetting> {
    let plain = EngineConfig::new(criterion);
    let slip = SlipSchedule::constant(slip_rate);
    let mut out = vec![
        SweepSetting {
            label: "baseline".into(),
            slip: SlipSchedule::none(),
            engine: plain.clone(),
        },
        SweepSetting {
            label: "slip".into(),
            slip,
            engine: plain.clone(),
        },
        SweepSetting {
            label: "slip-expl-p0".into(),
            slip,
            engine: EngineConfig {
                exploration: ExplorationConfig { epsilon_expl: 0.0, ..ExplorationConfig::default() },
                ..plain.clone()
            },
        },
    ];
    for &alpha in alphas {
        for &n_exp in ranges {
            out.push(SweepSetting {
                label: format!("{alpha}-{n_exp}"),
                slip,
                engine: EngineConfig {
                    exploration: ExplorationConfig {
                        alpha_magnitude: alpha,
                        stop_step: n_exp,
                        ..ExplorationConfig::default()
                    },
                    ..plain.clone()
                },
            });
        }
    }
    out
}

/// One metrics row per setting, all on the same session seeds.
pub fn run_slip_exploration_sweep(
    bank: &ItemBank,
    settings: &[SweepSetting],
    n_sessions: usize,
    theta_range: (f64, f64),
    master_seed: u64,
) -> Result<Vec<MetricsRow>, SimError> {
    run_rows(bank, settings, n_sessions, theta_range, master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Fixed,
    Sem,
    Earlystop,
    Overall,
}

impl std::str::FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "sem" => Ok(Self::Sem),
            "earlystop" => Ok(Self::Earlystop),
            "overall" => Ok(Self::Overall),
            other => Err(format!("unknown sweep kind {other:?}")),
        }
    }
}

/// Settings shared by every row of a termination sweep. Artificial learners
/// answer without slips by default; exploration stays on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermSweepSettings {
    pub slip: SlipSchedule,
    pub exploration: ExplorationConfig,
    pub policy: SelectionPolicy,
    pub warmup_length: usize,
    pub n_sessions: usize,
    pub theta_range: (f64, f64),
}

impl Default for TermSweepSettings {
    fn default() -> Self {
        Self {
            slip: SlipSchedule::none(),
            exploration: ExplorationConfig { alpha_magnitude: 0.5, stop_step: 60, ..ExplorationConfig::default() },
            policy: SelectionPolicy::simulation(),
            warmup_length: 0,
            n_sessions: 500,
            theta_range: (-3.5, 3.5),
        }
    }
}

/// Lengths 25 to 150 in steps of 25. Longer tests raise `max_steps` to fit.
pub fn fixed_length_grid() -> Vec<TerminationCriterion> {
    (1..=6).map(|k| fixed(25 * k)).collect()
}

/// SEM thresholds 0.10 to 0.30 in steps of 0.02.
pub fn sem_grid() -> Vec<TerminationCriterion> {
    (0..=10).map(|k| TerminationCriterion::sem_threshold(round2(0.10 + 0.02 * k as f64))).collect()
}

/// Window 6 to 12 in steps of 2, crossed with delta 0.05 to 0.35 in steps of 0.1.
pub fn early_stop_grid() -> Vec<TerminationCriterion> {
    let mut out = Vec::new();
    for n in [6, 8, 10, 12] {
        for k in 0..4 {
            out.push(TerminationCriterion::early_stop(n, round2(0.05 + 0.1 * k as f64)));
        }
    }
    out
}

/// The twelve settings of the overall comparison.
pub fn appendix_overall_rules() -> Vec<TerminationCriterion> {
    let mut out: Vec<_> = [25, 50, 75, 100].into_iter().map(fixed).collect();
    out.extend([0.12, 0.14, 0.16, 0.18].into_iter().map(TerminationCriterion::sem_threshold));
    out.extend([(10, 0.05), (10, 0.15), (12, 0.05), (12, 0.15)].into_iter().map(|(n, d)| TerminationCriterion::early_stop(n, d)));
    out
}

fn fixed(length: usize) -> TerminationCriterion {
    let c = TerminationCriterion::fixed_length(length);
    c.with_bounds(c.min_steps.min(length), c.max_steps.max(length))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Runs one sweep family. The overall sweep is returned sorted by MAE.
pub fn run_termination_sweep(
    bank: &ItemBank,
    kind: SweepKind,
    settings: &TermSweepSettings,
    master_seed: u64,
) -> Result<Vec<MetricsRow>, SimError> {
    let rules = match kind {
        SweepKind::Fixed => fixed_length_grid(),
        SweepKind::Sem => sem_grid(),
        SweepKind::Earlystop => early_stop_grid(),
        SweepKind::Overall => appendix_overall_rules(),
    };
    let rows: Vec<SweepSetting> = rules
        .into_iter()
        .map(|criterion| SweepSetting {
            label: criterion.rule.label(),
            slip: settings.slip,
            engine: EngineConfig {
                exploration: settings.exploration.clone(),
                criterion,
                policy: settings.policy.clone(),
                warmup_length: settings.warmup_length,
                ..EngineConfig::new(criterion)
            },
        })
        .collect();
    let mut out = run_rows(bank, &rows, settings.n_sessions, settings.theta_range, master_seed)?;
    if kind == SweepKind::Overall {
        out.sort_by(|a, b| a.metrics.mae.total_cmp(&b.metrics.mae));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StopRule;
    use crate::simulator::synth::BankSpec;

    #[test]
    fn grids_have_expected_sizes() {
        assert_eq!(fixed_length_grid().len(), 6);
        assert_eq!(sem_grid().len(), 11);
        assert_eq!(early_stop_grid().len(), 16);
        assert_eq!(appendix_overall_rules().len(), 12);
        let last = *fixed_length_grid().last().unwrap();
        assert_eq!(last.max_steps, 150);
        assert_eq!(sem_grid()[1].rule, StopRule::SemThreshold { sem: 0.12 });
        assert_eq!(early_stop_grid()[3].rule, StopRule::EarlyStop { window: 6, delta: 0.35 });
    }

    #[test]
    fn empty_grid_and_zero_probability_row() {
        let bank = BankSpec { n_items: 300, ..BankSpec::default() }.generate(8).unwrap();
        let cfg = EngineConfig::new(TerminationCriterion::early_stop(10, 0.05));
        assert!(run_artificial_grid(&bank, &[-1.0, 1.0], 0, &cfg, SlipSchedule::none(), 1).unwrap().is_empty());
        let settings = slip_exploration_grid(TerminationCriterion::early_stop(10, 0.05), 0.05, &[0.5], &[60]);
        assert_eq!(settings.len(), 4);
        let rows = run_slip_exploration_sweep(&bank, &settings[1..3], 12, (-3.5, 3.5), 5).unwrap();
        assert_eq!(rows[0].metrics, rows[1].metrics);
    }

    #[test]
    fn grid_traces_overrun() {
        let bank = BankSpec { n_items: 400, ..BankSpec::default() }.generate(8).unwrap();
        let cfg = EngineConfig::new(TerminationCriterion::early_stop(10, 0.05));
        let traces = run_artificial_grid(&bank, &[0.0], 2, &cfg, SlipSchedule::none(), 3).unwrap();
        assert_eq!(traces.len(), 2);
        for t in &traces {
            if let Some(at) = t.result.converged_at {
                assert_eq!(t.result.responses.len(), at + GRID_OVERRUN);
            }
        }
    }
}
