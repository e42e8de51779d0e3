//! Per-command configuration files. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use irtcat::calibration::CalibrationConfig;
use irtcat::engine::{EngineConfig, TerminationCriterion};
use irtcat::exercise::{default_filter_grid, FilterConfig};
use irtcat::simulator::synth::ResponsesSpec;
use irtcat::simulator::{SlipSchedule, SweepSetting};

fn early_stop_engine() -> EngineConfig {
    EngineConfig::new(TerminationCriterion::early_stop(10, 0.05))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub levels: Vec<f64>,
    pub per_level: usize,
    pub slip: SlipSchedule,
    pub engine: EngineConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            levels: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            per_level: 3,
            slip: SlipSchedule::none(),
            engine: early_stop_engine(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub slip: SlipSchedule,
    pub engine: EngineConfig,
    pub n_sessions: usize,
    pub theta_range: (f64, f64),
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            slip: SlipSchedule::default(),
            engine: early_stop_engine(),
            n_sessions: 500,
            theta_range: (-3.5, 3.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlipSweepConfig {
    pub criterion: TerminationCriterion,
    pub slip_rate: f64,
    pub alphas: Vec<f64>,
    /// Steps at which exploration ends.
    pub ranges: Vec<usize>,
    pub n_sessions: usize,
    pub theta_range: (f64, f64),
    /// Explicit settings; replaces the generated grid when present.
    pub settings: Option<Vec<SweepSetting>>,
}

impl Default for SlipSweepConfig {
    fn default() -> Self {
        Self {
            criterion: TerminationCriterion::early_stop(10, 0.05),
            slip_rate: 0.05,
            alphas: vec![0.25, 0.5, 1.0],
            ranges: vec![30, 60],
            n_sessions: 500,
            theta_range: (-3.5, 3.5),
            settings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub engine: EngineConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { engine: early_stop_engine() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExerciseConfig {
    pub calibration: CalibrationConfig,
    /// Filter used by `exercise fit`.
    pub filter: FilterConfig,
    /// Cells evaluated by `exercise grid`.
    pub grid: Vec<FilterConfig>,
}

impl Default for ExerciseConfig {
    fn default() -> Self {
        Self {
            calibration: CalibrationConfig::default(),
            filter: FilterConfig::new(100, 7),
            grid: default_filter_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthResponsesConfig {
    pub responses: ResponsesSpec,
    /// Every learner answers one shared random template of `per_learner` items.
    pub exhaustive: bool,
    /// SD of the noise behind the synthetic expert item levels.
    pub item_level_noise: f64,
}

impl Default for SynthResponsesConfig {
    fn default() -> Self {
        Self {
            responses: ResponsesSpec::default(),
            exhaustive: false,
            item_level_noise: 0.5,
        }
    }
}
