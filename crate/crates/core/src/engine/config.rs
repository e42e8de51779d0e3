use serde::{Deserialize, Serialize};

use super::EngineError;

/// Trend-following perturbation of the working ability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub epsilon_expl: f64,
    pub alpha_magnitude: f64,
    pub trend_window: usize,
    /// First step (number of recorded responses) at which exploration may fire.
    pub start_step: usize,
    /// Exploration is off from this step on.
    pub stop_step: usize,
    /// Least-squares slopes with magnitude at or below this count as flat.
    pub flat_threshold: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            epsilon_expl: 0.2,
            alpha_magnitude: 0.5,
            trend_window: 5,
            start_step: 10,
            stop_step: 60,
            flat_threshold: 0.01,
        }
    }
}

impl ExplorationConfig {
    pub fn disabled() -> Self {
        Self {
            epsilon_expl: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.epsilon_expl) {
            return Err(EngineError::InvalidConfig("epsilon_expl must lie in [0, 1]".into()));
        }
        if self.start_step >= self.stop_step {
            return Err(EngineError::InvalidConfig("exploration start_step must precede stop_step".into()));
        }
        if self.trend_window < 2 {
            return Err(EngineError::InvalidConfig("trend_window must be at least 2".into()));
        }
        if !(self.alpha_magnitude >= 0.0 && self.flat_threshold >= 0.0) {
            return Err(EngineError::InvalidConfig("alpha_magnitude and flat_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// The convergence test applied after each response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopRule {
    FixedLength { length: usize },
    SemThreshold { sem: f64 },
    /// `|theta_i - theta_{i-1}| < delta` over the last `window` steps.
    EarlyStop { window: usize, delta: f64 },
}

impl StopRule {
    pub fn label(&self) -> String {
        match self {
            StopRule::FixedLength { length } => format!("fixed-{length}"),
            StopRule::SemThreshold { sem } => format!("sem-{sem}"),
            StopRule::EarlyStop { window, delta } => format!("earlystop-N{window}-d{delta}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationCriterion {
    pub rule: StopRule,
    #[serde(default = "default_min_steps")]
    pub min_steps: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_min_steps() -> usize {
    25
}

fn default_max_steps() -> usize {
    100
}

impl TerminationCriterion {
    pub fn new(rule: StopRule) -> Self {
        Self {
            rule,
            min_steps: default_min_steps(),
            max_steps: default_max_steps(),
        }
    }

    pub fn fixed_length(length: usize) -> Self {
        Self::new(StopRule::FixedLength { length })
    }

    pub fn sem_threshold(sem: f64) -> Self {
        Self::new(StopRule::SemThreshold { sem })
    }

    pub fn early_stop(window: usize, delta: f64) -> Self {
        Self::new(StopRule::EarlyStop { window, delta })
    }

    pub fn with_bounds(mut self, min_steps: usize, max_steps: usize) -> Self {
        self.min_steps = min_steps;
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.into()));
        if self.min_steps > self.max_steps || self.max_steps == 0 {
            return bad("need 0 < max_steps and min_steps <= max_steps");
        }
        match self.rule {
            StopRule::FixedLength { length: 0 } => bad("fixed length must be positive"),
            StopRule::SemThreshold { sem } if sem.is_nan() || sem <= 0.0 => bad("SEM threshold must be positive"),
            StopRule::EarlyStop { window, delta } if window == 0 || delta.is_nan() || delta <= 0.0 => {
                bad("EarlyStop needs a positive window and delta")
            }
            _ => Ok(()),
        }
    }
}

/// How the next item is drawn from the candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionPolicy {
    /// Uniform draw among this many most informative items.
    pub top_k: usize,
    /// Probability of drawing among the least-answered items instead.
    pub epsilon_coldstart: f64,
    pub coldstart_enabled: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self::simulation()
    }
}

impl SelectionPolicy {
    /// Top-5 sampling without least-answered draws.
    pub fn simulation() -> Self {
        Self {
            top_k: 5,
            epsilon_coldstart: 0.1,
            coldstart_enabled: false,
        }
    }

    /// Top-5 sampling plus a 10% least-answered draw.
    pub fn live() -> Self {
        Self {
            coldstart_enabled: true,
            ..Self::simulation()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.top_k == 0 {
            return Err(EngineError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_coldstart) {
            return Err(EngineError::InvalidConfig("epsilon_coldstart must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything a session needs besides the bank and the answer source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub exploration: ExplorationConfig,
    pub criterion: TerminationCriterion,
    #[serde(default)]
    pub policy: SelectionPolicy,
    /// Number of leading items whose wrong answers are discarded.
    #[serde(default)]
    pub warmup_length: usize,
    /// SD of the normal draw for the starting estimate.
    #[serde(default = "default_init_sd")]
    pub init_sd: f64,
}

fn default_init_sd() -> f64 {
    0.5
}

impl EngineConfig {
    pub fn new(criterion: TerminationCriterion) -> Self {
        Self {
            exploration: ExplorationConfig::disabled(),
            criterion,
            policy: SelectionPolicy::simulation(),
            warmup_length: 0,
            init_sd: default_init_sd(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.exploration.validate()?;
        self.criterion.validate()?;
        self.policy.validate()?;
        if self.init_sd.is_nan() || self.init_sd < 0.0 {
            return Err(EngineError::InvalidConfig("init_sd must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(EngineConfig::new(TerminationCriterion::fixed_length(50)).validate().is_ok());
        assert!(TerminationCriterion::fixed_length(0).validate().is_err());
        assert!(TerminationCriterion::early_stop(10, 0.0).validate().is_err());
        assert!(TerminationCriterion::sem_threshold(0.2).with_bounds(30, 20).validate().is_err());
        let e = ExplorationConfig { start_step: 60, ..ExplorationConfig::default() };
        assert!(e.validate().is_err());
        assert!(SelectionPolicy { top_k: 0, ..SelectionPolicy::default() }.validate().is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(StopRule::FixedLength { length: 25 }.label(), "fixed-25");
        assert_eq!(StopRule::SemThreshold { sem: 0.12 }.label(), "sem-0.12");
        assert_eq!(StopRule::EarlyStop { window: 10, delta: 0.05 }.label(), "earlystop-N10-d0.05");
    }
}
