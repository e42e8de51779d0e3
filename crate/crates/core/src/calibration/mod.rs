//! Item calibration from learner responses and ability estimation against a bank.

mod cefr;
mod eap;
mod fit;
mod grid;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irt::{Ability, ItemBank, ItemParams, ModelError};

pub use cefr::{cefr_bin_centers, cefr_to_difficulty, map_theta_to_cefr, CEFR_LABELS, CEFR_LEVELS};
pub use eap::{accumulate_log_lik, estimate_ability_eap, posterior_summary};
pub use fit::{fit_items, initial_params, CalibrationConfig, FitOutcome, Observation, Params3pl, A_BOUNDS, B_BOUNDS, C_BOUNDS};
pub use grid::{QuadratureGrid, DEFAULT_NODES, THETA_MAX, THETA_MIN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("posterior is degenerate (likelihood underflow or NaN)")]
    DegeneratePosterior,
    #[error("invalid quadrature grid: {0}")]
    InvalidGrid(String),
    #[error("invalid calibration config: {0}")]
    InvalidConfig(String),
    #[error("no usable observations")]
    NoData,
    #[error("observation has {successes} successes out of {trials} trials")]
    InvalidObservation { successes: u32, trials: u32 },
    #[error("learner #{0} has no observations")]
    LearnerWithoutData(usize),
    #[error("item #{0} has no observations")]
    ItemWithoutData(usize),
    #[error("record references item {0} absent from the starting bank")]
    UnknownItem(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One scored answer of a learner to a bank item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub learner_id: String,
    pub item_id: String,
    pub correct: bool,
    /// Epoch milliseconds.
    pub timestamp: Option<u64>,
}

/// Outcome of [`calibrate_bank`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub bank: ItemBank,
    /// Learners in order of first appearance.
    pub abilities: Vec<(String, Ability)>,
    pub iterations: usize,
    pub converged: bool,
    pub final_change: f64,
    /// Items answered all-correct or all-wrong; fitted with the priors doing the work.
    pub degenerate_items: Vec<String>,
}

/// Fits every item's parameters and every learner's ability from `records`.
pub fn calibrate_bank(records: &[ResponseRecord], config: &CalibrationConfig) -> Result<CalibrationReport, CalibrationError> {
    calibrate_bank_from(records, config, None)
}

/// As [`calibrate_bank`], starting from the parameters in `start` where present.
pub fn calibrate_bank_from(
    records: &[ResponseRecord],
    config: &CalibrationConfig,
    start: Option<&ItemBank>,
) -> Result<CalibrationReport, CalibrationError> {
    config.validate()?;
    let mut learner_ids: Vec<String> = Vec::new();
    let mut learner_index: HashMap<&str, usize> = HashMap::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut observations = Vec::with_capacity(records.len());
    for r in records {
        let learner = *learner_index.entry(&r.learner_id).or_insert_with(|| {
            learner_ids.push(r.learner_id.clone());
            learner_ids.len() - 1
        });
        let item = *item_index.entry(&r.item_id).or_insert_with(|| {
            item_ids.push(r.item_id.clone());
            item_ids.len() - 1
        });
        observations.push(Observation {
            learner,
            item,
            successes: r.correct as u32,
            trials: 1,
        });
    }
    if observations.is_empty() {
        return Err(CalibrationError::NoData);
    }

    let a0 = config.fixed_a.unwrap_or(1.0);
    let mut init = initial_params(&observations, item_ids.len(), |_| config.fixed_c, a0);
    let mut construct_ids: Vec<Option<String>> = vec![None; item_ids.len()];
    if let Some(bank) = start {
        for (j, id) in item_ids.iter().enumerate() {
            let prev = bank.by_id(id).ok_or_else(|| CalibrationError::UnknownItem(id.clone()))?;
            init[j] = Params3pl {
                a: prev.a,
                b: prev.b,
                c: if config.estimate_c { prev.c } else { config.fixed_c },
            };
            construct_ids[j] = prev.construct_id.clone();
        }
    }

    let outcome = fit_items(learner_ids.len(), &observations, init, config)?;
    let mut counts = vec![0u64; item_ids.len()];
    for o in &observations {
        counts[o.item] += 1;
    }
    let items: Vec<ItemParams> = item_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let p = outcome.params[j];
            ItemParams {
                item_id: id.clone(),
                a: p.a,
                b: p.b,
                c: p.c,
                construct_id: construct_ids[j].clone(),
                response_count: counts[j],
            }
        })
        .collect();
    let degenerate_items = item_ids
        .iter()
        .zip(&outcome.degenerate)
        .filter(|(_, d)| **d)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(CalibrationReport {
        bank: ItemBank::new(items)?,
        abilities: learner_ids.into_iter().zip(outcome.abilities).collect(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        final_change: outcome.last_change,
        degenerate_items,
    })
}
