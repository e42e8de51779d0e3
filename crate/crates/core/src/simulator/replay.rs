use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{cefr_to_difficulty, estimate_ability_eap, QuadratureGrid, ResponseRecord, CEFR_LEVELS};
use crate::engine::{run_session, AnswerSource, EngineConfig, TerminationReason};
use crate::irt::{Ability, ItemBank, ItemParams};
use crate::rng::derive_seed;

use super::SimError;

/// One learner's recorded answers, in log order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySession {
    pub learner_id: String,
    pub answers: Vec<(String, bool)>,
}

/// Groups records by learner in order of first appearance.
pub fn group_sessions(records: &[ResponseRecord]) -> Vec<ReplaySession> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<ReplaySession> = Vec::new();
    for r in records {
        let k = *index.entry(r.learner_id.as_str()).or_insert_with(|| {
            out.push(ReplaySession {
                learner_id: r.learner_id.clone(),
                answers: Vec::new(),
            });
            out.len() - 1
        });
        out[k].answers.push((r.item_id.clone(), r.correct));
    }
    out
}

/// Answers from a recorded log. Only items with a recorded answer are eligible;
/// for repeated items the first answer is used.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    answers: Vec<Option<bool>>,
}

impl ReplaySource {
    pub fn new(bank: &ItemBank, session: &ReplaySession) -> Result<Self, SimError> {
        let mut answers = vec![None; bank.len()];
        for (item_id, correct) in &session.answers {
            let pos = bank.position(item_id).ok_or_else(|| SimError::UnknownItem {
                learner: session.learner_id.clone(),
                item: item_id.clone(),
            })?;
            answers[pos].get_or_insert(*correct);
        }
        Ok(Self { answers })
    }
}

impl AnswerSource for ReplaySource {
    fn answer(&mut self, item_index: usize, _item: &ItemParams, _step: usize) -> bool {
        self.answers[item_index].expect("engine only selects eligible items")
    }

    fn is_eligible(&self, item_index: usize) -> bool {
        self.answers[item_index].is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Adaptive selection restricted to answered items.
    AdaptiveReplay,
    /// EAP over every recorded answer at once.
    FullSession,
    /// Adaptive replay on a bank with `a = 1` and `b` at the centre of each item's level bin.
    ManualDifficulty,
}

impl std::str::FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive-replay" => Ok(Self::AdaptiveReplay),
            "full-session" => Ok(Self::FullSession),
            "manual-difficulty" => Ok(Self::ManualDifficulty),
            other => Err(format!("unknown replay mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub learner_id: String,
    pub ability: Ability,
    /// Items used for the estimate.
    pub length: usize,
    /// `None` for full-session scoring.
    pub reason: Option<TerminationReason>,
}

/// Copy of `bank` with `a = 1` and `b` replaced by the bin centre of each
/// item's level. Bin edges come from the difficulty range of `bank`.
pub fn manual_difficulty_bank(bank: &ItemBank, levels: &HashMap<String, usize>) -> Result<ItemBank, SimError> {
    let items = bank
        .items()
        .iter()
        .map(|it| {
            let level = *levels.get(&it.item_id).ok_or_else(|| SimError::MissingItemLevel(it.item_id.clone()))?;
            if level >= CEFR_LEVELS {
                return Err(SimError::InvalidConfig(format!("item {} has level {level}", it.item_id)));
            }
            Ok(ItemParams {
                a: 1.0,
                b: cefr_to_difficulty(level, bank),
                ..it.clone()
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ItemBank::new(items).map_err(|e| SimError::InvalidConfig(e.to_string()))
}

/// Scores every recorded session. Session `i` uses `derive_seed(master_seed, i)`.
/// Manual-difficulty mode requires `levels`.
pub fn run_real_replay(
    bank: &ItemBank,
    sessions: &[ReplaySession],
    mode: ReplayMode,
    engine: &EngineConfig,
    levels: Option<&HashMap<String, usize>>,
    master_seed: u64,
) -> Result<Vec<ReplayOutcome>, SimError> {
    engine.validate()?;
    let manual;
    let bank = if mode == ReplayMode::ManualDifficulty {
        let levels = levels.ok_or_else(|| SimError::InvalidConfig("manual-difficulty mode needs item levels".into()))?;
        manual = manual_difficulty_bank(bank, levels)?;
        &manual
    } else {
        bank
    };
    let grid = QuadratureGrid::default();
    sessions
        .par_iter()
        .enumerate()
        .map(|(i, session)| {
            let mut source = ReplaySource::new(bank, session)?;
            if mode == ReplayMode::FullSession {
                let used: Vec<(&ItemParams, bool)> =
                    (0..bank.len()).filter_map(|k| source.answers[k].map(|c| (bank.get(k), c))).collect();
                let ability = estimate_ability_eap(used.iter().copied(), &grid).map_err(crate::engine::EngineError::from)?;
                return Ok(ReplayOutcome {
                    learner_id: session.learner_id.clone(),
                    ability,
                    length: used.len(),
                    reason: None,
                });
            }
            let r = run_session(&mut source, bank, engine, derive_seed(master_seed, i as u64))?;
            Ok(ReplayOutcome {
                learner_id: session.learner_id.clone(),
                ability: r.ability,
                length: r.length,
                reason: Some(r.reason),
            })
        })
        .collect()
}
