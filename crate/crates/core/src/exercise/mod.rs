//! Ability estimation from practice exercises, with linguistic constructs as items.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{fit_items, initial_params, CalibrationConfig, CalibrationError, Observation, CEFR_LEVELS};
use crate::irt::{Ability, ItemBank, ItemParams};
use crate::stats::{five_number, spearman, FiveNumber};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExerciseError {
    #[error("invalid exercise event: {0}")]
    InvalidEvent(String),
    #[error("invalid filter: min_exer and min_constr must be at least 1")]
    InvalidFilter,
    #[error("insufficient data: nothing left after filtering with min_exer={min_exer}, min_constr={min_constr}")]
    InsufficientData { min_exer: usize, min_constr: usize },
    #[error("need at least 2 labelled students with abilities, found {0}")]
    TooFewLabelled(usize),
    #[error("CEFR level {level} of student {student} is out of range")]
    InvalidLevel { student: String, level: usize },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExerciseType {
    Cloze,
    MultipleChoice,
}

impl ExerciseType {
    /// Chance of a correct answer without knowledge.
    pub fn guess_factor(self) -> f64 {
        match self {
            ExerciseType::Cloze => 0.0,
            ExerciseType::MultipleChoice => 0.25,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExerciseType::Cloze => "cloze",
            ExerciseType::MultipleChoice => "multiple-choice",
        }
    }
}

impl std::str::FromStr for ExerciseType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cloze" => Ok(Self::Cloze),
            "multiple-choice" | "mc" => Ok(Self::MultipleChoice),
            other => Err(format!("unknown exercise type {other:?}")),
        }
    }
}

/// One scored exercise attempt. Outcomes hold the final scored answer per construct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseEvent {
    pub student_id: String,
    pub exercise_id: String,
    pub exercise_type: ExerciseType,
    pub outcomes: BTreeMap<String, bool>,
    pub hinted: BTreeSet<String>,
    pub timestamp: Option<u64>,
}

impl ExerciseEvent {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        if self.outcomes.is_empty() {
            return Err(ExerciseError::InvalidEvent(format!(
                "exercise {} of {} has no construct outcomes",
                self.exercise_id, self.student_id
            )));
        }
        if self.student_id.is_empty() || self.exercise_id.is_empty() {
            return Err(ExerciseError::InvalidEvent("empty student or exercise id".into()));
        }
        Ok(())
    }

    /// Credits and penalties this event contributes to `construct`.
    pub fn evidence(&self, construct: &str) -> (u32, u32) {
        let hinted = self.hinted.contains(construct);
        match (self.outcomes.get(construct), hinted) {
            (Some(true), false) => (1, 0),
            (Some(true), true) => (0, 1),
            (Some(false), h) => (0, 1 + h as u32),
            (None, true) => (0, 1),
            (None, false) => (0, 0),
        }
    }

    /// Every construct the event touches, through an outcome or a hint.
    pub fn constructs(&self) -> impl Iterator<Item = &String> {
        let extra = self.hinted.iter().filter(|c| !self.outcomes.contains_key(*c));
        self.outcomes.keys().chain(extra)
    }
}

/// Evidence of one student on one construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Evidence {
    pub credits: u32,
    pub penalties: u32,
}

impl Evidence {
    pub fn total(&self) -> u32 {
        self.credits + self.penalties
    }

    /// Share of credits; `None` without evidence.
    pub fn rate(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.credits as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructPerformance {
    pub student_id: String,
    pub construct_id: String,
    pub credits: u32,
    pub penalties: u32,
    pub rate: f64,
}

/// Credits and penalties keyed by (student, construct), in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceTable {
    cells: BTreeMap<(String, String), Evidence>,
}

impl PerformanceTable {
    pub fn get(&self, student: &str, construct: &str) -> Option<Evidence> {
        self.cells.get(&(student.to_string(), construct.to_string())).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn rows(&self) -> Vec<ConstructPerformance> {
        self.cells
            .iter()
            .map(|((s, c), e)| ConstructPerformance {
                student_id: s.clone(),
                construct_id: c.clone(),
                credits: e.credits,
                penalties: e.penalties,
                rate: e.rate().unwrap_or(0.0),
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Evidence)> {
        self.cells.iter().map(|((s, c), e)| (s.as_str(), c.as_str(), *e))
    }
}

/// Credit for each correct, unhinted construct; a penalty for each incorrect
/// one and another for each hinted one.
pub fn accumulate_performance(events: &[ExerciseEvent]) -> Result<PerformanceTable, ExerciseError> {
    let mut cells: BTreeMap<(String, String), Evidence> = BTreeMap::new();
    for ev in events {
        ev.validate()?;
        for construct in ev.constructs() {
            let (credits, penalties) = ev.evidence(construct);
            let cell = cells.entry((ev.student_id.clone(), construct.clone())).or_default();
            cell.credits += credits;
            cell.penalties += penalties;
        }
    }
    Ok(PerformanceTable { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Fewest distinct exercises a student needs to enter training.
    pub min_exer: usize,
    /// Fewest evidence units a (student, construct) pair needs to be used.
    pub min_constr: usize,
}

impl FilterConfig {
    pub fn new(min_exer: usize, min_constr: usize) -> Self {
        Self { min_exer, min_constr }
    }

    pub fn validate(&self) -> Result<(), ExerciseError> {
        if self.min_exer == 0 || self.min_constr == 0 {
            return Err(ExerciseError::InvalidFilter);
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("exer{}-constr{}", self.min_exer, self.min_constr)
    }
}

/// Binomial observations over construct pseudo-items.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructResponses {
    pub students: Vec<String>,
    pub constructs: Vec<String>,
    /// Guess factor of each construct.
    pub guess: Vec<f64>,
    pub observations: Vec<Observation>,
}

/// Applies the filters and turns surviving evidence into observations. A
/// construct's guess factor is the mean of its events' guess factors weighted
/// by the evidence units each event contributed.
pub fn build_construct_responses(
    table: &PerformanceTable,
    events: &[ExerciseEvent],
    filter: &FilterConfig,
) -> Result<ConstructResponses, ExerciseError> {
    filter.validate()?;
    let mut exercises: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for ev in events {
        exercises.entry(&ev.student_id).or_default().insert(&ev.exercise_id);
    }
    let trained = |s: &str| exercises.get(s).is_some_and(|e| e.len() >= filter.min_exer);

    let kept: Vec<(&str, &str, Evidence)> = table
        .iter()
        .filter(|(s, _, e)| trained(s) && e.total() as usize >= filter.min_constr)
        .collect();
    if kept.is_empty() {
        return Err(ExerciseError::InsufficientData {
            min_exer: filter.min_exer,
            min_constr: filter.min_constr,
        });
    }

    let mut students: Vec<String> = kept.iter().map(|k| k.0.to_string()).collect();
    students.dedup();
    let constructs: Vec<String> = kept.iter().map(|k| k.1.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let s_index: HashMap<&str, usize> = students.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let c_index: HashMap<&str, usize> = constructs.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let kept_pairs: BTreeSet<(&str, &str)> = kept.iter().map(|k| (k.0, k.1)).collect();

    let mut weighted = vec![0.0; constructs.len()];
    let mut weight = vec![0.0; constructs.len()];
    for ev in events {
        for construct in ev.constructs() {
            if !kept_pairs.contains(&(ev.student_id.as_str(), construct.as_str())) {
                continue;
            }
            let (cr, pe) = ev.evidence(construct);
            let j = c_index[construct.as_str()];
            weighted[j] += ev.exercise_type.guess_factor() * (cr + pe) as f64;
            weight[j] += (cr + pe) as f64;
        }
    }
    let guess = weighted.iter().zip(&weight).map(|(s, w)| if *w > 0.0 { s / w } else { 0.0 }).collect();

    let observations = kept
        .iter()
        .map(|(s, c, e)| Observation {
            learner: s_index[s],
            item: c_index[c],
            successes: e.credits,
            trials: e.total(),
        })
        .collect();
    Ok(ConstructResponses {
        students,
        constructs,
        guess,
        observations,
    })
}

/// Fitted construct parameters and student abilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructFit {
    pub bank: ItemBank,
    pub abilities: Vec<(String, Ability)>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the constructs with their guess factors held fixed.
pub fn calibrate_constructs(responses: &ConstructResponses, config: &CalibrationConfig) -> Result<ConstructFit, ExerciseError> {
    let config = CalibrationConfig {
        estimate_c: false,
        ..config.clone()
    };
    let a0 = config.fixed_a.unwrap_or(1.0);
    let start = initial_params(&responses.observations, responses.constructs.len(), |j| responses.guess[j], a0);
    let fit = fit_items(responses.students.len(), &responses.observations, start, &config)?;
    let items = responses
        .constructs
        .iter()
        .zip(&fit.params)
        .map(|(id, p)| ItemParams {
            construct_id: Some(id.clone()),
            ..ItemParams::new(id.clone(), p.a, p.b, p.c)
        })
        .collect();
    let bank = ItemBank::new(items).map_err(CalibrationError::from)?;
    Ok(ConstructFit {
        bank,
        abilities: responses.students.iter().cloned().zip(fit.abilities).collect(),
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CefrReport {
    pub n_students: usize,
    /// `None` when either side is constant.
    pub rho: Option<f64>,
    /// Five-number summary of estimated ability per level, `None` for empty levels.
    pub levels: Vec<Option<FiveNumber>>,
}

/// Spearman correlation between teacher level and estimated ability, over
/// students present in both tables.
pub fn evaluate_against_cefr(abilities: &[(String, Ability)], labels: &HashMap<String, usize>) -> Result<CefrReport, ExerciseError> {
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); CEFR_LEVELS];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (student, ability) in abilities {
        if let Some(&level) = labels.get(student) {
            if level >= CEFR_LEVELS {
                return Err(ExerciseError::InvalidLevel {
                    student: student.clone(),
                    level,
                });
            }
            xs.push(level as f64);
            ys.push(ability.theta);
            per_level[level].push(ability.theta);
        }
    }
    if xs.len() < 2 {
        return Err(ExerciseError::TooFewLabelled(xs.len()));
    }
    Ok(CefrReport {
        n_students: xs.len(),
        rho: spearman(&xs, &ys),
        levels: per_level.iter().map(|v| five_number(v)).collect(),
    })
}

/// One cell of the filter grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterGridRow {
    pub filter: FilterConfig,
    pub n_students_train: usize,
    pub n_students_eval: usize,
    pub report: Option<CefrReport>,
    /// Why the cell has no report.
    pub error: Option<String>,
}

/// Runs fit and evaluation for each filter setting. Cells that cannot be
/// evaluated are kept with their error.
pub fn run_filter_grid(
    events: &[ExerciseEvent],
    labels: &HashMap<String, usize>,
    grid: &[FilterConfig],
    config: &CalibrationConfig,
) -> Result<Vec<FilterGridRow>, ExerciseError> {
    let table = accumulate_performance(events)?;
    grid.iter()
        .map(|filter| {
            filter.validate()?;
            let mut row = FilterGridRow {
                filter: *filter,
                n_students_train: 0,
                n_students_eval: 0,
                report: None,
                error: None,
            };
            let outcome = build_construct_responses(&table, events, filter).and_then(|r| {
                row.n_students_train = r.students.len();
                row.n_students_eval = r.students.iter().filter(|s| labels.contains_key(*s)).count();
                let fit = calibrate_constructs(&r, config)?;
                evaluate_against_cefr(&fit.abilities, labels)
            });
            match outcome {
                Ok(report) => row.report = Some(report),
                Err(e) => row.error = Some(e.to_string()),
            }
            Ok(row)
        })
        .collect()
}

/// The six cells (50|100) x (1|4|7).
pub fn default_filter_grid() -> Vec<FilterConfig> {
    let mut out = Vec::new();
    for min_constr in [1, 4, 7] {
        for min_exer in [50, 100] {
            out.push(FilterConfig::new(min_exer, min_constr));
        }
    }
    out
}
