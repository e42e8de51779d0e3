//! Seeded synthetic practice cohorts with known abilities and teacher labels.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::CEFR_LEVELS;
use crate::irt::{prob_correct, ItemParams};
use crate::rng::{derive_seed, stream_rng, Stream};

use super::{ExerciseError, ExerciseEvent, ExerciseType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_students: usize,
    pub n_constructs: usize,
    /// Inclusive range of exercises done per student.
    pub min_exercises: usize,
    pub max_exercises: usize,
    /// Inclusive range of constructs linked to one exercise.
    pub min_links: usize,
    pub max_links: usize,
    /// Share of multiple-choice exercises; the rest are cloze.
    pub multiple_choice_share: f64,
    /// Hint probability for a construct the student has not mastered at all.
    pub hint_rate: f64,
    /// Students that receive a teacher label.
    pub n_labelled: usize,
    /// SD of the teacher's judgement noise on the ability scale.
    pub label_noise: f64,
    /// Ability range split into six equal CEFR bins.
    pub label_range: (f64, f64),
    pub log_a_sd: f64,
    pub b_sd: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_students: 1200,
            n_constructs: 30,
            min_exercises: 10,
            max_exercises: 250,
            min_links: 1,
            max_links: 3,
            multiple_choice_share: 0.3,
            hint_rate: 0.2,
            n_labelled: 200,
            label_noise: 0.4,
            label_range: (-2.5, 2.5),
            log_a_sd: 0.3,
            b_sd: 1.0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        let bad = |m: &str| Err(ExerciseError::InvalidEvent(format!("cohort spec: {m}")));
        if self.min_exercises > self.max_exercises || self.min_links == 0 || self.min_links > self.max_links {
            return bad("exercise and link ranges must be non-empty with at least one link");
        }
        if self.max_links > self.n_constructs {
            return bad("max_links exceeds n_constructs");
        }
        if !(0.0..=1.0).contains(&self.multiple_choice_share) || !(0.0..=1.0).contains(&self.hint_rate) {
            return bad("shares must lie in [0, 1]");
        }
        if self.n_labelled > self.n_students || self.label_range.0.partial_cmp(&self.label_range.1) != Some(std::cmp::Ordering::Less) {
            return bad("labelled students and label range are inconsistent");
        }
        if !(self.label_noise >= 0.0 && self.log_a_sd >= 0.0 && self.b_sd > 0.0) {
            return bad("noise and spread parameters must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    pub events: Vec<ExerciseEvent>,
    /// Teacher CEFR index for the labelled students.
    pub labels: HashMap<String, usize>,
    /// True ability of every student, in id order.
    pub truth: Vec<(String, f64)>,
    /// True construct parameters; `c` is zero since it depends on the exercise type.
    pub constructs: Vec<ItemParams>,
}

/// Level bin of `theta` among six equal bins over `range`, clamped.
pub fn level_of(theta: f64, range: (f64, f64)) -> usize {
    let width = (range.1 - range.0) / CEFR_LEVELS as f64;
    let k = ((theta - range.0) / width).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(CEFR_LEVELS - 1)
    }
}

/// Generates a cohort. Student `i` draws from `derive_seed(seed, i)`, so the
/// cohort does not depend on generation order.
pub fn generate_cohort(spec: &CohortSpec, seed: u64) -> Result<Cohort, ExerciseError> {
    spec.validate()?;
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| ExerciseError::InvalidEvent(e.to_string()));
    let mut rng = stream_rng(seed, Stream::Generator);
    let (log_a, b_dist) = (normal(spec.log_a_sd)?, normal(spec.b_sd)?);
    let constructs: Vec<ItemParams> = (0..spec.n_constructs)
        .map(|j| ItemParams::new(format!("K{j:03}"), log_a.sample(&mut rng).exp(), b_dist.sample(&mut rng), 0.0))
        .collect();
    let theta_dist = normal(1.0)?;
    let label_noise = normal(spec.label_noise)?;

    let mut events = Vec::new();
    let mut labels = HashMap::new();
    let mut truth = Vec::with_capacity(spec.n_students);
    for i in 0..spec.n_students {
        let student_seed = derive_seed(seed, i as u64);
        let mut rng = stream_rng(student_seed, Stream::Truth);
        let student_id = format!("S{i:05}");
        let theta: f64 = theta_dist.sample(&mut rng);
        if i < spec.n_labelled {
            labels.insert(student_id.clone(), level_of(theta + label_noise.sample(&mut rng), spec.label_range));
        }
        let n_ex = rng.random_range(spec.min_exercises..=spec.max_exercises);
        let mut rng = stream_rng(student_seed, Stream::Answers);
        for e in 0..n_ex {
            let ty = if rng.random::<f64>() < spec.multiple_choice_share {
                ExerciseType::MultipleChoice
            } else {
                ExerciseType::Cloze
            };
            let links = rng.random_range(spec.min_links..=spec.max_links);
            let mut ev = ExerciseEvent {
                student_id: student_id.clone(),
                exercise_id: format!("E{e:04}"),
                exercise_type: ty,
                outcomes: Default::default(),
                hinted: Default::default(),
                timestamp: None,
            };
            for j in sample(&mut rng, spec.n_constructs, links) {
                let item = ItemParams {
                    c: ty.guess_factor(),
                    ..constructs[j].clone()
                };
                let mastery = prob_correct(theta, &ItemParams { c: 0.0, ..item.clone() });
                if rng.random::<f64>() < spec.hint_rate * (1.0 - mastery) {
                    ev.hinted.insert(item.item_id.clone());
                }
                ev.outcomes.insert(item.item_id.clone(), rng.random::<f64>() < prob_correct(theta, &item));
            }
            events.push(ev);
        }
        truth.push((student_id, theta));
    }
    Ok(Cohort {
        events,
        labels,
        truth,
        constructs,
    })
}
