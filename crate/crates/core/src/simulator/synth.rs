//! Seeded generators for synthetic banks, learners and response logs.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{map_theta_to_cefr, ResponseRecord};
use crate::irt::{prob_correct, ItemBank, ItemParams};
use crate::rng::{stream_rng, Stream};

use super::SimError;

/// Parameters of the synthetic multiple-choice bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSpec {
    pub n_items: usize,
    /// SD of `ln a`.
    pub log_a_sd: f64,
    /// SD of `b` before truncation.
    pub b_sd: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub c: f64,
}

impl Default for BankSpec {
    fn default() -> Self {
        Self {
            n_items: 3000,
            log_a_sd: 0.3,
            b_sd: 1.5,
            b_min: -4.0,
            b_max: 4.0,
            c: 0.25,
        }
    }
}

impl BankSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.log_a_sd >= 0.0 && self.b_sd > 0.0 && self.b_max > self.b_min && (0.0..1.0).contains(&self.c)) {
            return Err(SimError::InvalidConfig(
                "bank spec needs log_a_sd >= 0, b_sd > 0, b_max > b_min and c in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<ItemBank, SimError> {
        self.validate()?;
        let mut rng = stream_rng(seed, Stream::Generator);
        let log_a = Normal::new(0.0, self.log_a_sd).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let b_dist = Normal::new(0.0, self.b_sd).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let items = (0..self.n_items)
            .map(|i| {
                let a = log_a.sample(&mut rng).exp();
                let b = loop {
                    let b: f64 = b_dist.sample(&mut rng);
                    if (self.b_min..=self.b_max).contains(&b) {
                        break b;
                    }
                };
                ItemParams::new(format!("Q{i:05}"), a, b, self.c)
            })
            .collect();
        ItemBank::new(items).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

/// Learners with Normal(0, 1) ability answering random subsets of a bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponsesSpec {
    pub n_learners: usize,
    pub per_learner: usize,
    pub theta_sd: f64,
}

impl Default for ResponsesSpec {
    fn default() -> Self {
        Self {
            n_learners: 1000,
            per_learner: 150,
            theta_sd: 1.0,
        }
    }
}

/// A synthetic learner and their true ability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueAbility {
    pub learner_id: String,
    pub theta: f64,
}

pub fn synth_responses(bank: &ItemBank, spec: &ResponsesSpec, seed: u64) -> Result<(Vec<ResponseRecord>, Vec<TrueAbility>), SimError> {
    if spec.per_learner > bank.len() {
        return Err(SimError::InvalidConfig(format!(
            "per_learner {} exceeds bank size {}",
            spec.per_learner,
            bank.len()
        )));
    }
    let theta_dist = Normal::new(0.0, spec.theta_sd).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Generator);
    let mut records = Vec::with_capacity(spec.n_learners * spec.per_learner);
    let mut truth = Vec::with_capacity(spec.n_learners);
    for l in 0..spec.n_learners {
        let learner_id = format!("L{l:05}");
        let theta: f64 = theta_dist.sample(&mut rng);
        let mut picks = sample(&mut rng, bank.len(), spec.per_learner).into_vec();
        picks.sort_unstable();
        for i in picks {
            let item = bank.get(i);
            records.push(ResponseRecord {
                learner_id: learner_id.clone(),
                item_id: item.item_id.clone(),
                correct: rng.random::<f64>() < prob_correct(theta, item),
                timestamp: None,
            });
        }
        truth.push(TrueAbility { learner_id, theta });
    }
    Ok((records, truth))
}

/// Expert CEFR labels: the bin of each item's difficulty after Normal(0, `noise_sd`) noise.
pub fn synth_item_levels(bank: &ItemBank, noise_sd: f64, seed: u64) -> Result<Vec<(String, usize)>, SimError> {
    if bank.is_empty() {
        return Ok(Vec::new());
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Truth);
    Ok(bank
        .items()
        .iter()
        .map(|it| (it.item_id.clone(), map_theta_to_cefr(it.b + noise.sample(&mut rng), bank)))
        .collect())
}

/// Every learner answers the same `template` of items, as in a fixed exhaustive test.
pub fn synth_exhaustive_logs(bank: &ItemBank, template: &[usize], learners: &[TrueAbility], seed: u64) -> Vec<ResponseRecord> {
    let mut rng = stream_rng(seed, Stream::Answers);
    let mut out = Vec::with_capacity(template.len() * learners.len());
    for learner in learners {
        for &i in template {
            let item = bank.get(i);
            out.push(ResponseRecord {
                learner_id: learner.learner_id.clone(),
                item_id: item.item_id.clone(),
                correct: rng.random::<f64>() < prob_correct(learner.theta, item),
                timestamp: None,
            });
        }
    }
    out
}

/// Learners with Normal(0, `sd`) abilities.
pub fn normal_learners(n: usize, sd: f64, seed: u64) -> Result<Vec<TrueAbility>, SimError> {
    let dist = Normal::new(0.0, sd).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Truth);
    Ok((0..n)
        .map(|k| TrueAbility {
            learner_id: format!("L{k:05}"),
            theta: dist.sample(&mut rng),
        })
        .collect())
}

/// `size` distinct bank positions in ascending order.
pub fn random_template(bank: &ItemBank, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Selection);
    let mut picks = sample(&mut rng, bank.len(), size.min(bank.len())).into_vec();
    picks.sort_unstable();
    picks
}

/// Learners with abilities evenly spread over `[lo, hi]`.
pub fn spread_learners(n: usize, lo: f64, hi: f64) -> Vec<TrueAbility> {
    (0..n)
        .map(|k| TrueAbility {
            learner_id: format!("L{k:05}"),
            theta: if n == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_generation_is_seeded_and_bounded() {
        let spec = BankSpec { n_items: 500, ..BankSpec::default() };
        let a = spec.generate(1).unwrap();
        assert_eq!(a, spec.generate(1).unwrap());
        assert_ne!(a, spec.generate(2).unwrap());
        assert!(a.items().iter().all(|i| (-4.0..=4.0).contains(&i.b) && i.c == 0.25));
        let empty = BankSpec { n_items: 0, ..BankSpec::default() }.generate(1).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn responses_shape() {
        let bank = BankSpec { n_items: 50, ..BankSpec::default() }.generate(3).unwrap();
        let spec = ResponsesSpec { n_learners: 4, per_learner: 10, theta_sd: 1.0 };
        let (records, truth) = synth_responses(&bank, &spec, 9).unwrap();
        assert_eq!(records.len(), 40);
        assert_eq!(truth.len(), 4);
        let too_many = ResponsesSpec { per_learner: 51, ..spec };
        assert!(synth_responses(&bank, &too_many, 9).is_err());
    }
}
