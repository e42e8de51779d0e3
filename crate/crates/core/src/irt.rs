//! The three-parameter logistic (3PL) model and its derived quantities.
//!
//! All functions here are pure and operate on immutable values.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower/upper clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

/// Parameters of a single dichotomous item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub item_id: String,
    /// Discrimination, strictly positive.
    pub a: f64,
    /// Difficulty on the ability scale.
    pub b: f64,
    /// Guessing floor in `[0, 1)`.
    pub c: f64,
    pub construct_id: Option<String>,
    /// Number of learner responses recorded for this item.
    pub response_count: u64,
}

impl ItemParams {
    pub fn new(item_id: impl Into<String>, a: f64, b: f64, c: f64) -> Self {
        Self {
            item_id: item_id.into(),
            a,
            b,
            c,
            construct_id: None,
            response_count: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(ModelError::InvalidItem {
                item_id: self.item_id.clone(),
                reason: format!("discrimination must be positive and finite, got {}", self.a),
            });
        }
        if !self.b.is_finite() {
            return Err(ModelError::InvalidItem {
                item_id: self.item_id.clone(),
                reason: format!("difficulty must be finite, got {}", self.b),
            });
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(ModelError::InvalidItem {
                item_id: self.item_id.clone(),
                reason: format!("guessing must lie in [0, 1), got {}", self.c),
            });
        }
        Ok(())
    }
}

/// A point estimate of latent ability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ability {
    pub theta: f64,
    /// `f64::INFINITY` before any evidence has been seen.
    pub standard_error: f64,
    pub n_responses: usize,
}

impl Ability {
    pub fn unmeasured(theta: f64) -> Self {
        Self {
            theta,
            standard_error: f64::INFINITY,
            n_responses: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid item {item_id}: {reason}")]
    InvalidItem { item_id: String, reason: String },
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("total test information is zero, SEM is undefined")]
    UndefinedSem,
}

/// An ordered collection of items with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemBank {
    items: Vec<ItemParams>,
    index: HashMap<String, usize>,
}

impl ItemBank {
    pub fn new(items: Vec<ItemParams>) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            item.validate()?;
            if index.insert(item.item_id.clone(), i).is_some() {
                return Err(ModelError::DuplicateItem(item.item_id.clone()));
            }
        }
        Ok(Self { items, index })
    }

    pub fn items(&self) -> &[ItemParams] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &ItemParams {
        &self.items[idx]
    }

    pub fn position(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    pub fn by_id(&self, item_id: &str) -> Option<&ItemParams> {
        self.position(item_id).map(|i| &self.items[i])
    }

    /// Smallest and largest difficulty in the bank.
    pub fn difficulty_range(&self) -> Option<(f64, f64)> {
        self.items.iter().fold(None, |acc, it| match acc {
            None => Some((it.b, it.b)),
            Some((lo, hi)) => Some((lo.min(it.b), hi.max(it.b))),
        })
    }

    pub fn into_items(self) -> Vec<ItemParams> {
        self.items
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of a correct answer, `c + (1 - c) * logistic(a * (theta - b))`.
#[inline]
pub fn prob_correct(theta: f64, item: &ItemParams) -> f64 {
    prob_correct_raw(theta, item.a, item.b, item.c)
}

#[inline]
pub(crate) fn prob_correct_raw(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    c + (1.0 - c) * logistic(a * (theta - b))
}

/// Fisher information an item carries about `theta`.
///
/// Zero when `P = 0`, which can only happen for `c = 0` far below the item.
#[inline]
pub fn item_information(theta: f64, item: &ItemParams) -> f64 {
    information_raw(theta, item.a, item.b, item.c)
}

#[inline]
pub(crate) fn information_raw(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    // Written through the logistic term s so that (P - c)/(1 - c) = s exactly.
    let s = logistic(a * (theta - b));
    let p = c + (1.0 - c) * s;
    if p <= 0.0 {
        return 0.0;
    }
    let q = (1.0 - c) * (1.0 - s);
    a * a * (q / p) * s * s
}

/// Sum of item information over `items`; zero for an empty sequence.
pub fn test_information<'a, I>(theta: f64, items: I) -> f64
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    items.into_iter().map(|it| item_information(theta, it)).sum()
}

/// Standard error of measurement, `sqrt(1 / test_information)`.
pub fn sem<'a, I>(theta: f64, items: I) -> Result<f64, ModelError>
where
    I: IntoIterator<Item = &'a ItemParams>,
{
    sem_from_information(test_information(theta, items))
}

pub fn sem_from_information(info: f64) -> Result<f64, ModelError> {
    if info > 0.0 {
        Ok((1.0 / info).sqrt())
    } else {
        Err(ModelError::UndefinedSem)
    }
}

/// Log-likelihood of a response pattern at `theta`.
///
/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` so a response that
/// contradicts a saturated item costs a large but finite penalty.
pub fn response_log_likelihood<'a, I>(theta: f64, responses: I) -> f64
where
    I: IntoIterator<Item = (&'a ItemParams, bool)>,
{
    responses
        .into_iter()
        .map(|(item, correct)| log_prob_response(theta, item.a, item.b, item.c, correct))
        .sum()
}

#[inline]
pub(crate) fn log_prob_response(theta: f64, a: f64, b: f64, c: f64, correct: bool) -> f64 {
    let z = a * (theta - b);
    if correct {
        (c + (1.0 - c) * logistic(z)).clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
    } else {
        // (1 - c) * logistic(-z) keeps precision where P is close to one
        ((1.0 - c) * logistic(-z)).clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(a: f64, b: f64, c: f64) -> ItemParams {
        ItemParams::new("i", a, b, c)
    }

    #[test]
    fn probability_examples() {
        assert_eq!(prob_correct(0.0, &item(1.0, 0.0, 0.0)), 0.5);
        assert!((prob_correct(1.3, &item(2.7, 1.3, 0.25)) - 0.625).abs() < 1e-15);
        assert!((prob_correct(1.0, &item(2.0, 0.0, 0.2)) - 0.904_637_662_3).abs() < 1e-6);
    }

    #[test]
    fn information_examples() {
        let it = item(1.7, 0.4, 0.0);
        assert!((item_information(0.4, &it) - 1.7 * 1.7 / 4.0).abs() < 1e-12);
        assert!((item_information(0.0, &item(1.0, 0.0, 0.25)) - 0.15).abs() < 1e-12);
        assert!(item_information(-1e6, &item(1.0, 0.0, 0.25)).abs() < 1e-12);
        assert_eq!(item_information(-1e6, &item(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn test_information_and_sem() {
        assert_eq!(test_information(0.3, std::iter::empty()), 0.0);
        let it = item(1.2, 0.0, 0.0);
        let two = [it.clone(), it];
        assert!((test_information(0.0, &two) - 1.44 / 2.0).abs() < 1e-12);
        // four items with a = 2, c = 0 at theta = b carry information 1 each
        let four: Vec<_> = (0..4).map(|_| item(2.0, 0.0, 0.0)).collect();
        assert!((sem(0.0, &four).unwrap() - 0.5).abs() < 1e-12);
        let hundred: Vec<_> = (0..25).map(|_| item(2.0, 0.0, 0.0)).collect();
        assert!((sem(0.0, &hundred).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(sem(0.0, &[]), Err(ModelError::UndefinedSem));
    }

    #[test]
    fn log_likelihood_examples() {
        let it = item(1.0, 0.0, 0.0);
        let half = 0.5f64.ln();
        assert!((response_log_likelihood(0.0, [(&it, true)]) - half).abs() < 1e-15);
        assert!((response_log_likelihood(0.0, [(&it, false)]) - half).abs() < 1e-15);
        assert_eq!(response_log_likelihood(0.0, std::iter::empty()), 0.0);
        // saturated item contradicted by the response stays finite
        let hard = item(4.0, 0.0, 0.0);
        assert!(response_log_likelihood(1e4, [(&hard, false)]).is_finite());
    }

    #[test]
    fn bank_rejects_duplicates_and_bad_items() {
        let err = ItemBank::new(vec![item(1.0, 0.0, 0.0), item(1.0, 1.0, 0.0)]).unwrap_err();
        assert_eq!(err, ModelError::DuplicateItem("i".into()));
        assert!(ItemBank::new(vec![item(0.0, 0.0, 0.0)]).is_err());
        assert!(ItemBank::new(vec![item(1.0, 0.0, 1.0)]).is_err());
        assert!(ItemBank::new(vec![item(1.0, f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn information_peaks_at_difficulty_for_c_zero() {
        let it = item(1.3, 0.7, 0.0);
        let step = 0.001;
        let (best, _) = (0..8001)
            .map(|k| -4.0 + k as f64 * step)
            .map(|t| (t, item_information(t, &it)))
            .fold((0.0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((best - 0.7).abs() <= step);
    }

    fn arb_item() -> impl Strategy<Value = ItemParams> {
        (0.2f64..4.0, -4.0f64..4.0, 0.0f64..0.5).prop_map(|(a, b, c)| item(a, b, c))
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(it in arb_item(), t in -6.0f64..6.0, dt in 1e-3f64..2.0) {
            let p0 = prob_correct(t, &it);
            let p1 = prob_correct(t + dt, &it);
            prop_assert!(p1 > p0);
            prop_assert!(p0 >= it.c && p0 < 1.0);
        }

        #[test]
        fn c_zero_reduction(a in 0.2f64..4.0, b in -4.0f64..4.0, t in -4.0f64..4.0) {
            let it = item(a, b, 0.0);
            let p = prob_correct(t, &it);
            prop_assert!((item_information(t, &it) - a * a * p * (1.0 - p)).abs() <= 1e-12);
        }

        #[test]
        fn closed_form_information(it in arb_item(), t in -4.0f64..4.0) {
            let p = prob_correct(t, &it);
            let closed = it.a * it.a * ((1.0 - p) / p) * ((p - it.c) / (1.0 - it.c)).powi(2);
            prop_assert!((item_information(t, &it) - closed).abs() <= 1e-12);
        }

        #[test]
        fn derivative_matches_finite_difference(it in arb_item(), t in -4.0f64..4.0) {
            let h = 1e-5;
            let fd = (prob_correct(t + h, &it) - prob_correct(t - h, &it)) / (2.0 * h);
            let p = prob_correct(t, &it);
            let analytic = it.a * (p - it.c) * (1.0 - p) / (1.0 - it.c);
            prop_assert!((fd - analytic).abs() <= 1e-6);
        }

        #[test]
        fn sem_never_increases(items in proptest::collection::vec(arb_item(), 1..8), extra in arb_item(), t in -4.0f64..4.0) {
            let before = sem(t, &items).unwrap();
            let mut more = items.clone();
            more.push(extra);
            prop_assert!(sem(t, &more).unwrap() <= before);
        }

        #[test]
        fn log_likelihood_matches_product(items in proptest::collection::vec(
                                              (0.2f64..2.0, -3.0f64..3.0, 0.0f64..0.5).prop_map(|(a, b, c)| item(a, b, c)), 0..12),
                                          answers in proptest::collection::vec(any::<bool>(), 12),
                                          t in -3.0f64..3.0) {
            let pairs: Vec<_> = items.iter().zip(answers.iter().copied()).collect();
            let product: f64 = pairs.iter().map(|(it, x)| {
                let p = prob_correct(t, it);
                if *x { p } else { 1.0 - p }
            }).product();
            let ll = response_log_likelihood(t, pairs.iter().map(|(it, x)| (*it, *x)));
            prop_assert!((ll - product.ln()).abs() <= 1e-10);
        }
    }
}
