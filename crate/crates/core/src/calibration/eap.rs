use crate::irt::{log_prob_response, Ability, ItemParams};

use super::{CalibrationError, QuadratureGrid};

/// Posterior mean and SD from per-node log-likelihoods.
pub fn posterior_summary(grid: &QuadratureGrid, log_lik: &[f64], n_responses: usize) -> Result<Ability, CalibrationError> {
    debug_assert_eq!(log_lik.len(), grid.len());
    let mut max = f64::NEG_INFINITY;
    for (ll, lw) in log_lik.iter().zip(grid.log_weights()) {
        let v = ll + lw;
        if v.is_nan() {
            return Err(CalibrationError::DegeneratePosterior);
        }
        max = max.max(v);
    }
    if !max.is_finite() {
        return Err(CalibrationError::DegeneratePosterior);
    }
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for ((ll, lw), x) in log_lik.iter().zip(grid.log_weights()).zip(grid.nodes()) {
        let w = (ll + lw - max).exp();
        z += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    let mean = m1 / z;
    let var = (m2 / z - mean * mean).max(0.0);
    Ok(Ability {
        theta: mean,
        standard_error: var.sqrt(),
        n_responses,
    })
}

/// Expected-a-posteriori ability over `grid` given scored responses.
pub fn estimate_ability_eap<'a, I>(responses: I, grid: &QuadratureGrid) -> Result<Ability, CalibrationError>
where
    I: IntoIterator<Item = (&'a ItemParams, bool)>,
{
    let mut log_lik = vec![0.0; grid.len()];
    let mut n = 0;
    for (item, correct) in responses {
        accumulate_log_lik(&mut log_lik, grid, item, correct);
        n += 1;
    }
    posterior_summary(grid, &log_lik, n)
}

/// Adds one response's log-probability at every node.
pub fn accumulate_log_lik(log_lik: &mut [f64], grid: &QuadratureGrid, item: &ItemParams, correct: bool) {
    for (ll, &x) in log_lik.iter_mut().zip(grid.nodes()) {
        *ll += log_prob_response(x, item.a, item.b, item.c, correct);
    }
}
