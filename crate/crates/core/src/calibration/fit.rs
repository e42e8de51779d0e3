//! Alternating penalized-likelihood item fitting over a quadrature grid.
//!
//! Each outer iteration computes every learner's posterior over the ability
//! grid with the items held fixed (which also yields the EAP abilities), then
//! refits every item against the posterior-weighted success/trial counts with
//! the abilities held fixed. Observations are binomial `(successes, trials)`
//! pairs; Bernoulli responses are the `trials = 1` case.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::irt::{log_prob_response, prob_correct_raw, Ability, PROB_EPS};

use super::{eap::posterior_summary, CalibrationError, QuadratureGrid};

/// Learners per E-step work unit. Fixed so reductions never depend on worker count.
const LEARNER_CHUNK: usize = 64;
const MAX_SWEEPS: usize = 25;
const MAX_HALVINGS: usize = 30;

pub const A_BOUNDS: (f64, f64) = (0.2, 4.0);
pub const B_BOUNDS: (f64, f64) = (-5.0, 5.0);
pub const C_BOUNDS: (f64, f64) = (0.0, 0.5);
/// Keeps the Beta prior's log density finite at the lower box edge.
const C_FLOOR_ESTIMATED: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub max_outer_iterations: usize,
    /// Threshold on the mean absolute change of `a` and `b` between iterations.
    pub convergence_tol: f64,
    pub estimate_c: bool,
    pub fixed_c: f64,
    /// When set, every discrimination is pinned to this value.
    pub fixed_a: Option<f64>,
    /// SD of the normal prior on `ln a`.
    pub prior_log_a_sd: f64,
    /// SD of the normal prior on `b`.
    pub prior_b_sd: f64,
    /// Beta prior on `c`, used only when `estimate_c` is set.
    pub prior_c_alpha: f64,
    pub prior_c_beta: f64,
    pub grid_nodes: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 200,
            convergence_tol: 1e-4,
            estimate_c: false,
            fixed_c: 0.25,
            fixed_a: None,
            prior_log_a_sd: 0.5,
            prior_b_sd: 2.0,
            prior_c_alpha: 5.0,
            prior_c_beta: 17.0,
            grid_nodes: super::grid::DEFAULT_NODES,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidConfig(m.to_string()));
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be positive");
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence_tol must be positive");
        }
        if !(0.0..1.0).contains(&self.fixed_c) {
            return bad("fixed_c must lie in [0, 1)");
        }
        if let Some(a) = self.fixed_a {
            if !(a > 0.0 && a.is_finite()) {
                return bad("fixed_a must be positive");
            }
        }
        if !(self.prior_log_a_sd > 0.0 && self.prior_b_sd > 0.0) {
            return bad("prior standard deviations must be positive");
        }
        if !(self.prior_c_alpha > 1.0 && self.prior_c_beta > 1.0) {
            return bad("Beta prior shape parameters must exceed 1");
        }
        if self.grid_nodes < 2 {
            return bad("grid_nodes must be at least 2");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<QuadratureGrid, CalibrationError> {
        QuadratureGrid::normal(self.grid_nodes, super::grid::THETA_MIN, super::grid::THETA_MAX, 0.0, 1.0)
    }
}

/// One aggregated observation of a learner on an item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub learner: usize,
    pub item: usize,
    pub successes: u32,
    pub trials: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params3pl {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Result of [`fit_items`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: Vec<Params3pl>,
    pub abilities: Vec<Ability>,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    /// Items whose observations are all successes or all failures.
    pub degenerate: Vec<bool>,
}

/// Runs the alternating fit. `start` supplies the initial parameters (and the
/// fixed `c` of every item when `c` is not estimated).
pub fn fit_items(
    n_learners: usize,
    observations: &[Observation],
    start: Vec<Params3pl>,
    config: &CalibrationConfig,
) -> Result<FitOutcome, CalibrationError> {
    config.validate()?;
    let n_items = start.len();
    if observations.is_empty() || n_learners == 0 || n_items == 0 {
        return Err(CalibrationError::NoData);
    }
    let grid = config.grid()?;

    let mut by_learner: Vec<Vec<Observation>> = vec![Vec::new(); n_learners];
    let mut succ = vec![0u64; n_items];
    let mut trials = vec![0u64; n_items];
    for obs in observations {
        if obs.learner >= n_learners || obs.item >= n_items {
            return Err(CalibrationError::NoData);
        }
        if obs.successes > obs.trials || obs.trials == 0 {
            return Err(CalibrationError::InvalidObservation {
                successes: obs.successes,
                trials: obs.trials,
            });
        }
        by_learner[obs.learner].push(*obs);
        succ[obs.item] += obs.successes as u64;
        trials[obs.item] += obs.trials as u64;
    }
    if let Some(pos) = by_learner.iter().position(|v| v.is_empty()) {
        return Err(CalibrationError::LearnerWithoutData(pos));
    }
    if let Some(pos) = trials.iter().position(|t| *t == 0) {
        return Err(CalibrationError::ItemWithoutData(pos));
    }
    let degenerate: Vec<bool> = (0..n_items).map(|j| succ[j] == 0 || succ[j] == trials[j]).collect();

    let mut params: Vec<Params3pl> = start
        .into_iter()
        .map(|p| clamp_params(p, config))
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while iterations < config.max_outer_iterations {
        iterations += 1;
        let tables = LogTables::new(&params, &grid);
        let (_, counts) = e_step(&by_learner, &tables, &grid, n_items)?;
        let next: Vec<Params3pl> = params
            .par_iter()
            .enumerate()
            .map(|(j, p)| m_step_item(*p, &counts.success[j], &counts.trials[j], &grid, config))
            .collect();
        last_change = params
            .iter()
            .zip(&next)
            .map(|(p, q)| (p.a - q.a).abs() + (p.b - q.b).abs())
            .sum::<f64>()
            / (2 * n_items) as f64;
        params = next;
        if last_change < config.convergence_tol {
            converged = true;
            break;
        }
    }

    let tables = LogTables::new(&params, &grid);
    let (abilities, _) = e_step(&by_learner, &tables, &grid, n_items)?;
    Ok(FitOutcome {
        params,
        abilities,
        iterations,
        converged,
        last_change,
        degenerate,
    })
}

/// Starting values from each item's observed proportion correct.
pub fn initial_params(observations: &[Observation], n_items: usize, c_of: impl Fn(usize) -> f64, a0: f64) -> Vec<Params3pl> {
    let mut succ = vec![0.0; n_items];
    let mut trials = vec![0.0; n_items];
    for o in observations {
        succ[o.item] += o.successes as f64;
        trials[o.item] += o.trials as f64;
    }
    (0..n_items)
        .map(|j| {
            let c = c_of(j);
            let p = ((succ[j] + 0.5) / (trials[j] + 1.0)).clamp(c + 0.01, 0.99);
            let s = ((p - c) / (1.0 - c)).clamp(0.01, 0.99);
            let b = (-(s / (1.0 - s)).ln() / a0).clamp(B_BOUNDS.0, B_BOUNDS.1);
            Params3pl { a: a0, b, c }
        })
        .collect()
}

fn clamp_params(p: Params3pl, config: &CalibrationConfig) -> Params3pl {
    let a = match config.fixed_a {
        Some(a) => a,
        None => p.a.clamp(A_BOUNDS.0, A_BOUNDS.1),
    };
    let c = if config.estimate_c {
        p.c.clamp(C_FLOOR_ESTIMATED, C_BOUNDS.1)
    } else {
        p.c
    };
    Params3pl {
        a,
        b: p.b.clamp(B_BOUNDS.0, B_BOUNDS.1),
        c,
    }
}

struct LogTables {
    log_p: Vec<Vec<f64>>,
    log_q: Vec<Vec<f64>>,
}

impl LogTables {
    fn new(params: &[Params3pl], grid: &QuadratureGrid) -> Self {
        let mut log_p = Vec::with_capacity(params.len());
        let mut log_q = Vec::with_capacity(params.len());
        for p in params {
            let (lp, lq): (Vec<f64>, Vec<f64>) = grid
                .nodes()
                .iter()
                .map(|&x| (log_prob_response(x, p.a, p.b, p.c, true), log_prob_response(x, p.a, p.b, p.c, false)))
                .unzip();
            log_p.push(lp);
            log_q.push(lq);
        }
        Self { log_p, log_q }
    }
}

struct ExpectedCounts {
    success: Vec<Vec<f64>>,
    trials: Vec<Vec<f64>>,
}

impl ExpectedCounts {
    fn zeros(n_items: usize, n_nodes: usize) -> Self {
        Self {
            success: vec![vec![0.0; n_nodes]; n_items],
            trials: vec![vec![0.0; n_nodes]; n_items],
        }
    }

    fn add(&mut self, other: &ExpectedCounts) {
        for (a, b) in self.success.iter_mut().zip(&other.success) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.trials.iter_mut().zip(&other.trials) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn e_step(
    by_learner: &[Vec<Observation>],
    tables: &LogTables,
    grid: &QuadratureGrid,
    n_items: usize,
) -> Result<(Vec<Ability>, ExpectedCounts), CalibrationError> {
    let q = grid.len();
    let chunks: Vec<Result<(Vec<Ability>, ExpectedCounts), CalibrationError>> = by_learner
        .par_chunks(LEARNER_CHUNK)
        .map(|chunk| {
            let mut counts = ExpectedCounts::zeros(n_items, q);
            let mut abilities = Vec::with_capacity(chunk.len());
            let mut ll = vec![0.0; q];
            let mut post = vec![0.0; q];
            for obs in chunk {
                ll.iter_mut().for_each(|v| *v = 0.0);
                let mut n_resp = 0usize;
                for o in obs {
                    let (k, f) = (o.successes as f64, (o.trials - o.successes) as f64);
                    let (lp, lq) = (&tables.log_p[o.item], &tables.log_q[o.item]);
                    for i in 0..q {
                        ll[i] += k * lp[i] + f * lq[i];
                    }
                    n_resp += o.trials as usize;
                }
                abilities.push(posterior_summary(grid, &ll, n_resp)?);
                let max = ll
                    .iter()
                    .zip(grid.log_weights())
                    .map(|(a, b)| a + b)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for i in 0..q {
                    post[i] = (ll[i] + grid.log_weights()[i] - max).exp();
                    z += post[i];
                }
                post.iter_mut().for_each(|p| *p /= z);
                for o in obs {
                    let (k, n) = (o.successes as f64, o.trials as f64);
                    let (s, t) = (&mut counts.success[o.item], &mut counts.trials[o.item]);
                    for i in 0..q {
                        s[i] += post[i] * k;
                        t[i] += post[i] * n;
                    }
                }
            }
            Ok((abilities, counts))
        })
        .collect();

    let mut abilities = Vec::with_capacity(by_learner.len());
    let mut total = ExpectedCounts::zeros(n_items, q);
    for chunk in chunks {
        let (ab, counts) = chunk?;
        abilities.extend(ab);
        total.add(&counts);
    }
    Ok((abilities, total))
}

#[derive(Clone, Copy)]
enum Coord {
    LogA,
    B,
    C,
}

/// Penalized expected log-likelihood of one item.
fn objective(p: Params3pl, succ: &[f64], trials: &[f64], grid: &QuadratureGrid, cfg: &CalibrationConfig) -> f64 {
    let mut f = 0.0;
    for (i, &x) in grid.nodes().iter().enumerate() {
        let pr = prob_correct_raw(x, p.a, p.b, p.c).clamp(PROB_EPS, 1.0 - PROB_EPS);
        f += succ[i] * pr.ln() + (trials[i] - succ[i]) * (1.0 - pr).ln();
    }
    f + log_prior(p, cfg)
}

fn log_prior(p: Params3pl, cfg: &CalibrationConfig) -> f64 {
    let mut lp = 0.0;
    if cfg.fixed_a.is_none() {
        let u = p.a.ln();
        lp -= 0.5 * (u / cfg.prior_log_a_sd).powi(2);
    }
    lp -= 0.5 * (p.b / cfg.prior_b_sd).powi(2);
    if cfg.estimate_c {
        lp += (cfg.prior_c_alpha - 1.0) * p.c.ln() + (cfg.prior_c_beta - 1.0) * (1.0 - p.c).ln();
    }
    lp
}

/// Derivative along `coord` and its expected (Fisher) curvature.
fn gradient_and_curvature(
    p: Params3pl,
    coord: Coord,
    succ: &[f64],
    trials: &[f64],
    grid: &QuadratureGrid,
    cfg: &CalibrationConfig,
) -> (f64, f64) {
    let (mut g, mut h) = (0.0, 0.0);
    for (i, &x) in grid.nodes().iter().enumerate() {
        let z = p.a * (x - p.b);
        let s = 1.0 / (1.0 + (-z).exp());
        let pr = (p.c + (1.0 - p.c) * s).clamp(PROB_EPS, 1.0 - PROB_EPS);
        let dp = match coord {
            Coord::LogA => (1.0 - p.c) * s * (1.0 - s) * z,
            Coord::B => -(1.0 - p.c) * s * (1.0 - s) * p.a,
            Coord::C => 1.0 - s,
        };
        g += (succ[i] / pr - (trials[i] - succ[i]) / (1.0 - pr)) * dp;
        h += trials[i] * dp * dp / (pr * (1.0 - pr));
    }
    match coord {
        Coord::LogA => {
            let u = p.a.ln();
            g -= u / cfg.prior_log_a_sd.powi(2);
            h += 1.0 / cfg.prior_log_a_sd.powi(2);
        }
        Coord::B => {
            g -= p.b / cfg.prior_b_sd.powi(2);
            h += 1.0 / cfg.prior_b_sd.powi(2);
        }
        Coord::C => {
            let (al, be) = (cfg.prior_c_alpha - 1.0, cfg.prior_c_beta - 1.0);
            g += al / p.c - be / (1.0 - p.c);
            h += al / (p.c * p.c) + be / (1.0 - p.c).powi(2);
        }
    }
    (g, h)
}

fn moved(p: Params3pl, coord: Coord, step: f64) -> Params3pl {
    let mut q = p;
    match coord {
        Coord::LogA => q.a = (p.a.ln() + step).exp().clamp(A_BOUNDS.0, A_BOUNDS.1),
        Coord::B => q.b = (p.b + step).clamp(B_BOUNDS.0, B_BOUNDS.1),
        Coord::C => q.c = (p.c + step).clamp(C_FLOOR_ESTIMATED, C_BOUNDS.1),
    }
    q
}

/// Coordinate-wise Fisher-scoring ascent with step halving inside the boxes.
fn m_step_item(start: Params3pl, succ: &[f64], trials: &[f64], grid: &QuadratureGrid, cfg: &CalibrationConfig) -> Params3pl {
    let mut coords = Vec::with_capacity(3);
    if cfg.fixed_a.is_none() {
        coords.push(Coord::LogA);
    }
    coords.push(Coord::B);
    if cfg.estimate_c {
        coords.push(Coord::C);
    }
    let mut p = start;
    let mut f = objective(p, succ, trials, grid, cfg);
    for _ in 0..MAX_SWEEPS {
        let mut biggest = 0.0f64;
        for &coord in &coords {
            let (g, h) = gradient_and_curvature(p, coord, succ, trials, grid, cfg);
            if h.is_nan() || h <= 0.0 || !g.is_finite() {
                continue;
            }
            let mut step = (g / h).clamp(-1.0, 1.0);
            for _ in 0..MAX_HALVINGS {
                let cand = moved(p, coord, step);
                let fc = objective(cand, succ, trials, grid, cfg);
                if fc >= f {
                    biggest = biggest.max((cand.a - p.a).abs().max((cand.b - p.b).abs()).max((cand.c - p.c).abs()));
                    p = cand;
                    f = fc;
                    break;
                }
                step *= 0.5;
            }
        }
        if biggest < 1e-9 {
            break;
        }
    }
    p
}
