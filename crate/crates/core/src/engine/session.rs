use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::calibration::{accumulate_log_lik, posterior_summary, QuadratureGrid};
use crate::irt::{item_information, ItemBank};
use crate::rng::{stream_rng, SimRng, Stream};

use super::{EngineConfig, EngineError, ExplorationConfig, SelectionPolicy, StopRule, TerminationCriterion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmUp,
    Main,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::WarmUp => "warmup",
            Phase::Main => "main",
        }
    }
}

/// One administered item. `item` indexes the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResponseEntry {
    pub item: usize,
    pub correct: bool,
    /// False only for wrong answers given during warm-up.
    pub counted: bool,
    /// Phase in which the response was given.
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Converged,
    ForcedStop,
}

/// A running adaptive test.
#[derive(Debug, Clone)]
pub struct SessionState {
    rng_seed: u64,
    warmup_length: usize,
    administered: Vec<bool>,
    responses: Vec<ResponseEntry>,
    theta_trajectory: Vec<f64>,
    sem_trajectory: Vec<f64>,
    pending: Option<usize>,
    grid: QuadratureGrid,
    log_lik: Vec<f64>,
    counted_information: Vec<usize>,
    selection_rng: SimRng,
    exploration_rng: SimRng,
}

/// Starts a session with `theta_0` drawn from Normal(0, `config.init_sd`).
pub fn init_session(seed: u64, bank: &ItemBank, config: &EngineConfig) -> Result<SessionState, EngineError> {
    if bank.is_empty() {
        return Err(EngineError::EmptyBank);
    }
    config.validate()?;
    let mut init_rng = stream_rng(seed, Stream::Init);
    let theta0 = if config.init_sd > 0.0 {
        Normal::new(0.0, config.init_sd)
            .expect("validated sd")
            .sample(&mut init_rng)
    } else {
        0.0
    };
    let grid = QuadratureGrid::default();
    let nodes = grid.len();
    Ok(SessionState {
        rng_seed: seed,
        warmup_length: config.warmup_length,
        administered: vec![false; bank.len()],
        responses: Vec::new(),
        theta_trajectory: vec![theta0],
        sem_trajectory: vec![f64::INFINITY],
        pending: None,
        grid,
        log_lik: vec![0.0; nodes],
        counted_information: Vec::new(),
        selection_rng: stream_rng(seed, Stream::Selection),
        exploration_rng: stream_rng(seed, Stream::Exploration),
    })
}

/// Least-squares slope of `ys` against their positions.
pub fn trend_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// The ability used for item selection at `step`: the latest estimate, shifted
/// by `alpha_magnitude` along the recent trend when an exploration draw fires.
pub fn effective_theta<R: Rng + ?Sized>(trajectory: &[f64], step: usize, exploration: &ExplorationConfig, rng: &mut R) -> f64 {
    let theta = *trajectory.last().expect("trajectory is never empty");
    let open = step >= exploration.start_step && step < exploration.stop_step;
    if !open || exploration.epsilon_expl <= 0.0 {
        return theta;
    }
    if rng.random::<f64>() >= exploration.epsilon_expl {
        return theta;
    }
    let from = trajectory.len().saturating_sub(exploration.trend_window);
    let slope = trend_slope(&trajectory[from..]);
    if slope.abs() > exploration.flat_threshold {
        theta + slope.signum() * exploration.alpha_magnitude
    } else {
        theta
    }
}

impl SessionState {
    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Number of recorded responses.
    pub fn step(&self) -> usize {
        self.responses.len()
    }

    pub fn phase(&self) -> Phase {
        if self.responses.len() < self.warmup_length {
            Phase::WarmUp
        } else {
            Phase::Main
        }
    }

    pub fn warmup_length(&self) -> usize {
        self.warmup_length
    }

    pub fn responses(&self) -> &[ResponseEntry] {
        &self.responses
    }

    pub fn theta_trajectory(&self) -> &[f64] {
        &self.theta_trajectory
    }

    pub fn sem_trajectory(&self) -> &[f64] {
        &self.sem_trajectory
    }

    pub fn theta(&self) -> f64 {
        *self.theta_trajectory.last().expect("trajectory is never empty")
    }

    /// SEM at the current estimate over counted items; infinite when undefined.
    pub fn sem(&self) -> f64 {
        *self.sem_trajectory.last().expect("trajectory is never empty")
    }

    pub fn is_administered(&self, item: usize) -> bool {
        self.administered[item]
    }

    pub fn counted_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.counted_information.iter().copied()
    }

    /// Chooses the next item among unadministered items accepted by `eligible`.
    pub fn select_next_item(
        &mut self,
        bank: &ItemBank,
        policy: &SelectionPolicy,
        exploration: &ExplorationConfig,
        eligible: impl Fn(usize) -> bool,
    ) -> Result<usize, EngineError> {
        let candidates: Vec<usize> = (0..bank.len()).filter(|&i| !self.administered[i] && eligible(i)).collect();
        if candidates.is_empty() {
            return Err(EngineError::OutOfItems);
        }
        let chosen = if policy.coldstart_enabled
            && policy.epsilon_coldstart > 0.0
            && self.selection_rng.random::<f64>() < policy.epsilon_coldstart
        {
            let least = candidates.iter().map(|&i| bank.get(i).response_count).min().expect("non-empty");
            let pool: Vec<usize> = candidates.into_iter().filter(|&i| bank.get(i).response_count == least).collect();
            pool[self.selection_rng.random_range(0..pool.len())]
        } else {
            let theta = effective_theta(&self.theta_trajectory, self.step(), exploration, &mut self.exploration_rng);
            let top = top_informative(bank, &candidates, theta, policy.top_k);
            top[self.selection_rng.random_range(0..top.len())]
        };
        self.pending = Some(chosen);
        Ok(chosen)
    }

    /// Records the answer to `item` and updates the ability estimate.
    pub fn record_response(&mut self, bank: &ItemBank, item: usize, correct: bool) -> Result<(), EngineError> {
        if item >= bank.len() {
            return Err(EngineError::UnknownItemIndex(item));
        }
        if self.administered[item] {
            return Err(EngineError::DuplicateResponse(bank.get(item).item_id.clone()));
        }
        if let Some(p) = self.pending {
            if p != item {
                return Err(EngineError::NotSelected {
                    expected: bank.get(p).item_id.clone(),
                    got: bank.get(item).item_id.clone(),
                });
            }
        }
        self.pending = None;
        let phase = self.phase();
        let counted = !(phase == Phase::WarmUp && !correct);
        self.administered[item] = true;
        self.responses.push(ResponseEntry {
            item,
            correct,
            counted,
            phase,
        });
        if counted {
            accumulate_log_lik(&mut self.log_lik, &self.grid, bank.get(item), correct);
            self.counted_information.push(item);
        }
        let (theta, sem) = if self.counted_information.is_empty() {
            (self.theta_trajectory[0], f64::INFINITY)
        } else {
            let ability = posterior_summary(&self.grid, &self.log_lik, self.counted_information.len())?;
            let info: f64 = self
                .counted_information
                .iter()
                .map(|&i| item_information(ability.theta, bank.get(i)))
                .sum();
            let sem = if info > 0.0 { (1.0 / info).sqrt() } else { f64::INFINITY };
            (ability.theta, sem)
        };
        self.theta_trajectory.push(theta);
        self.sem_trajectory.push(sem);
        Ok(())
    }
}

/// Up to `k` candidates with the highest information at `theta`, best first.
/// Ties go to the smaller item id.
pub fn top_informative(bank: &ItemBank, candidates: &[usize], theta: f64, k: usize) -> Vec<usize> {
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let better = |x: &(f64, usize), y: &(f64, usize)| {
        x.0 > y.0 || (x.0 == y.0 && bank.get(x.1).item_id < bank.get(y.1).item_id)
    };
    for &i in candidates {
        let cand = (item_information(theta, bank.get(i)), i);
        if top.len() == k && !better(&cand, top.last().expect("k >= 1")) {
            continue;
        }
        let pos = top.iter().position(|t| better(&cand, t)).unwrap_or(top.len());
        top.insert(pos, cand);
        top.truncate(k);
    }
    top.into_iter().map(|(_, i)| i).collect()
}

/// Applies `criterion` to the session as it stands.
pub fn check_termination(state: &SessionState, criterion: &TerminationCriterion) -> Decision {
    let n = state.step();
    if n >= criterion.min_steps {
        let converged = match criterion.rule {
            StopRule::FixedLength { length } => n >= length,
            StopRule::SemThreshold { sem } => state.sem() <= sem,
            StopRule::EarlyStop { window, delta } => {
                n >= state.warmup_length() + window && {
                    let t = state.theta_trajectory();
                    t[n - window..=n].windows(2).all(|w| (w[1] - w[0]).abs() < delta)
                }
            }
        };
        if converged {
            return Decision::Converged;
        }
    }
    if n >= criterion.max_steps {
        Decision::ForcedStop
    } else {
        Decision::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::ItemParams;
    use rand::SeedableRng;

    fn bank(n: usize) -> ItemBank {
        ItemBank::new(
            (0..n)
                .map(|i| ItemParams::new(format!("Q{i:04}"), 1.0 + 0.01 * i as f64, -2.0 + 4.0 * i as f64 / n as f64, 0.0))
                .collect(),
        )
        .unwrap()
    }

    fn config() -> EngineConfig {
        EngineConfig::new(TerminationCriterion::fixed_length(50))
    }

    #[test]
    fn init_is_seeded() {
        let b = bank(10);
        let s1 = init_session(7, &b, &config()).unwrap();
        let s2 = init_session(7, &b, &config()).unwrap();
        assert_eq!(s1.theta(), s2.theta());
        assert_ne!(init_session(8, &b, &config()).unwrap().theta(), s1.theta());
        assert_eq!(s1.phase(), Phase::Main);
        let warm = EngineConfig { warmup_length: 10, ..config() };
        assert_eq!(init_session(7, &b, &warm).unwrap().phase(), Phase::WarmUp);
        assert_eq!(init_session(7, &ItemBank::default(), &config()).unwrap_err(), EngineError::EmptyBank);
    }

    #[test]
    fn initial_draw_moments() {
        let b = bank(3);
        let draws: Vec<f64> = (0..10_000).map(|s| init_session(s, &b, &config()).unwrap().theta()).collect();
        let mean = crate::stats::mean(&draws);
        let sd = crate::stats::std_dev(&draws);
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((sd - 0.5).abs() < 0.02, "{sd}");
    }

    #[test]
    fn exploration_rules() {
        let mut rng = SimRng::seed_from_u64(3);
        let forced = ExplorationConfig {
            epsilon_expl: 1.0,
            ..ExplorationConfig::default()
        };
        let rising = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1];
        // before the window opens
        assert_eq!(effective_theta(&rising[..5], 4, &forced, &mut rng), 0.4);
        // slope of the last five points 0.7..1.1 is 0.1 per step
        assert!((trend_slope(&rising[7..]) - 0.1).abs() < 1e-12);
        assert_eq!(effective_theta(&rising, 11, &forced, &mut rng), 1.1 + 0.5);
        let falling: Vec<f64> = rising.iter().map(|x| -x).collect();
        assert_eq!(effective_theta(&falling, 11, &forced, &mut rng), -1.1 - 0.5);
        let flat = [0.3; 12];
        assert_eq!(effective_theta(&flat, 11, &forced, &mut rng), 0.3);
        // window closes at stop_step
        assert_eq!(effective_theta(&rising, 60, &forced, &mut rng), 1.1);
        assert_eq!(effective_theta(&rising, 11, &ExplorationConfig::disabled(), &mut rng), 1.1);
    }

    #[test]
    fn single_candidate_and_argmax() {
        let b = bank(6);
        let cfg = config();
        let mut s = init_session(1, &b, &cfg).unwrap();
        let only = s.select_next_item(&b, &cfg.policy, &cfg.exploration, |i| i == 4).unwrap();
        assert_eq!(only, 4);
        let argmax = SelectionPolicy { top_k: 1, ..SelectionPolicy::simulation() };
        let mut s = init_session(1, &b, &cfg).unwrap();
        let picked = s.select_next_item(&b, &argmax, &cfg.exploration, |_| true).unwrap();
        let theta = s.theta();
        let best = (0..6).max_by(|&x, &y| item_information(theta, b.get(x)).total_cmp(&item_information(theta, b.get(y)))).unwrap();
        assert_eq!(picked, best);
    }

    #[test]
    fn top_five_is_uniform() {
        // a = 2 sqrt(info) at theta = b gives the listed informations for c = 0
        let infos = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let items = infos.iter().enumerate().map(|(i, v)| ItemParams::new(format!("Q{i}"), 2.0 * f64::sqrt(*v), 0.0, 0.0)).collect();
        let b = ItemBank::new(items).unwrap();
        let cfg = EngineConfig { init_sd: 0.0, ..config() };
        let mut counts = [0usize; 6];
        let draws = 100_000;
        let mut s = init_session(99, &b, &cfg).unwrap();
        for _ in 0..draws {
            let i = s.select_next_item(&b, &cfg.policy, &cfg.exploration, |_| true).unwrap();
            counts[i] += 1;
            s.pending = None;
        }
        for &c in &counts[..5] {
            assert!((c as f64 / draws as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
        assert_eq!(counts[5], 0);
    }

    #[test]
    fn ties_break_by_item_id() {
        let items = vec![ItemParams::new("b", 1.0, 0.0, 0.0), ItemParams::new("a", 1.0, 0.0, 0.0), ItemParams::new("c", 1.0, 0.0, 0.0)];
        let b = ItemBank::new(items).unwrap();
        assert_eq!(top_informative(&b, &[0, 1, 2], 0.0, 2), vec![1, 0]);
    }

    #[test]
    fn coldstart_draws_least_answered() {
        let mut items: Vec<ItemParams> = (0..8).map(|i| ItemParams::new(format!("Q{i}"), 1.0, 0.0, 0.0)).collect();
        for (i, it) in items.iter_mut().enumerate() {
            it.response_count = if i == 6 || i == 7 { 1 } else { 50 };
        }
        let b = ItemBank::new(items).unwrap();
        let cfg = config();
        let policy = SelectionPolicy { epsilon_coldstart: 1.0, ..SelectionPolicy::live() };
        let mut s = init_session(5, &b, &cfg).unwrap();
        for _ in 0..50 {
            let i = s.select_next_item(&b, &policy, &cfg.exploration, |_| true).unwrap();
            assert!(i == 6 || i == 7);
            s.pending = None;
        }
    }

    #[test]
    fn exhausted_bank() {
        let b = bank(2);
        let cfg = config();
        let mut s = init_session(1, &b, &cfg).unwrap();
        for _ in 0..2 {
            let i = s.select_next_item(&b, &cfg.policy, &cfg.exploration, |_| true).unwrap();
            s.record_response(&b, i, true).unwrap();
        }
        assert_eq!(s.select_next_item(&b, &cfg.policy, &cfg.exploration, |_| true), Err(EngineError::OutOfItems));
    }

    #[test]
    fn warmup_discards_wrong_answers() {
        let b = bank(30);
        let cfg = EngineConfig { warmup_length: 10, ..config() };
        let mut s = init_session(2, &b, &cfg).unwrap();
        let theta0 = s.theta();
        for i in 0..10 {
            s.record_response(&b, i, false).unwrap();
        }
        assert_eq!(s.theta(), theta0);
        assert!(s.responses().iter().all(|r| !r.counted && r.phase == Phase::WarmUp));
        assert_eq!(s.phase(), Phase::Main);
        s.record_response(&b, 10, false).unwrap();
        assert!(s.responses()[10].counted);
        assert!(s.theta() < 0.0);
        assert_eq!(s.theta_trajectory().len(), s.responses().len() + 1);

        let mut s = init_session(2, &b, &cfg).unwrap();
        let mut last = f64::NEG_INFINITY;
        for i in 0..5 {
            s.record_response(&b, i, true).unwrap();
            assert!(s.theta() > last);
            last = s.theta();
        }
    }

    #[test]
    fn duplicate_and_mismatched_records() {
        let b = bank(5);
        let cfg = config();
        let mut s = init_session(2, &b, &cfg).unwrap();
        s.record_response(&b, 0, true).unwrap();
        assert!(matches!(s.record_response(&b, 0, true), Err(EngineError::DuplicateResponse(_))));
        let chosen = s.select_next_item(&b, &cfg.policy, &cfg.exploration, |_| true).unwrap();
        let other = (1..5).find(|&i| i != chosen).unwrap();
        assert!(matches!(s.record_response(&b, other, true), Err(EngineError::NotSelected { .. })));
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let b = bank(12);
        let cfg = config();
        let answers = [true, false, true, true, false, false, true, false, true, true, false, true];
        let mut fwd = init_session(4, &b, &cfg).unwrap();
        let mut rev = init_session(4, &b, &cfg).unwrap();
        for i in 0..12 {
            fwd.record_response(&b, i, answers[i]).unwrap();
            rev.record_response(&b, 11 - i, answers[11 - i]).unwrap();
        }
        assert!((fwd.theta() - rev.theta()).abs() < 1e-12);
        let direct = crate::calibration::estimate_ability_eap(
            (0..12).map(|i| (b.get(i), answers[i])),
            &QuadratureGrid::default(),
        )
        .unwrap();
        assert!((fwd.theta() - direct.theta).abs() < 1e-12);
    }

    fn state_with(trajectory: Vec<f64>, warmup: usize, sem: f64) -> SessionState {
        let b = bank(1);
        let mut s = init_session(0, &b, &EngineConfig { warmup_length: warmup, ..config() }).unwrap();
        let n = trajectory.len() - 1;
        s.responses = (0..n)
            .map(|i| ResponseEntry { item: 0, correct: true, counted: true, phase: if i < warmup { Phase::WarmUp } else { Phase::Main } })
            .collect();
        s.sem_trajectory = vec![sem; n + 1];
        s.theta_trajectory = trajectory;
        s
    }

    #[test]
    fn termination_rules() {
        let fixed = TerminationCriterion::fixed_length(50);
        let s = state_with(vec![0.0; 51], 0, 1.0);
        assert_eq!(check_termination(&s, &fixed), Decision::Converged);
        let s = state_with(vec![0.0; 50], 0, 1.0);
        assert_eq!(check_termination(&s, &fixed), Decision::Continue);

        let es = TerminationCriterion::early_stop(10, 0.05);
        let mut t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        t.extend([2.0; 11]);
        assert_eq!(check_termination(&state_with(t.clone(), 0, 1.0), &es), Decision::Converged);
        // constant but too early
        assert_eq!(check_termination(&state_with(vec![0.0; 15], 0, 1.0), &es), Decision::Continue);
        // the window may not reach into warm-up
        assert_eq!(check_termination(&state_with(vec![0.0; 31], 25, 1.0), &es), Decision::Continue);

        let sem = TerminationCriterion::sem_threshold(0.5);
        let s = state_with(vec![0.0; 31], 0, (1.0f64 / 4.1).sqrt());
        assert_eq!(check_termination(&s, &sem), Decision::Converged);
        let s = state_with(vec![0.0; 31], 0, 0.51);
        assert_eq!(check_termination(&s, &sem), Decision::Continue);
        let s = state_with(vec![0.0; 101], 0, 0.51);
        assert_eq!(check_termination(&s, &sem), Decision::ForcedStop);
    }
}
