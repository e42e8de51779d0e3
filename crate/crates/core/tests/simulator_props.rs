use std::collections::HashSet;

use irtcat::engine::{EngineConfig, ExplorationConfig, TerminationCriterion, TerminationReason};
use irtcat::simulator::synth::BankSpec;
use irtcat::simulator::{run_batch, run_simulation, BatchSettings, SimulationConfig, SlipSchedule};
use proptest::prelude::*;

fn criterion() -> impl Strategy<Value = TerminationCriterion> {
    prop_oneof![
        (25usize..80).prop_map(TerminationCriterion::fixed_length),
        (0.15f64..0.4).prop_map(TerminationCriterion::sem_threshold),
        (4usize..12, 0.02f64..0.3).prop_map(|(n, d)| TerminationCriterion::early_stop(n, d)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sessions_respect_bounds(crit in criterion(), theta in -3.5f64..3.5, slip in 0.0f64..0.3, explore in any::<bool>(), warmup in 0usize..12, seed in any::<u64>()) {
        let bank = BankSpec { n_items: 400, ..BankSpec::default() }.generate(9).unwrap();
        let mut engine = EngineConfig::new(crit);
        engine.warmup_length = warmup;
        if explore {
            engine.exploration = ExplorationConfig::default();
        }
        let cfg = SimulationConfig { theta_true: theta, slip: SlipSchedule::constant(slip), engine: engine.clone(), seed };
        let r = run_simulation(&cfg, &bank, 0).unwrap();
        let counted = r.responses.iter().filter(|e| e.counted).count();
        prop_assert_eq!(r.length, r.responses.len());
        prop_assert_eq!(r.ability.n_responses, counted);
        prop_assert!(r.length <= engine.criterion.max_steps);
        if r.reason == TerminationReason::Converged {
            prop_assert!(r.length >= engine.criterion.min_steps);
        }
        let items: HashSet<usize> = r.responses.iter().map(|e| e.item).collect();
        prop_assert_eq!(items.len(), r.responses.len());
        prop_assert_eq!(r.theta_trajectory.len(), r.responses.len() + 1);
        prop_assert_eq!(r.sem_trajectory.len(), r.responses.len() + 1);
        prop_assert!(r.ability.theta.is_finite() && r.ability.standard_error > 0.0);
        prop_assert_eq!(run_simulation(&cfg, &bank, 0).unwrap(), r);
    }
}

#[test]
fn settings_share_learners_on_one_seed() {
    let bank = BankSpec { n_items: 300, ..BankSpec::default() }.generate(2).unwrap();
    let mk = |crit, slip| {
        let mut s = BatchSettings::new(EngineConfig::new(crit), slip);
        s.n_sessions = 20;
        run_batch(&bank, &s, 77).unwrap()
    };
    let a = mk(TerminationCriterion::fixed_length(30), SlipSchedule::none());
    let b = mk(TerminationCriterion::early_stop(8, 0.1), SlipSchedule::constant(0.1));
    for (x, y) in a.sessions.iter().zip(&b.sessions) {
        assert_eq!((x.seed, x.theta_true), (y.seed, y.theta_true));
    }
    assert!(a.sessions.iter().all(|s| s.length == 30));
}
