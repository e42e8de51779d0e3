use std::collections::{BTreeMap, BTreeSet};

use irtcat::exercise::{accumulate_performance, build_construct_responses, ExerciseEvent, ExerciseType, FilterConfig};
use proptest::prelude::*;

const CONSTRUCTS: [&str; 4] = ["tense", "person", "mood", "case"];

fn arb_event(n_students: usize) -> impl Strategy<Value = ExerciseEvent> {
    (
        0..n_students,
        0usize..12,
        any::<bool>(),
        prop::collection::btree_map(0usize..4, any::<bool>(), 1..4),
        prop::collection::btree_set(0usize..4, 0..3),
    )
        .prop_map(|(s, e, mc, outcomes, hinted)| ExerciseEvent {
            student_id: format!("s{s}"),
            exercise_id: format!("e{e}"),
            exercise_type: if mc { ExerciseType::MultipleChoice } else { ExerciseType::Cloze },
            outcomes: outcomes.into_iter().map(|(c, r)| (CONSTRUCTS[c].to_string(), r)).collect::<BTreeMap<_, _>>(),
            hinted: hinted.into_iter().map(|c| CONSTRUCTS[c].to_string()).collect::<BTreeSet<_>>(),
            timestamp: None,
        })
}

fn arb_events() -> impl Strategy<Value = Vec<ExerciseEvent>> {
    prop::collection::vec(arb_event(5), 0..60)
}

proptest! {
    #[test]
    fn table_conserves_event_evidence(events in arb_events()) {
        let table = accumulate_performance(&events).unwrap();
        let (mut credits, mut penalties) = (0u32, 0u32);
        for ev in &events {
            for c in CONSTRUCTS {
                let (cr, pe) = ev.evidence(c);
                credits += cr;
                penalties += pe;
            }
        }
        let sum_c: u32 = table.iter().map(|(_, _, e)| e.credits).sum();
        let sum_p: u32 = table.iter().map(|(_, _, e)| e.penalties).sum();
        prop_assert_eq!((sum_c, sum_p), (credits, penalties));
        for (_, _, e) in table.iter() {
            let r = e.rate().unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(e.credits <= e.total());
        }
    }

    #[test]
    fn event_order_is_irrelevant(events in arb_events(), rot in 0usize..60) {
        let mut shuffled = events.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        prop_assert_eq!(accumulate_performance(&events).unwrap(), accumulate_performance(&shuffled).unwrap());
    }

    #[test]
    fn stricter_filters_never_add_data(events in arb_events(), e1 in 1usize..6, de in 0usize..4, c1 in 1usize..4, dc in 0usize..3) {
        let table = accumulate_performance(&events).unwrap();
        let loose = build_construct_responses(&table, &events, &FilterConfig::new(e1, c1));
        let strict = build_construct_responses(&table, &events, &FilterConfig::new(e1 + de, c1 + dc));
        match (loose, strict) {
            (Ok(l), Ok(s)) => {
                prop_assert!(s.students.iter().all(|x| l.students.contains(x)));
                prop_assert!(s.observations.len() <= l.observations.len());
                let trials = |r: &irtcat::exercise::ConstructResponses| r.observations.iter().map(|o| o.trials).sum::<u32>();
                prop_assert!(trials(&s) <= trials(&l));
                for (j, g) in s.guess.iter().enumerate() {
                    prop_assert!((0.0..=0.25).contains(g), "construct {} guess {}", s.constructs[j], g);
                }
            }
            (Err(_), strict) => prop_assert!(strict.is_err()),
            (Ok(_), Err(_)) => {}
        }
    }
}
