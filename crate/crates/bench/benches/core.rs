use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use irtcat::calibration::{calibrate_bank_from, estimate_ability_eap, CalibrationConfig, QuadratureGrid};
use irtcat::engine::{EngineConfig, TerminationCriterion};
use irtcat::irt::{item_information, prob_correct};
use irtcat::simulator::synth::{synth_responses, BankSpec, ResponsesSpec};
use irtcat::simulator::{run_simulation, SimulationConfig, SlipSchedule};

fn model(c: &mut Criterion) {
    let bank = BankSpec::default().generate(7).unwrap();
    c.bench_function("prob_and_info_3000_items", |b| {
        b.iter(|| {
            bank.items()
                .iter()
                .map(|it| prob_correct(black_box(0.3), it) + item_information(black_box(0.3), it))
                .sum::<f64>()
        })
    });
    let grid = QuadratureGrid::default();
    let answers: Vec<_> = bank.items().iter().take(60).enumerate().map(|(i, it)| (it, i % 3 != 0)).collect();
    c.bench_function("eap_60_responses", |b| {
        b.iter(|| estimate_ability_eap(black_box(answers.iter().map(|(it, r)| (*it, *r))), &grid).unwrap())
    });
}

fn session(c: &mut Criterion) {
    let bank = BankSpec::default().generate(7).unwrap();
    let mut seed = 0u64;
    c.bench_function("session_early_stop", |b| {
        b.iter(|| {
            seed += 1;
            let cfg = SimulationConfig {
                theta_true: 0.5,
                slip: SlipSchedule::none(),
                engine: EngineConfig::new(TerminationCriterion::early_stop(10, 0.05)),
                seed,
            };
            run_simulation(&cfg, &bank, 0).unwrap().length
        })
    });
}

fn calibration(c: &mut Criterion) {
    let bank = BankSpec { n_items: 100, ..BankSpec::default() }.generate(7).unwrap();
    let spec = ResponsesSpec { n_learners: 300, per_learner: 50, theta_sd: 1.0 };
    let (records, _) = synth_responses(&bank, &spec, 7).unwrap();
    let cfg = CalibrationConfig::default();
    let mut group = c.benchmark_group("calibration");
    group.sample_size(10);
    group.bench_function("100_items_300_learners", |b| b.iter(|| calibrate_bank_from(&records, &cfg, None).unwrap().iterations));
    group.finish();
}

criterion_group!(benches, model, session, calibration);
criterion_main!(benches);
