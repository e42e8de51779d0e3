use std::collections::HashMap;
use std::io::Write;

use irtcat::calibration::{calibrate_bank_from, CalibrationConfig};
use irtcat::exercise::synth::{generate_cohort, CohortSpec};
use irtcat::exercise::{
    accumulate_performance, build_construct_responses, calibrate_constructs, run_filter_grid,
};
use irtcat::io;
use irtcat::irt::{ItemBank, ItemParams};
use irtcat::simulator::synth::{
    normal_learners, random_template, synth_exhaustive_logs, synth_item_levels, synth_responses, BankSpec,
};
use irtcat::simulator::{
    group_sessions, run_artificial_grid, run_batch, run_real_replay, run_slip_exploration_sweep, run_termination_sweep,
    slip_exploration_grid, BatchSettings, MetricsRow, ReplayMode, TermSweepSettings,
};
use irtcat::stats::mean;

use crate::config::{BatchConfig, ExerciseConfig, GridConfig, ReplayConfig, SlipSweepConfig, SynthResponsesConfig};
use crate::{CliError, Command, Ctx, ExerciseCommand, SimulateCommand, SynthCommand};

type Deferred = Option<CliError>;

pub(crate) fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<Deferred, CliError> {
    match cmd {
        Command::Calibrate(args) => calibrate(ctx, &args.responses, args.init_bank.as_deref()),
        Command::Simulate(s) => simulate(ctx, s).map(|_| None),
        Command::Exercise(e) => exercise(ctx, e).map(|_| None),
        Command::Synth(s) => synth(ctx, s).map(|_| None),
        Command::Verify { .. } => unreachable!("verify is handled before dispatch"),
    }
}

fn read_bank(ctx: &mut Ctx, path: &std::path::Path) -> Result<ItemBank, CliError> {
    let bytes = ctx.input(path)?;
    Ok(io::read_bank(&bytes[..])?)
}

fn bank_header(ctx: &Ctx, fields: &[(&str, String)]) -> Vec<(String, String)> {
    let mut out = vec![("seed".to_string(), ctx.seed.to_string())];
    out.extend(fields.iter().map(|(k, v)| (k.to_string(), v.clone())));
    out
}

/// Writes `# key=value` lines that the readers skip as comments.
fn comment_header<W: Write>(w: &mut W, header: &[(String, String)]) -> Result<(), CliError> {
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn calibrate(ctx: &mut Ctx, responses: &std::path::Path, init: Option<&std::path::Path>) -> Result<Deferred, CliError> {
    let cfg: CalibrationConfig = ctx.load()?;
    let records = io::read_responses(&ctx.input(responses)?[..])?;
    let init = init.map(|p| read_bank(ctx, p)).transpose()?;
    let report = calibrate_bank_from(&records, &cfg, init.as_ref())?;
    let header = bank_header(
        ctx,
        &[
            ("iterations", report.iterations.to_string()),
            ("converged", report.converged.to_string()),
            ("final_change", report.final_change.to_string()),
        ],
    );
    ctx.output("bank.csv", |w| Ok(io::write_bank(w, &report.bank, &header)?))?;
    ctx.output("abilities.csv", |w| Ok(io::write_abilities(w, &report.abilities)?))?;
    ctx.say(format!(
        "calibrated {} items from {} learners in {} iterations (change {:.3e}, {} degenerate)",
        report.bank.len(),
        report.abilities.len(),
        report.iterations,
        report.final_change,
        report.degenerate_items.len()
    ));
    if report.converged {
        Ok(None)
    } else {
        Ok(Some(CliError::Convergence(format!(
            "no convergence after {} iterations (last change {:.3e} >= tol {:.1e}); outputs written",
            report.iterations, report.final_change, cfg.convergence_tol
        ))))
    }
}

fn print_rows(ctx: &Ctx, rows: &[MetricsRow]) {
    for r in rows {
        let m = &r.metrics;
        ctx.say(format!(
            "{:<24} len {:6.1} ± {:5.1}  mae {:.3}  sd_err {:.3}  forced {:.3}",
            r.setting, m.mean_iterations, m.sd_iterations, m.mae, m.sd_error, m.forced_stop_fraction
        ));
    }
}

fn simulate(ctx: &mut Ctx, cmd: &SimulateCommand) -> Result<(), CliError> {
    let seed = ctx.seed;
    match cmd {
        SimulateCommand::Grid(b) => {
            let cfg: GridConfig = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let traces = run_artificial_grid(&bank, &cfg.levels, cfg.per_level, &cfg.engine, cfg.slip, seed)?;
            ctx.output("traces.csv", |w| Ok(io::write_grid_traces(w, &bank, &traces)?))?;
            ctx.output("summary.csv", |w| Ok(io::write_grid_summary(w, &traces)?))?;
            let errs: Vec<f64> = traces.iter().map(|t| (t.result.ability.theta - t.theta_true).abs()).collect();
            ctx.say(format!("{} traces, mean |error| at stop {:.3}", traces.len(), mean(&errs)));
        }
        SimulateCommand::Batch(b) => {
            let cfg: BatchConfig = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let settings = BatchSettings {
                slip: cfg.slip,
                engine: cfg.engine.clone(),
                n_sessions: cfg.n_sessions,
                theta_range: cfg.theta_range,
            };
            let outcome = run_batch(&bank, &settings, seed)?;
            let rows: Vec<MetricsRow> = if outcome.sessions.is_empty() {
                Vec::new()
            } else {
                vec![MetricsRow {
                    setting: cfg.engine.criterion.rule.label(),
                    metrics: outcome.metrics,
                }]
            };
            ctx.output("metrics.csv", |w| Ok(io::write_metrics(w, &rows)?))?;
            ctx.output("sessions.csv", |w| Ok(io::write_sessions(w, &outcome.sessions)?))?;
            print_rows(ctx, &rows);
        }
        SimulateCommand::SlipSweep(b) => {
            let cfg: SlipSweepConfig = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let settings = cfg
                .settings
                .clone()
                .unwrap_or_else(|| slip_exploration_grid(cfg.criterion, cfg.slip_rate, &cfg.alphas, &cfg.ranges));
            let rows = run_slip_exploration_sweep(&bank, &settings, cfg.n_sessions, cfg.theta_range, seed)?;
            ctx.output("metrics.csv", |w| Ok(io::write_metrics(w, &rows)?))?;
            print_rows(ctx, &rows);
        }
        SimulateCommand::TermSweep { bank: b, kind } => {
            let cfg: TermSweepSettings = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let rows = run_termination_sweep(&bank, *kind, &cfg, seed)?;
            ctx.output("metrics.csv", |w| Ok(io::write_metrics(w, &rows)?))?;
            print_rows(ctx, &rows);
        }
        SimulateCommand::Replay {
            bank: b,
            responses,
            mode,
            item_levels,
            truth,
        } => {
            let cfg: ReplayConfig = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let records = io::read_responses(&ctx.input(responses)?[..])?;
            let levels = match item_levels {
                Some(p) => Some(io::read_levels(&ctx.input(p)?[..], "item_id")?),
                None if *mode == ReplayMode::ManualDifficulty => {
                    return Err(CliError::Validation("manual-difficulty mode needs --item-levels".into()))
                }
                None => None,
            };
            let truth = truth.as_ref().map(|p| ctx.input(p).and_then(|b| Ok(io::read_truth(&b[..])?))).transpose()?;
            let sessions = group_sessions(&records);
            let out = run_real_replay(&bank, &sessions, *mode, &cfg.engine, levels.as_ref(), seed)?;
            ctx.output("replay.csv", |w| Ok(io::write_replay(w, &out, truth.as_ref())?))?;
            let mut msg = format!("{} sessions replayed, mean length {:.1}", out.len(), mean(&out.iter().map(|o| o.length as f64).collect::<Vec<_>>()));
            if let Some(t) = &truth {
                let errs: Vec<f64> = out.iter().filter_map(|o| t.get(&o.learner_id).map(|x| (o.ability.theta - x).abs())).collect();
                msg.push_str(&format!(", mae {:.3}", mean(&errs)));
            }
            ctx.say(msg);
        }
    }
    Ok(())
}

fn exercise(ctx: &mut Ctx, cmd: &ExerciseCommand) -> Result<(), CliError> {
    let cfg: ExerciseConfig = ctx.load()?;
    match cmd {
        ExerciseCommand::Ingest(e) => {
            let bytes = ctx.input(&e.events)?;
            if bytes.iter().all(u8::is_ascii_whitespace) {
                return Err(CliError::Validation("insufficient data: the event file is empty".into()));
            }
            let events = io::read_events(&bytes[..])?;
            let table = accumulate_performance(&events)?;
            if table.is_empty() {
                return Err(CliError::Validation("insufficient data: the event file has no events".into()));
            }
            ctx.output("performance.csv", |w| Ok(io::write_performance(w, &table)?))?;
            ctx.say(format!("{} events, {} student-construct cells", events.len(), table.len()));
        }
        ExerciseCommand::Fit(e) => {
            let events = io::read_events(&ctx.input(&e.events)?[..])?;
            let table = accumulate_performance(&events)?;
            let responses = build_construct_responses(&table, &events, &cfg.filter)?;
            let fit = calibrate_constructs(&responses, &cfg.calibration)?;
            let header = bank_header(ctx, &[("filter", cfg.filter.label()), ("iterations", fit.iterations.to_string())]);
            ctx.output("constructs.csv", |w| Ok(io::write_bank(w, &fit.bank, &header)?))?;
            ctx.output("abilities.csv", |w| Ok(io::write_abilities(w, &fit.abilities)?))?;
            ctx.say(format!(
                "{} students, {} constructs, {} iterations{}",
                fit.abilities.len(),
                fit.bank.len(),
                fit.iterations,
                if fit.converged { "" } else { " (not converged)" }
            ));
        }
        ExerciseCommand::Grid { events: e, labels } => {
            let events = io::read_events(&ctx.input(&e.events)?[..])?;
            let labels = io::read_levels(&ctx.input(labels)?[..], "student_id")?;
            let rows = run_filter_grid(&events, &labels, &cfg.grid, &cfg.calibration)?;
            ctx.output("grid.csv", |w| Ok(io::write_grid_report(w, &rows)?))?;
            for r in &rows {
                let rho = r.report.as_ref().and_then(|x| x.rho).map_or("-".to_string(), |x| format!("{x:.3}"));
                ctx.say(format!(
                    "{:<16} train {:5} eval {:4} rho {rho}",
                    r.filter.label(),
                    r.n_students_train,
                    r.n_students_eval
                ));
            }
        }
    }
    Ok(())
}

fn synth(ctx: &mut Ctx, cmd: &SynthCommand) -> Result<(), CliError> {
    let seed = ctx.seed;
    match cmd {
        SynthCommand::Bank => {
            let spec: BankSpec = ctx.load()?;
            let bank = spec.generate(seed)?;
            let header = bank_header(
                ctx,
                &[
                    ("n_items", spec.n_items.to_string()),
                    ("log_a_sd", spec.log_a_sd.to_string()),
                    ("b_sd", spec.b_sd.to_string()),
                    ("b_min", spec.b_min.to_string()),
                    ("b_max", spec.b_max.to_string()),
                    ("c", spec.c.to_string()),
                ],
            );
            ctx.output("bank.csv", |w| Ok(io::write_bank(w, &bank, &header)?))?;
            ctx.say(format!("{} items", bank.len()));
        }
        SynthCommand::Responses(b) => {
            let cfg: SynthResponsesConfig = ctx.load()?;
            let bank = read_bank(ctx, &b.bank)?;
            let spec = &cfg.responses;
            let (records, truth) = if cfg.exhaustive {
                if spec.per_learner > bank.len() {
                    return Err(CliError::Validation(format!("per_learner {} exceeds bank size {}", spec.per_learner, bank.len())));
                }
                let learners = normal_learners(spec.n_learners, spec.theta_sd, seed)?;
                let template = random_template(&bank, spec.per_learner, seed);
                (synth_exhaustive_logs(&bank, &template, &learners, seed), learners)
            } else {
                synth_responses(&bank, spec, seed)?
            };
            let truth: Vec<(String, f64)> = truth.into_iter().map(|t| (t.learner_id, t.theta)).collect();
            let levels: HashMap<String, usize> = synth_item_levels(&bank, cfg.item_level_noise, seed)?.into_iter().collect();
            let header = bank_header(
                ctx,
                &[
                    ("n_learners", spec.n_learners.to_string()),
                    ("per_learner", spec.per_learner.to_string()),
                    ("theta_sd", spec.theta_sd.to_string()),
                    ("exhaustive", cfg.exhaustive.to_string()),
                    ("item_level_noise", cfg.item_level_noise.to_string()),
                ],
            );
            ctx.output("responses.csv", |w| {
                comment_header(w, &header)?;
                Ok(io::write_responses(w, &records)?)
            })?;
            ctx.output("truth.csv", |w| Ok(io::write_truth(w, &truth)?))?;
            ctx.output("item_levels.csv", |w| Ok(io::write_levels(w, "item_id", &levels)?))?;
            ctx.say(format!("{} responses from {} learners", records.len(), truth.len()));
        }
        SynthCommand::Exercises => {
            let spec: CohortSpec = ctx.load()?;
            let cohort = generate_cohort(&spec, seed)?;
            let constructs = ItemBank::new(cohort.constructs.iter().map(|c| ItemParams { construct_id: Some(c.item_id.clone()), ..c.clone() }).collect())
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let spec_json = serde_json::to_value(&spec)?;
            let fields: Vec<(&str, String)> = spec_json
                .as_object()
                .map(|m| m.iter().map(|(k, v)| (k.as_str(), v.to_string())).collect())
                .unwrap_or_default();
            let header = bank_header(ctx, &fields);
            ctx.output("events.csv", |w| {
                comment_header(w, &header)?;
                Ok(io::write_events(w, &cohort.events)?)
            })?;
            ctx.output("labels.csv", |w| Ok(io::write_levels(w, "student_id", &cohort.labels)?))?;
            ctx.output("truth.csv", |w| Ok(io::write_truth(w, &cohort.truth)?))?;
            ctx.output("constructs.csv", |w| Ok(io::write_bank(w, &constructs, &header)?))?;
            ctx.say(format!("{} events from {} students", cohort.events.len(), cohort.truth.len()));
        }
    }
    Ok(())
}
