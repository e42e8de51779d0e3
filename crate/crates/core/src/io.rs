//! Delimited-text formats for datasets, banks and reports.
//!
//! Floats are written with `Display`, which prints the shortest string that
//! parses back to the same value, so numeric round trips are exact.

use std::collections::HashMap;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Writer, WriterBuilder};
use thiserror::Error;

use crate::calibration::{ResponseRecord, CEFR_LABELS, CEFR_LEVELS};
use crate::engine::SessionResult;
use crate::exercise::{ExerciseEvent, FilterGridRow, PerformanceTable};
use crate::irt::{Ability, ItemBank, ItemParams, ModelError};
use crate::simulator::{GridTrace, MetricsRow, ReplayOutcome, SessionSummary};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(r)
}

fn writer<W: Write>(w: W) -> Writer<W> {
    WriterBuilder::new().from_writer(w)
}

/// Column positions by header name.
struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &StringRecord) -> Self {
        Self(headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect())
    }

    fn require(&self, name: &'static str) -> Result<usize, IoError> {
        self.0.get(name).copied().ok_or(IoError::MissingColumn(name))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field(rec: &StringRecord, idx: usize) -> Result<&str, IoError> {
    rec.get(idx).ok_or_else(|| IoError::Parse {
        line: line_of(rec),
        message: format!("expected at least {} fields", idx + 1),
    })
}

fn parse<T: std::str::FromStr>(rec: &StringRecord, idx: usize, what: &str) -> Result<T, IoError> {
    let raw = field(rec, idx)?;
    raw.parse().map_err(|_| IoError::Parse {
        line: line_of(rec),
        message: format!("invalid {what} {raw:?}"),
    })
}

fn parse_flag(rec: &StringRecord, idx: usize, what: &str) -> Result<bool, IoError> {
    match field(rec, idx)? {
        "1" => Ok(true),
        "0" => Ok(false),
        raw => Err(IoError::Parse {
            line: line_of(rec),
            message: format!("{what} must be 0 or 1, got {raw:?}"),
        }),
    }
}

fn optional_u64(rec: &StringRecord, idx: Option<usize>, what: &str) -> Result<Option<u64>, IoError> {
    match idx.and_then(|i| rec.get(i)) {
        None | Some("") => Ok(None),
        Some(_) => parse(rec, idx.unwrap(), what).map(Some),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Columns `learner_id,item_id,correct[,timestamp]`; `correct` is 0 or 1.
pub fn read_responses<R: Read>(r: R) -> Result<Vec<ResponseRecord>, IoError> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (l, i, c) = (cols.require("learner_id")?, cols.require("item_id")?, cols.require("correct")?);
    let ts = cols.optional("timestamp");
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(ResponseRecord {
            learner_id: field(&rec, l)?.to_string(),
            item_id: field(&rec, i)?.to_string(),
            correct: parse_flag(&rec, c, "correct")?,
            timestamp: optional_u64(&rec, ts, "timestamp")?,
        });
    }
    Ok(out)
}

pub fn write_responses<W: Write>(w: W, records: &[ResponseRecord]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["learner_id", "item_id", "correct", "timestamp"])?;
    for r in records {
        let ts = r.timestamp.map(|t| t.to_string()).unwrap_or_default();
        wtr.write_record([r.learner_id.as_str(), r.item_id.as_str(), flag(r.correct), ts.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `# key=value` header lines followed by the bank table.
pub fn write_bank<W: Write>(mut w: W, bank: &ItemBank, header: &[(String, String)]) -> Result<(), IoError> {
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    let mut wtr = writer(w);
    wtr.write_record(["item_id", "a", "b", "c", "construct_id", "response_count"])?;
    for it in bank.items() {
        wtr.write_record([
            it.item_id.clone(),
            it.a.to_string(),
            it.b.to_string(),
            it.c.to_string(),
            it.construct_id.clone().unwrap_or_default(),
            it.response_count.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a bank table; comment lines are skipped and every item is validated.
pub fn read_bank<R: Read>(r: R) -> Result<ItemBank, IoError> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (id, a, b, c) = (cols.require("item_id")?, cols.require("a")?, cols.require("b")?, cols.require("c")?);
    let (construct, count) = (cols.optional("construct_id"), cols.optional("response_count"));
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let item = ItemParams {
            item_id: field(&rec, id)?.to_string(),
            a: parse(&rec, a, "a")?,
            b: parse(&rec, b, "b")?,
            c: parse(&rec, c, "c")?,
            construct_id: construct.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()).map(str::to_string),
            response_count: optional_u64(&rec, count, "response_count")?.unwrap_or(0),
        };
        item.validate().map_err(|e| IoError::Parse {
            line: line_of(&rec),
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(ItemBank::new(items)?)
}

/// One row per administered item; `theta` and `sem` are the values after the response.
pub fn write_trace<W: Write>(w: W, bank: &ItemBank, result: &SessionResult) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["step", "item_id", "a", "b", "c", "correct", "counted", "theta", "sem", "phase"])?;
    for (step, e) in result.responses.iter().enumerate() {
        let it = bank.get(e.item);
        wtr.write_record([
            (step + 1).to_string(),
            it.item_id.clone(),
            it.a.to_string(),
            it.b.to_string(),
            it.c.to_string(),
            flag(e.correct).into(),
            flag(e.counted).into(),
            result.theta_trajectory[step + 1].to_string(),
            result.sem_trajectory[step + 1].to_string(),
            e.phase.as_str().into(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Every artificial-grid trace, with the starting estimate as step 0.
pub fn write_grid_traces<W: Write>(w: W, bank: &ItemBank, traces: &[GridTrace]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record([
        "level", "replicate", "theta_true", "seed", "converged_at", "step", "item_id", "correct", "counted", "theta", "sem",
    ])?;
    for t in traces {
        let r = &t.result;
        let conv = r.converged_at.map(|c| c.to_string()).unwrap_or_default();
        for step in 0..r.theta_trajectory.len() {
            let (item, correct, counted) = match step.checked_sub(1).map(|k| r.responses[k]) {
                Some(e) => (bank.get(e.item).item_id.clone(), flag(e.correct), flag(e.counted)),
                None => (String::new(), "", ""),
            };
            wtr.write_record([
                t.level.to_string(),
                t.replicate.to_string(),
                t.theta_true.to_string(),
                t.seed.to_string(),
                conv.clone(),
                step.to_string(),
                item,
                correct.into(),
                counted.into(),
                r.theta_trajectory[step].to_string(),
                r.sem_trajectory[step].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row per artificial-grid session: estimate at convergence and at the end of the trace.
pub fn write_grid_summary<W: Write>(w: W, traces: &[GridTrace]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["level", "replicate", "theta_true", "seed", "converged_at", "theta_at_stop", "final_theta", "reason"])?;
    for t in traces {
        let r = &t.result;
        wtr.write_record([
            t.level.to_string(),
            t.replicate.to_string(),
            t.theta_true.to_string(),
            t.seed.to_string(),
            r.converged_at.map(|c| c.to_string()).unwrap_or_default(),
            r.ability.theta.to_string(),
            r.final_theta().to_string(),
            r.reason.as_str().into(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record([
        "setting",
        "mean_iterations",
        "sd_iterations",
        "mae",
        "sd_error",
        "mean_signed_error",
        "forced_stop_fraction",
        "n_sessions",
    ])?;
    for r in rows {
        let m = &r.metrics;
        wtr.write_record([
            r.setting.clone(),
            m.mean_iterations.to_string(),
            m.sd_iterations.to_string(),
            m.mae.to_string(),
            m.sd_error.to_string(),
            m.mean_signed_error.to_string(),
            m.forced_stop_fraction.to_string(),
            m.n_sessions.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sessions<W: Write>(w: W, sessions: &[SessionSummary]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["index", "seed", "theta_true", "theta_hat", "length", "reason"])?;
    for s in sessions {
        wtr.write_record([
            s.index.to_string(),
            s.seed.to_string(),
            s.theta_true.to_string(),
            s.theta_hat.to_string(),
            s.length.to_string(),
            s.reason.as_str().into(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_abilities<W: Write>(w: W, abilities: &[(String, Ability)]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["learner_id", "theta", "standard_error", "n_responses"])?;
    for (id, a) in abilities {
        wtr.write_record([id.clone(), a.theta.to_string(), a.standard_error.to_string(), a.n_responses.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_replay<W: Write>(w: W, outcomes: &[ReplayOutcome], truth: Option<&HashMap<String, f64>>) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["learner_id", "theta", "standard_error", "length", "reason", "theta_true"])?;
    for o in outcomes {
        let t = truth.and_then(|m| m.get(&o.learner_id)).map(|t| t.to_string()).unwrap_or_default();
        wtr.write_record([
            o.learner_id.clone(),
            o.ability.theta.to_string(),
            o.ability.standard_error.to_string(),
            o.length.to_string(),
            o.reason.map_or("full_session", |r| r.as_str()).into(),
            t,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Columns `learner_id,theta`.
pub fn read_truth<R: Read>(r: R) -> Result<HashMap<String, f64>, IoError> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (id, theta) = (cols.require("learner_id")?, cols.require("theta")?);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.insert(field(&rec, id)?.to_string(), parse(&rec, theta, "theta")?);
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, truth: &[(String, f64)]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["learner_id", "theta"])?;
    for (id, t) in truth {
        wtr.write_record([id.clone(), t.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a CEFR level given either as a label (`B1`) or an index (`2`).
pub fn parse_level(raw: &str) -> Option<usize> {
    CEFR_LABELS
        .iter()
        .position(|l| l.eq_ignore_ascii_case(raw))
        .or_else(|| raw.parse().ok().filter(|&k: &usize| k < CEFR_LEVELS))
}

/// Columns `<id_column>,level`, level as label or index. Used for both
/// student labels and item labels.
pub fn read_levels<R: Read>(r: R, id_column: &'static str) -> Result<HashMap<String, usize>, IoError> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (id, level) = (cols.require(id_column)?, cols.require("level")?);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let raw = field(&rec, level)?;
        let k = parse_level(raw).ok_or_else(|| IoError::Parse {
            line: line_of(&rec),
            message: format!("unknown CEFR level {raw:?}"),
        })?;
        out.insert(field(&rec, id)?.to_string(), k);
    }
    Ok(out)
}

/// Writes levels as labels, sorted by id.
pub fn write_levels<W: Write>(w: W, id_column: &str, levels: &HashMap<String, usize>) -> Result<(), IoError> {
    let mut rows: Vec<_> = levels.iter().collect();
    rows.sort();
    let mut wtr = writer(w);
    wtr.write_record([id_column, "level"])?;
    for (id, k) in rows {
        wtr.write_record([id.as_str(), CEFR_LABELS[*k]])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Columns `student_id,exercise_id,type,outcomes,hinted,timestamp`. Outcomes
/// are space-separated `construct:0|1` pairs, hints space-separated ids.
pub fn read_events<R: Read>(r: R) -> Result<Vec<ExerciseEvent>, IoError> {
    let mut rdr = reader(r);
    let cols = Columns::new(rdr.headers()?);
    let (s, e, t, o) = (
        cols.require("student_id")?,
        cols.require("exercise_id")?,
        cols.require("type")?,
        cols.require("outcomes")?,
    );
    let (h, ts) = (cols.optional("hinted"), cols.optional("timestamp"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |message: String| IoError::Parse {
            line: line_of(&rec),
            message,
        };
        let mut outcomes = std::collections::BTreeMap::new();
        for pair in field(&rec, o)?.split_whitespace() {
            let (construct, v) = pair.rsplit_once(':').ok_or_else(|| bad(format!("outcome {pair:?} is not construct:0/1")))?;
            let v = match v {
                "1" => true,
                "0" => false,
                _ => return Err(bad(format!("outcome {pair:?} must end in :0 or :1"))),
            };
            if construct.is_empty() || outcomes.insert(construct.to_string(), v).is_some() {
                return Err(bad(format!("empty or repeated construct in {pair:?}")));
            }
        }
        if outcomes.is_empty() {
            return Err(bad("event has no construct outcomes".into()));
        }
        let ev = ExerciseEvent {
            student_id: field(&rec, s)?.to_string(),
            exercise_id: field(&rec, e)?.to_string(),
            exercise_type: field(&rec, t)?.parse().map_err(bad)?,
            outcomes,
            hinted: h.and_then(|i| rec.get(i)).unwrap_or("").split_whitespace().map(str::to_string).collect(),
            timestamp: optional_u64(&rec, ts, "timestamp")?,
        };
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events<W: Write>(w: W, events: &[ExerciseEvent]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["student_id", "exercise_id", "type", "outcomes", "hinted", "timestamp"])?;
    for ev in events {
        let outcomes: Vec<String> = ev.outcomes.iter().map(|(c, v)| format!("{c}:{}", flag(*v))).collect();
        let hinted: Vec<&str> = ev.hinted.iter().map(String::as_str).collect();
        wtr.write_record([
            ev.student_id.clone(),
            ev.exercise_id.clone(),
            ev.exercise_type.as_str().into(),
            outcomes.join(" "),
            hinted.join(" "),
            ev.timestamp.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_performance<W: Write>(w: W, table: &PerformanceTable) -> Result<(), IoError> {
    let mut wtr = writer(w);
    wtr.write_record(["student_id", "construct_id", "credits", "penalties", "rate"])?;
    for r in table.rows() {
        wtr.write_record([r.student_id, r.construct_id, r.credits.to_string(), r.penalties.to_string(), r.rate.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per filter cell with per-level five-number summaries; empty
/// fields mark missing values.
pub fn write_grid_report<W: Write>(w: W, rows: &[FilterGridRow]) -> Result<(), IoError> {
    let mut wtr = writer(w);
    let mut header: Vec<String> = ["cell", "min_exer", "min_constr", "n_students_train", "n_students_eval", "rho"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in CEFR_LABELS {
        for s in ["min", "q1", "median", "q3", "max"] {
            header.push(format!("{l}_{s}"));
        }
    }
    header.push("error".into());
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.filter.label(),
            r.filter.min_exer.to_string(),
            r.filter.min_constr.to_string(),
            r.n_students_train.to_string(),
            r.n_students_eval.to_string(),
            r.report.as_ref().and_then(|x| x.rho).map(|x| x.to_string()).unwrap_or_default(),
        ];
        for k in 0..CEFR_LEVELS {
            match r.report.as_ref().and_then(|x| x.levels[k]) {
                Some(f) => rec.extend([f.min, f.q1, f.median, f.q3, f.max].iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        rec.push(r.error.clone().unwrap_or_default());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
