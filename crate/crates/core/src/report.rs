//! Report files written by a run.
//!
//! `tally.csv`: `counter,count,acquisition_s,rate_per_s`, one row per
//! counter in the order singles, pairs, triples. Counter names look like
//! `singles:A'`, `pairs:A'B''`, `triples:A'A''B'`.
//!
//! `analysis.csv`: `quantity,observed,predicted,z_score`. Count rows are
//! named `count:<counter>`; correlation rows are `g2_cross`, `g2_same`,
//! `bunching_fraction` and `same_side_pair_fraction`. Empty cells mean the
//! value is not defined.
//!
//! `run.json`: version, effective configuration, counts, reference-table
//! rates, run statistics, correlation summary and prediction warnings.

use serde::Serialize;

use crate::coincidence::{Counter, CounterSet, TallyTable};
use crate::config::ExperimentConfig;
use crate::experiment::{AnalysisRow, RunStats, Simulation, VERSION};
use crate::stats::{CorrelationResult, RatePrediction};

pub const TALLY_FILE: &str = "tally.csv";
pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const METADATA_FILE: &str = "run.json";

pub const TALLY_HEADER: &str = "counter,count,acquisition_s,rate_per_s";
pub const ANALYSIS_HEADER: &str = "quantity,observed,predicted,z_score";

pub fn tally_csv(tally: &TallyTable) -> String {
    let mut out = format!("{TALLY_HEADER}\n");
    for (counter, count) in tally.counts.iter() {
        out.push_str(&format!(
            "{},{count},{},{}\n",
            counter.name(),
            tally.acquisition_s,
            tally.rate(counter)
        ));
    }
    out
}

/// Reads a tally CSV back. Metadata is not part of the file and comes back
/// empty.
pub fn parse_tally_csv(text: &str) -> Result<TallyTable, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TALLY_HEADER) {
        return Err(format!("expected header '{TALLY_HEADER}'"));
    }
    let mut counts = CounterSet::<u64>::default();
    let mut seen = CounterSet::<bool>::default();
    let mut acquisition = None;
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        let [name, count, acq, _rate] = fields[..] else {
            return Err(format!("line {row}: expected 4 fields"));
        };
        let counter = Counter::from_name(name)
            .ok_or_else(|| format!("line {row}: unknown counter '{name}'"))?;
        let count: u64 = count
            .parse()
            .map_err(|e| format!("line {row}: count: {e}"))?;
        let acq: f64 = acq
            .parse()
            .map_err(|e| format!("line {row}: acquisition_s: {e}"))?;
        if acquisition.is_some_and(|a| a != acq) {
            return Err(format!("line {row}: inconsistent acquisition_s"));
        }
        acquisition = Some(acq);
        let (value, flag) = match counter {
            Counter::Single(d) => (&mut counts.singles[d.index()], &mut seen.singles[d.index()]),
            Counter::Pair(p) => (&mut counts.pairs[p.index()], &mut seen.pairs[p.index()]),
            Counter::Triple(t) => {
                let k = crate::coincidence::DetectorTriple::ALL
                    .iter()
                    .position(|x| *x == t)
                    .expect("known triple");
                (&mut counts.triples[k], &mut seen.triples[k])
            }
        };
        if *flag {
            return Err(format!("line {row}: duplicate counter '{name}'"));
        }
        *value = count;
        *flag = true;
    }
    if let Some((missing, _)) = seen.iter().find(|(_, s)| !s) {
        return Err(format!("missing counter '{}'", missing.name()));
    }
    let mut tally = TallyTable::empty(acquisition.unwrap_or(0.0));
    tally.counts = counts;
    Ok(tally)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn analysis_csv(rows: &[AnalysisRow]) -> String {
    let mut out = format!("{ANALYSIS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.quantity,
            r.observed,
            cell(r.predicted),
            cell(r.z_score)
        ));
    }
    out
}

pub fn parse_analysis_csv(text: &str) -> Result<Vec<AnalysisRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(ANALYSIS_HEADER) {
        return Err(format!("expected header '{ANALYSIS_HEADER}'"));
    }
    let optional = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{s}: {e}"))
        }
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let [quantity, observed, predicted, z] = fields[..] else {
                return Err(format!("expected 4 fields in '{line}'"));
            };
            Ok(AnalysisRow {
                quantity: quantity.to_string(),
                observed: observed.parse().map_err(|e| format!("{observed}: {e}"))?,
                predicted: optional(predicted)?,
                z_score: optional(z)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct CounterEntry {
    counter: String,
    count: u64,
    rate_per_s: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    version: &'static str,
    model: &'a str,
    seed: u64,
    config: std::collections::BTreeMap<String, String>,
    acquisition_s: f64,
    counters: Vec<CounterEntry>,
    table1_counters: Vec<String>,
    run_stats: &'a RunStats,
    correlation: Option<&'a CorrelationResult>,
    prediction_warnings: &'a [String],
}

pub fn run_metadata(
    cfg: &ExperimentConfig,
    simulation: &Simulation,
    correlation: Option<&CorrelationResult>,
    prediction: &RatePrediction,
) -> String {
    let tally = &simulation.tally;
    let meta = RunMetadata {
        version: VERSION,
        model: cfg.model.name(),
        seed: cfg.seed,
        config: cfg.result_echo(),
        acquisition_s: tally.acquisition_s,
        counters: tally
            .counts
            .iter()
            .map(|(c, count)| CounterEntry {
                counter: c.name(),
                count,
                rate_per_s: tally.rate(c),
            })
            .collect(),
        table1_counters: Counter::all()
            .filter(|c| c.in_table1())
            .map(Counter::name)
            .collect(),
        run_stats: &simulation.stats,
        correlation,
        prediction_warnings: &prediction.warnings,
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    text
}
