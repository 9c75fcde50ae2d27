//! End-to-end runs: source, routing, detectors and coincidence counting.
//!
//! Chunks of source slots are simulated in parallel; each chunk draws only
//! from its own substreams. A single sequential stage then merges chunk
//! outputs in time order, applies dead time and feeds the coincidence
//! counter, so results do not depend on the worker count.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coincidence::{CoincidenceCounter, CountError, Counter, TallyMetadata, TallyTable};
use crate::config::ExperimentConfig;
use crate::detector::{
    candidate_clicks, dark_events, split_to_detectors, DeadTimeFilter, DetectionEvent,
    DetectorError,
};
use crate::events::{DumpWriter, EventSink};
use crate::report;
use crate::rng::{substream, Purpose};
use crate::routing::{route_coherent, RoutingModel};
use crate::source::{chunk_count, chunk_range, ChunkSlots, SourceError};
use crate::stats::{
    correlation_from_counts, g2_zero, poisson_z, predicted_rates, trials_per_second,
    CorrelationResult, PredictionOrder, RatePrediction, StatsError,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Chunks simulated per parallel batch.
const BATCH_CHUNKS: u64 = 16;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("model comparison needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

fn io_error(context: impl Into<String>) -> impl FnOnce(io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

/// Bookkeeping for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub slots: u64,
    pub occupied_slots: u64,
    pub photons: u64,
    /// Occupied slots routed by the binomial fallback of the phase-basis
    /// model (three or more photons).
    pub fallback_slots: u64,
    pub photon_clicks: u64,
    pub dark_clicks: u64,
    pub dead_time_suppressed: u64,
    pub recorded_events: u64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub tally: TallyTable,
    pub stats: RunStats,
}

struct ChunkOutput {
    events: Vec<DetectionEvent>,
    stats: RunStats,
}

fn simulate_chunk(
    cfg: &ExperimentConfig,
    slot_count: u64,
    chunk: u64,
    horizon_ps: u64,
) -> ChunkOutput {
    let source = cfg.source();
    let detector = cfg.detector();
    let mut routing_rng = substream(cfg.seed, chunk, Purpose::Routing);
    let mut detection_rng = substream(cfg.seed, chunk, Purpose::Detection);
    let mut dark_rng = substream(cfg.seed, chunk, Purpose::Dark);
    let mut stats = RunStats::default();
    let mut events = Vec::new();

    for slot in ChunkSlots::new(&source, slot_count, chunk) {
        stats.occupied_slots += 1;
        stats.photons += slot.n_photons as u64;
        if cfg.model.uses_fallback(slot.n_photons) {
            stats.fallback_slots += 1;
        }
        let ports = route_coherent(
            cfg.model,
            slot.n_photons,
            slot.global_phase,
            &mut routing_rng,
        );
        let counts = split_to_detectors(ports, &mut detection_rng);
        candidate_clicks(
            &detector,
            &counts,
            source.slot_time_ps(slot.index),
            horizon_ps,
            &mut detection_rng,
            &mut events,
        );
    }
    stats.photon_clicks = events.len() as u64;

    let range = chunk_range(slot_count, chunk);
    let start = source.slot_time_ps(range.start);
    let end = if range.end == slot_count {
        horizon_ps
    } else {
        source.slot_time_ps(range.end)
    };
    let dark = dark_events(&detector, start..end, &mut dark_rng);
    stats.dark_clicks = dark.len() as u64;
    events.extend(dark);
    events.sort_unstable();
    ChunkOutput { events, stats }
}

fn add_stats(total: &mut RunStats, part: &RunStats) {
    total.occupied_slots += part.occupied_slots;
    total.photons += part.photons;
    total.fallback_slots += part.fallback_slots;
    total.photon_clicks += part.photon_clicks;
    total.dark_clicks += part.dark_clicks;
}

/// Time-orders chunk outputs, applies dead time, counts coincidences.
struct Emitter<'a> {
    filter: DeadTimeFilter,
    counter: CoincidenceCounter,
    carry: Vec<DetectionEvent>,
    sink: Option<&'a mut dyn EventSink>,
    recorded: u64,
}

impl Emitter<'_> {
    fn emit(&mut self, event: &DetectionEvent) -> Result<(), RunError> {
        if !self.filter.admit(event) {
            return Ok(());
        }
        self.counter.push(event)?;
        self.recorded += 1;
        if let Some(sink) = self.sink.as_deref_mut() {
            sink.record(event).map_err(io_error("writing event dump"))?;
        }
        Ok(())
    }

    /// Adds a sorted chunk and releases everything before `safe_before`,
    /// which no later chunk can precede.
    fn absorb(&mut self, events: Vec<DetectionEvent>, safe_before: u64) -> Result<(), RunError> {
        let mut merged = std::mem::take(&mut self.carry);
        merged.extend(events);
        merged.sort_unstable();
        let split = merged.partition_point(|e| e.timestamp_ps < safe_before);
        self.carry = merged.split_off(split);
        for e in &merged {
            self.emit(e)?;
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), RunError> {
        let rest = std::mem::take(&mut self.carry);
        for e in &rest {
            self.emit(e)?;
        }
        Ok(())
    }
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder.build().map_err(|e| RunError::Pool(e.to_string()))
}

/// Runs the full pipeline. Recorded (post-dead-time) events go to `sink`
/// when one is given.
pub fn simulate(
    cfg: &ExperimentConfig,
    sink: Option<&mut dyn EventSink>,
) -> Result<Simulation, RunError> {
    let source = cfg.source();
    source.validate()?;
    let detector = cfg.detector();
    detector.validate()?;
    cfg.ccu().validate()?;
    let slot_count = source.slot_count()?;
    let horizon_ps = source.duration_ps();
    let jitter_bound = detector.max_jitter_ps();
    let chunks = chunk_count(slot_count);
    let pool = worker_pool(cfg.workers)?;

    let mut emitter = Emitter {
        filter: DeadTimeFilter::new(detector.dead_time_ps),
        counter: CoincidenceCounter::new(cfg.window_ps),
        carry: Vec::new(),
        sink,
        recorded: 0,
    };
    let mut stats = RunStats {
        slots: slot_count,
        ..RunStats::default()
    };
    let mut batch_start = 0;
    while batch_start < chunks {
        let batch_end = (batch_start + BATCH_CHUNKS).min(chunks);
        let outputs: Vec<ChunkOutput> = pool.install(|| {
            (batch_start..batch_end)
                .into_par_iter()
                .map(|chunk| simulate_chunk(cfg, slot_count, chunk, horizon_ps))
                .collect()
        });
        for (chunk, output) in (batch_start..batch_end).zip(outputs) {
            add_stats(&mut stats, &output.stats);
            let next_start = source.slot_time_ps(chunk_range(slot_count, chunk + 1).start);
            emitter.absorb(output.events, next_start.saturating_sub(jitter_bound))?;
        }
        batch_start = batch_end;
    }
    emitter.drain()?;
    if let Some(sink) = emitter.sink.as_deref_mut() {
        sink.finish().map_err(io_error("writing event dump"))?;
    }
    stats.dead_time_suppressed = emitter.filter.suppressed();
    stats.recorded_events = emitter.recorded;

    let mut tally = emitter.counter.into_tally(cfg.acquisition_s);
    tally.metadata = TallyMetadata {
        model: Some(cfg.model.name().to_string()),
        seed: Some(cfg.seed),
        mean_photon_number: Some(cfg.mean_photon_number),
        config: cfg.result_echo(),
    };
    Ok(Simulation { tally, stats })
}

/// Observed and predicted value of one analysed quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub quantity: String,
    pub observed: f64,
    pub predicted: Option<f64>,
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub simulation: Simulation,
    pub correlation: Option<CorrelationResult>,
    pub prediction: RatePrediction,
    pub analysis: Vec<AnalysisRow>,
    pub files: Vec<PathBuf>,
}

/// Compares simulated counts to the closed-form prediction and adds the
/// correlation summary.
pub fn analyse(
    cfg: &ExperimentConfig,
    tally: &TallyTable,
) -> Result<(Option<CorrelationResult>, RatePrediction, Vec<AnalysisRow>), RunError> {
    let prediction = predicted_rates(&cfg.rate_inputs(), PredictionOrder::Exact)?;
    let t = tally.acquisition_s;
    let mut rows: Vec<AnalysisRow> = Counter::all()
        .map(|c| {
            let observed = tally.count(c) as f64;
            let expected = prediction.rates.get(c) * t;
            AnalysisRow {
                quantity: format!("count:{}", c.name()),
                observed,
                predicted: Some(expected),
                z_score: (expected > 0.0).then(|| (observed - expected) / expected.sqrt()),
            }
        })
        .collect();

    let correlation = g2_zero(tally, cfg.slot_rate, &cfg.ccu()).ok();
    let trials = t * trials_per_second(cfg.slot_rate, cfg.window_ps);
    let predicted_corr = correlation_from_counts(&prediction.rates.map(|r| r * t), trials).ok();
    if let Some(c) = correlation {
        let predicted = predicted_corr.map(|p| p.quantities());
        for (i, (name, observed)) in c.quantities().into_iter().enumerate() {
            let predicted = predicted.and_then(|p| p[i].1);
            if let Some(observed) = observed {
                rows.push(AnalysisRow {
                    quantity: name.to_string(),
                    observed,
                    predicted,
                    z_score: None,
                });
            }
        }
    }
    Ok((correlation, prediction, rows))
}

/// Simulates, analyses and writes the report files into `cfg.output_dir`
/// (if set), plus an event dump to `cfg.events_path` (if set).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let mut files = Vec::new();
    let simulation = match &cfg.events_path {
        Some(path) => {
            let file =
                File::create(path).map_err(io_error(format!("creating {}", path.display())))?;
            let mut writer = DumpWriter::new(BufWriter::new(file), cfg.events_format);
            let sim = simulate(cfg, Some(&mut writer))?;
            files.push(path.clone());
            sim
        }
        None => simulate(cfg, None)?,
    };
    let (correlation, prediction, analysis) = analyse(cfg, &simulation.tally)?;
    if let Some(dir) = &cfg.output_dir {
        files.extend(write_reports(
            dir,
            cfg,
            &simulation,
            correlation.as_ref(),
            &prediction,
            &analysis,
        )?);
    }
    Ok(RunReport {
        simulation,
        correlation,
        prediction,
        analysis,
        files,
    })
}

fn write_file(path: PathBuf, contents: String) -> Result<PathBuf, RunError> {
    fs::write(&path, contents).map_err(io_error(format!("writing {}", path.display())))?;
    Ok(path)
}

pub fn write_reports(
    dir: &Path,
    cfg: &ExperimentConfig,
    simulation: &Simulation,
    correlation: Option<&CorrelationResult>,
    prediction: &RatePrediction,
    analysis: &[AnalysisRow],
) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(io_error(format!("creating {}", dir.display())))?;
    let metadata = report::run_metadata(cfg, simulation, correlation, prediction);
    Ok(vec![
        write_file(
            dir.join(report::TALLY_FILE),
            report::tally_csv(&simulation.tally),
        )?,
        write_file(
            dir.join(report::ANALYSIS_FILE),
            report::analysis_csv(analysis),
        )?,
        write_file(dir.join(report::METADATA_FILE), metadata)?,
    ])
}

/// One model's result in a comparison.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: RoutingModel,
    pub simulation: Simulation,
    pub correlation: Option<CorrelationResult>,
}

/// Difference of one counter between two models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterDifference {
    pub counter: String,
    pub first: u64,
    pub second: u64,
    pub z_score: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ModelRun>,
}

impl Comparison {
    /// Per-counter z-scores between runs `i` and `j`.
    pub fn differences(&self, i: usize, j: usize) -> Vec<CounterDifference> {
        let (a, b) = (
            &self.runs[i].simulation.tally,
            &self.runs[j].simulation.tally,
        );
        Counter::all()
            .map(|c| CounterDifference {
                counter: c.name(),
                first: a.count(c),
                second: b.count(c),
                z_score: poisson_z(a.count(c) as f64, b.count(c) as f64),
            })
            .collect()
    }
}

/// Runs the same configuration and seed under each model. The source
/// substreams do not depend on the model, so every model sees the same
/// photon stream.
pub fn compare_models(
    cfg: &ExperimentConfig,
    models: &[RoutingModel],
) -> Result<Comparison, RunError> {
    if models.len() < 2 {
        return Err(RunError::TooFewModels(models.len()));
    }
    let runs = models
        .iter()
        .map(|&model| {
            let cfg = ExperimentConfig {
                model,
                events_path: None,
                ..cfg.clone()
            };
            let simulation = simulate(&cfg, None)?;
            let correlation = g2_zero(&simulation.tally, cfg.slot_rate, &cfg.ccu()).ok();
            Ok(ModelRun {
                model,
                simulation,
                correlation,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(Comparison { runs })
}
