use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use beamsplit::coincidence::{accumulate, CcuConfig, Counter};
use beamsplit::config::{parse_override, ConfigBuilder, ConfigError, ExperimentConfig};
use beamsplit::events::{load_streams, EventFormat};
use beamsplit::experiment::{compare_models, run_experiment, RunError};
use beamsplit::report;
use beamsplit::routing::RoutingModel;
use beamsplit::stats::{calibrate, predicted_rates, PredictionOrder, TABLE1_BLOCK1, TABLE1_BLOCK2};

/// Monte Carlo simulation of weak coherent light on a beam splitter.
#[derive(Parser)]
#[command(name = "beamsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write tally, analysis and metadata.
    Run(ConfigArgs),
    /// Run one configuration under several routing models with a shared seed.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated model names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "classical,phase-basis,bunching"
        )]
        models: Vec<String>,
    },
    /// Fit slot rate and efficiency to a reference block.
    Calibrate {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        block: u8,
        #[arg(long, default_value = "phase-basis")]
        model: String,
    },
    /// Closed-form rates for a configuration, without simulating.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Order::Exact)]
        order: Order,
    },
    /// Count coincidences in an event dump.
    Count {
        /// Event dump written by `run` with `events_path` set.
        events: PathBuf,
        #[arg(long, default_value = "binary")]
        format: String,
        #[arg(long, default_value_t = 5000)]
        window_ps: u64,
        /// Length of the recording in seconds.
        #[arg(long)]
        acquisition_s: f64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file in `key = value` format.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter preset (table1-block1, table1-block2).
    #[arg(long)]
    preset: Option<String>,
    /// Override one key, e.g. `--set seed=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Leading,
    Exact,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut builder = ConfigBuilder::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
        builder = builder.file(&text)?;
    }
    if let Some(preset) = &args.preset {
        builder = builder.preset(preset);
    }
    for arg in &args.overrides {
        let (key, value) = parse_override(arg)?;
        builder = builder.set(&key, value);
    }
    Ok(builder.build()?)
}

fn parse_models(names: &[String]) -> Result<Vec<RoutingModel>, Failure> {
    names
        .iter()
        .map(|n| {
            n.trim()
                .parse::<RoutingModel>()
                .map_err(|e| Failure::Config(e.to_string()))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            eprintln!(
                "simulating {} s of {} at mean photon number {} (seed {})",
                cfg.acquisition_s, cfg.model, cfg.mean_photon_number, cfg.seed
            );
            let report = run_experiment(&cfg)?;
            for w in &report.prediction.warnings {
                eprintln!("warning: {w}");
            }
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
            out.write_all(report::tally_csv(&report.simulation.tally).as_bytes())?;
        }
        Command::Compare { config, models } => {
            let cfg = load_config(&config)?;
            let models = parse_models(&models)?;
            eprintln!(
                "comparing {} models over {} s (seed {})",
                models.len(),
                cfg.acquisition_s,
                cfg.seed
            );
            let cmp = compare_models(&cfg, &models)?;
            let mut header = vec!["quantity".to_string()];
            header.extend(cmp.runs.iter().map(|r| r.model.name().to_string()));
            header.extend(
                cmp.runs
                    .iter()
                    .skip(1)
                    .map(|r| format!("z_{}_vs_{}", r.model.name(), cmp.runs[0].model.name())),
            );
            writeln!(out, "{}", header.join(","))?;
            let diffs: Vec<_> = (1..cmp.runs.len()).map(|j| cmp.differences(0, j)).collect();
            for (i, counter) in Counter::all().enumerate() {
                let mut row = vec![counter.name()];
                row.extend(
                    cmp.runs
                        .iter()
                        .map(|r| r.simulation.tally.count(counter).to_string()),
                );
                row.extend(diffs.iter().map(|d| format!("{:.3}", d[i].z_score)));
                writeln!(out, "{}", row.join(","))?;
            }
            for (i, name) in [
                "g2_cross",
                "g2_same",
                "bunching_fraction",
                "same_side_pair_fraction",
            ]
            .into_iter()
            .enumerate()
            {
                let mut row = vec![name.to_string()];
                row.extend(cmp.runs.iter().map(|r| {
                    r.correlation
                        .and_then(|c| c.quantities()[i].1)
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_default()
                }));
                row.extend(diffs.iter().map(|_| String::new()));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Command::Calibrate { block, model } => {
            let model: RoutingModel = model
                .parse()
                .map_err(|e: beamsplit::routing::RoutingError| Failure::Config(e.to_string()))?;
            let block = if block == 1 {
                TABLE1_BLOCK1
            } else {
                TABLE1_BLOCK2
            };
            let cal = calibrate(&block.observations(), block.mean_photon_number, model)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&cal).expect("calibration serializes")
            )?;
        }
        Command::Predict { config, order } => {
            let cfg = load_config(&config)?;
            let order = match order {
                Order::Leading => PredictionOrder::Leading,
                Order::Exact => PredictionOrder::Exact,
            };
            let pred = predicted_rates(&cfg.rate_inputs(), order)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            for w in &pred.warnings {
                eprintln!("warning: {w}");
            }
            writeln!(out, "counter,rate_per_s")?;
            for (counter, rate) in pred.rates.iter() {
                writeln!(out, "{},{rate}", counter.name())?;
            }
        }
        Command::Count {
            events,
            format,
            window_ps,
            acquisition_s,
        } => {
            let format: EventFormat = format.parse().map_err(Failure::Config)?;
            let ccu = CcuConfig {
                window_ps,
                acquisition_s,
            };
            ccu.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let file = File::open(&events)
                .map_err(|e| Failure::Runtime(format!("opening {}: {e}", events.display())))?;
            let streams = load_streams(BufReader::new(file), format, ccu.acquisition_ps())
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let tally = accumulate(&streams, &ccu).map_err(|e| Failure::Runtime(e.to_string()))?;
            out.write_all(report::tally_csv(&tally).as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
