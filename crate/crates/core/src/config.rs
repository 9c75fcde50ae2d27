//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # weak beam, first reference block
//! preset = table1-block1
//! model = phase-basis
//! seed = 42
//! acquisition_s = 10   # trailing comments are allowed
//! ```
//!
//! Values are layered with increasing precedence: built-in defaults, a
//! preset, the file, then command-line overrides. Every violation is
//! reported, not just the first one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use crate::coincidence::CcuConfig;
use crate::detector::DetectorConfig;
use crate::events::EventFormat;
use crate::routing::RoutingModel;
use crate::source::SourceConfig;
use crate::stats::{calibrate, RateInputs, TABLE1_BLOCK1};

pub const KEYS: [&str; 16] = [
    "preset",
    "model",
    "mean_photon_number",
    "slot_rate",
    "efficiency",
    "dark_rate",
    "dead_time_ps",
    "pulse_width_ps",
    "jitter_ps",
    "window_ps",
    "acquisition_s",
    "seed",
    "workers",
    "output_dir",
    "events_path",
    "events_format",
];

pub const REQUIRED_KEYS: [&str; 3] = ["model", "mean_photon_number", "seed"];

/// Keys that change simulation results. Only these are echoed into output
/// metadata, so runs differing only in worker count or paths stay
/// byte-identical.
pub const RESULT_KEYS: [&str; 12] = [
    "model",
    "mean_photon_number",
    "slot_rate",
    "efficiency",
    "dark_rate",
    "dead_time_ps",
    "pulse_width_ps",
    "jitter_ps",
    "window_ps",
    "acquisition_s",
    "seed",
    "preset",
];

pub const PRESETS: [&str; 2] = ["table1-block1", "table1-block2"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub model: RoutingModel,
    pub mean_photon_number: f64,
    pub slot_rate: f64,
    pub efficiency: f64,
    pub dark_rate: f64,
    pub dead_time_ps: u64,
    pub pulse_width_ps: u64,
    pub jitter_ps: u64,
    pub window_ps: u64,
    pub acquisition_s: f64,
    pub seed: u64,
    /// 0 means one per available core.
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    pub events_path: Option<PathBuf>,
    pub events_format: EventFormat,
}

impl ExperimentConfig {
    pub fn source(&self) -> SourceConfig {
        SourceConfig {
            mean_photon_number: self.mean_photon_number,
            slot_rate: self.slot_rate,
            duration: self.acquisition_s,
            seed: self.seed,
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            efficiency: self.efficiency,
            dead_time_ps: self.dead_time_ps,
            dark_rate: self.dark_rate,
            pulse_width_ps: self.pulse_width_ps,
            timing_jitter_sigma_ps: self.jitter_ps,
        }
    }

    pub fn ccu(&self) -> CcuConfig {
        CcuConfig {
            window_ps: self.window_ps,
            acquisition_s: self.acquisition_s,
        }
    }

    pub fn rate_inputs(&self) -> RateInputs {
        RateInputs {
            model: self.model,
            mean_photon_number: self.mean_photon_number,
            slot_rate: self.slot_rate,
            efficiency: self.efficiency,
            dark_rate: self.dark_rate,
            window_ps: self.window_ps,
            dead_time_ps: self.dead_time_ps,
        }
    }

    /// Every key with its effective value.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let opt_path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        [
            ("preset", self.preset.clone().unwrap_or_default()),
            ("model", self.model.name().to_string()),
            ("mean_photon_number", self.mean_photon_number.to_string()),
            ("slot_rate", self.slot_rate.to_string()),
            ("efficiency", self.efficiency.to_string()),
            ("dark_rate", self.dark_rate.to_string()),
            ("dead_time_ps", self.dead_time_ps.to_string()),
            ("pulse_width_ps", self.pulse_width_ps.to_string()),
            ("jitter_ps", self.jitter_ps.to_string()),
            ("window_ps", self.window_ps.to_string()),
            ("acquisition_s", self.acquisition_s.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("output_dir", opt_path(&self.output_dir)),
            ("events_path", opt_path(&self.events_path)),
            ("events_format", self.events_format.name().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// The echo restricted to [`RESULT_KEYS`].
    pub fn result_echo(&self) -> BTreeMap<String, String> {
        let mut echo = self.echo();
        echo.retain(|k, _| RESULT_KEYS.contains(&k.as_str()));
        echo
    }

    /// Renders the config in the file format; parsing it back yields an
    /// equal config.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Slot rate and efficiency fitted to the first reference block.
pub fn calibrated_defaults() -> (f64, f64) {
    static CAL: OnceLock<(f64, f64)> = OnceLock::new();
    *CAL.get_or_init(|| {
        let cal = calibrate(
            &TABLE1_BLOCK1.observations(),
            TABLE1_BLOCK1.mean_photon_number,
            RoutingModel::PhaseBasisSuperposition,
        )
        .expect("reference block calibrates");
        (cal.slot_rate, cal.efficiency)
    })
}

fn defaults() -> BTreeMap<String, String> {
    let (slot_rate, efficiency) = calibrated_defaults();
    let detector = DetectorConfig::default();
    [
        ("slot_rate", slot_rate.to_string()),
        ("efficiency", efficiency.to_string()),
        ("dark_rate", detector.dark_rate.to_string()),
        ("dead_time_ps", detector.dead_time_ps.to_string()),
        ("pulse_width_ps", detector.pulse_width_ps.to_string()),
        ("jitter_ps", detector.timing_jitter_sigma_ps.to_string()),
        ("window_ps", "5000".to_string()),
        ("acquisition_s", "1".to_string()),
        ("workers", "0".to_string()),
        ("events_format", "binary".to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Values set by a named preset.
pub fn preset_values(name: &str) -> Option<BTreeMap<String, String>> {
    let mean = match name {
        "table1-block1" => "0.022",
        "table1-block2" => "0.044",
        _ => return None,
    };
    let (slot_rate, efficiency) = calibrated_defaults();
    Some(
        [
            ("mean_photon_number", mean.to_string()),
            ("acquisition_s", "1".to_string()),
            ("dark_rate", "27".to_string()),
            ("slot_rate", slot_rate.to_string()),
            ("efficiency", efficiency.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    )
}

/// Parses the file format into raw key/value pairs, checking syntax, key
/// names and duplicates.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut violations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let Some((key, value)) = line.split_once('=') else {
            violations.push(format!(
                "line {lineno}: expected 'key = value', got '{line}'"
            ));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            violations.push(format!("line {lineno}: unknown key '{key}'"));
        } else if value.is_empty() {
            violations.push(format!("line {lineno}: key '{key}' has no value"));
        } else if entries.insert(key.to_string(), value.to_string()).is_some() {
            violations.push(format!("line {lineno}: duplicate key '{key}'"));
        }
    }
    if violations.is_empty() {
        Ok(entries)
    } else {
        Err(ConfigError { violations })
    }
}

/// Splits a `key=value` command-line override.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError {
            violations: vec![format!("override '{arg}' is not of the form key=value")],
        }),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ConfigBuilder::new().file(text)?.build()
}

/// Collects the layers and resolves them into a validated config.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    preset: Option<String>,
    file: BTreeMap<String, String>,
    overrides: BTreeMap<String, String>,
    violations: Vec<String>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preset(mut self, name: impl Into<String>) -> Self {
        self.preset = Some(name.into());
        self
    }

    pub fn file(mut self, text: &str) -> Result<Self, ConfigError> {
        self.file = parse_entries(text)?;
        Ok(self)
    }

    pub fn set(mut self, key: &str, value: impl Into<String>) -> Self {
        if KEYS.contains(&key) {
            self.overrides.insert(key.to_string(), value.into());
        } else {
            self.violations.push(format!("unknown key '{key}'"));
        }
        self
    }

    pub fn build(self) -> Result<ExperimentConfig, ConfigError> {
        let mut violations = self.violations;
        let preset = self
            .overrides
            .get("preset")
            .or(self.preset.as_ref())
            .or(self.file.get("preset"))
            .cloned();
        let mut merged = defaults();
        if let Some(name) = &preset {
            match preset_values(name) {
                Some(values) => merged.extend(values),
                None => violations.push(format!(
                    "preset: unknown preset '{name}' (expected one of {})",
                    PRESETS.join(", ")
                )),
            }
        }
        merged.extend(self.file);
        merged.extend(self.overrides);
        merged.remove("preset");

        for key in REQUIRED_KEYS {
            if !merged.contains_key(key) {
                violations.push(format!("{key}: missing required key"));
            }
        }
        let mut values = Values {
            merged: &merged,
            violations: &mut violations,
        };
        let model = values.get("model", |s| {
            s.parse::<RoutingModel>().map_err(|e| e.to_string())
        });
        let mean_photon_number = values.get("mean_photon_number", |s| {
            number(s).and_then(|v| {
                if v >= 0.0 {
                    Ok(v)
                } else {
                    Err("must be >= 0".into())
                }
            })
        });
        let slot_rate = values.get("slot_rate", |s| number(s).and_then(positive));
        let efficiency = values.get("efficiency", |s| {
            number(s).and_then(|v| {
                if (0.0..=1.0).contains(&v) {
                    Ok(v)
                } else {
                    Err("must lie in [0, 1]".into())
                }
            })
        });
        let dark_rate = values.get("dark_rate", |s| {
            number(s).and_then(|v| {
                if v >= 0.0 {
                    Ok(v)
                } else {
                    Err("must be >= 0".into())
                }
            })
        });
        let dead_time_ps = values.get("dead_time_ps", integer);
        let pulse_width_ps = values.get("pulse_width_ps", integer);
        let jitter_ps = values.get("jitter_ps", integer);
        let window_ps = values.get("window_ps", |s| {
            integer(s).and_then(|v| {
                if v > 0 {
                    Ok(v)
                } else {
                    Err("must be > 0".into())
                }
            })
        });
        let acquisition_s = values.get("acquisition_s", |s| number(s).and_then(positive));
        let seed = values.get("seed", integer);
        let workers = values.get("workers", |s| s.parse::<usize>().map_err(|e| e.to_string()));
        let events_format = values.get("events_format", |s| s.parse::<EventFormat>());
        let output_dir = merged.get("output_dir").map(PathBuf::from);
        let events_path = merged.get("events_path").map(PathBuf::from);

        if let (Some(dead), Some(pulse)) = (dead_time_ps, pulse_width_ps) {
            if dead < pulse {
                violations.push(format!(
                    "dead_time_ps: {dead} is shorter than pulse_width_ps {pulse}"
                ));
            }
        }
        if let (Some(rate), Some(t)) = (slot_rate, acquisition_s) {
            if let Err(e) = (SourceConfig {
                mean_photon_number: 0.0,
                slot_rate: rate,
                duration: t,
                seed: 0,
            })
            .slot_count()
            {
                violations.push(format!("acquisition_s: {e}"));
            }
        }

        match (
            model,
            mean_photon_number,
            slot_rate,
            efficiency,
            dark_rate,
            dead_time_ps,
            pulse_width_ps,
            jitter_ps,
            window_ps,
            acquisition_s,
            seed,
            workers,
            events_format,
        ) {
            (
                Some(model),
                Some(mean_photon_number),
                Some(slot_rate),
                Some(efficiency),
                Some(dark_rate),
                Some(dead_time_ps),
                Some(pulse_width_ps),
                Some(jitter_ps),
                Some(window_ps),
                Some(acquisition_s),
                Some(seed),
                Some(workers),
                Some(events_format),
            ) if violations.is_empty() => Ok(ExperimentConfig {
                preset,
                model,
                mean_photon_number,
                slot_rate,
                efficiency,
                dark_rate,
                dead_time_ps,
                pulse_width_ps,
                jitter_ps,
                window_ps,
                acquisition_s,
                seed,
                workers,
                output_dir,
                events_path,
                events_format,
            }),
            _ => Err(ConfigError { violations }),
        }
    }
}

struct Values<'a> {
    merged: &'a BTreeMap<String, String>,
    violations: &'a mut Vec<String>,
}

impl Values<'_> {
    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let raw = self.merged.get(key)?;
        match parse(raw) {
            Ok(v) => Some(v),
            Err(e) => {
                self.violations
                    .push(format!("{key}: invalid value '{raw}': {e}"));
                None
            }
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err("must be finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be > 0".into())
    }
}

fn integer(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model = phase-basis\nmean_photon_number = 0.022\nseed = 42\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.model, RoutingModel::PhaseBasisSuperposition);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.dark_rate, 27.0);
        assert_eq!(cfg.dead_time_ps, 22_000);
        assert_eq!(cfg.jitter_ps, 350);
        assert_eq!(cfg.window_ps, 5000);
        assert_eq!(cfg.acquisition_s, 1.0);
        assert_eq!(cfg.events_format, EventFormat::Binary);
        let echo = cfg.echo();
        assert_eq!(echo["dark_rate"], "27");
        assert_eq!(echo.len(), KEYS.len());
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nmodel = classical   # inline\nmean_photon_number=0.01\n  seed =7\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.model, RoutingModel::ClassicalIndependent);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn negative_mean_names_the_key() {
        let err =
            parse_config("model = classical\nmean_photon_number = -1\nseed = 1\n").unwrap_err();
        assert_eq!(err.violations.len(), 1);
        assert!(err.violations[0].starts_with("mean_photon_number"), "{err}");
    }

    #[test]
    fn all_violations_are_reported() {
        let err = parse_config("model = quantum\nefficiency = 2\nwindow_ps = 0\n").unwrap_err();
        let text = err.to_string();
        for key in [
            "model",
            "efficiency",
            "window_ps",
            "mean_photon_number",
            "seed",
        ] {
            assert!(
                err.violations.iter().any(|v| v.starts_with(key)),
                "{key} missing from {text}"
            );
        }
    }

    #[test]
    fn syntax_errors() {
        let err = parse_config("model classical\nbogus = 1\nseed = 1\nseed = 2\ndark_rate =\n")
            .unwrap_err();
        assert_eq!(err.violations.len(), 4, "{err}");
        assert!(err.violations[1].contains("unknown key 'bogus'"));
        assert!(err.violations[2].contains("duplicate key 'seed'"));
    }

    #[test]
    fn block1_preset() {
        let cfg = ConfigBuilder::new()
            .preset("table1-block1")
            .set("model", "phase-basis")
            .set("seed", "1")
            .build()
            .unwrap();
        assert_eq!(cfg.mean_photon_number, 0.022);
        assert_eq!(cfg.acquisition_s, 1.0);
        assert_eq!(cfg.dark_rate, 27.0);
        assert!((cfg.efficiency - 0.586).abs() < 0.001);
        assert!((cfg.slot_rate / 7.78e7 - 1.0).abs() < 0.002);

        let two = ConfigBuilder::new()
            .preset("table1-block2")
            .set("model", "classical")
            .set("seed", "1")
            .build()
            .unwrap();
        assert_eq!(two.mean_photon_number, 0.044);
        assert_eq!(
            (two.slot_rate, two.efficiency),
            (cfg.slot_rate, cfg.efficiency)
        );
    }

    #[test]
    fn precedence_flag_over_file_over_preset() {
        let file = "preset = table1-block1\nmodel = classical\nseed = 3\nacquisition_s = 5\ndark_rate = 10\n";
        let cfg = ConfigBuilder::new()
            .file(file)
            .unwrap()
            .set("acquisition_s", "2")
            .build()
            .unwrap();
        assert_eq!(cfg.acquisition_s, 2.0);
        assert_eq!(cfg.dark_rate, 10.0);
        assert_eq!(cfg.mean_photon_number, 0.022);
        assert_eq!(cfg.preset.as_deref(), Some("table1-block1"));

        let flag_preset = ConfigBuilder::new()
            .file(file)
            .unwrap()
            .set("preset", "table1-block2")
            .build()
            .unwrap();
        assert_eq!(flag_preset.mean_photon_number, 0.044);
    }

    #[test]
    fn unknown_preset_and_override_key() {
        let err = ConfigBuilder::new()
            .preset("nope")
            .set("colour", "red")
            .build()
            .unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| v.contains("unknown preset 'nope'")));
        assert!(err
            .violations
            .iter()
            .any(|v| v.contains("unknown key 'colour'")));
        assert!(parse_override("seed").is_err());
        assert_eq!(
            parse_override("seed = 4").unwrap(),
            ("seed".into(), "4".into())
        );
    }

    #[test]
    fn dead_time_must_cover_pulse() {
        let err = parse_config(&format!("{MINIMAL}dead_time_ps = 5000\n")).unwrap_err();
        assert!(err.violations[0].starts_with("dead_time_ps"));
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse_config(&format!(
            "{MINIMAL}output_dir = out\nevents_format = text\n"
        ))
        .unwrap();
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn result_echo_omits_plumbing() {
        let cfg = parse_config(MINIMAL).unwrap();
        let echo = cfg.result_echo();
        assert!(!echo.contains_key("workers"));
        assert!(!echo.contains_key("output_dir"));
        assert!(echo.contains_key("seed"));
    }
}
