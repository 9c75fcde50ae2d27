//! Four non-number-resolving single-photon detectors behind two second-stage
//! splitters: port 1 feeds A' and A'', port 2 feeds B' and B''.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::routing::PortOccupancy;

/// Jitter draws are truncated at this many standard deviations, which bounds
/// how far a click can stray from its slot.
pub const JITTER_TRUNCATION_SIGMAS: u64 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("efficiency must lie in [0, 1], got {0}")]
    Efficiency(f64),
    #[error("dark_rate must be finite and >= 0, got {0}")]
    DarkRate(f64),
    #[error(
        "dead time ({dead_time_ps} ps) must be at least the pulse width ({pulse_width_ps} ps)"
    )]
    DeadTimeShorterThanPulse {
        dead_time_ps: u64,
        pulse_width_ps: u64,
    },
    #[error("unknown detector label '{0}'")]
    UnknownDetector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum DetectorId {
    APrime = 0,
    ADoublePrime = 1,
    BPrime = 2,
    BDoublePrime = 3,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [
        DetectorId::APrime,
        DetectorId::ADoublePrime,
        DetectorId::BPrime,
        DetectorId::BDoublePrime,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<DetectorId> {
        Self::ALL.get(index).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorId::APrime => "A'",
            DetectorId::ADoublePrime => "A''",
            DetectorId::BPrime => "B'",
            DetectorId::BDoublePrime => "B''",
        }
    }

    /// True for the two detectors fed by first-splitter port 1.
    pub fn is_a_side(self) -> bool {
        matches!(self, DetectorId::APrime | DetectorId::ADoublePrime)
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DetectorId {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| DetectorError::UnknownDetector(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dead_time_ps: u64,
    /// Counts per second, per detector.
    pub dark_rate: f64,
    pub pulse_width_ps: u64,
    pub timing_jitter_sigma_ps: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dead_time_ps: 22_000,
            dark_rate: 27.0,
            pulse_width_ps: 10_000,
            timing_jitter_sigma_ps: 350,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(DetectorError::Efficiency(self.efficiency));
        }
        if !self.dark_rate.is_finite() || self.dark_rate < 0.0 {
            return Err(DetectorError::DarkRate(self.dark_rate));
        }
        if self.dead_time_ps < self.pulse_width_ps {
            return Err(DetectorError::DeadTimeShorterThanPulse {
                dead_time_ps: self.dead_time_ps,
                pulse_width_ps: self.pulse_width_ps,
            });
        }
        Ok(())
    }

    fn jitter(&self) -> Option<Normal<f64>> {
        (self.timing_jitter_sigma_ps > 0)
            .then(|| Normal::new(0.0, self.timing_jitter_sigma_ps as f64).expect("sigma > 0"))
    }

    /// Largest distance between a click and its slot time.
    pub fn max_jitter_ps(&self) -> u64 {
        self.timing_jitter_sigma_ps * JITTER_TRUNCATION_SIGMAS
    }
}

/// One registered click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionEvent {
    // Field order gives time-then-detector ordering.
    pub timestamp_ps: u64,
    pub detector: DetectorId,
}

impl DetectionEvent {
    pub fn new(detector: DetectorId, timestamp_ps: u64) -> Self {
        Self {
            timestamp_ps,
            detector,
        }
    }
}

/// Photons incident on each detector during one slot, indexed by
/// [`DetectorId::index`].
pub type DetectorCounts = [u32; 4];

/// Sends each port-1 photon to A' or A'' and each port-2 photon to B' or B''
/// with equal probability.
pub fn split_to_detectors<R: Rng + ?Sized>(
    occupancy: PortOccupancy,
    rng: &mut R,
) -> DetectorCounts {
    let mut counts = [0u32; 4];
    for _ in 0..occupancy.port1 {
        counts[if rng.random::<bool>() { 0 } else { 1 }] += 1;
    }
    for _ in 0..occupancy.port2 {
        counts[if rng.random::<bool>() { 2 } else { 3 }] += 1;
    }
    counts
}

/// Probability that `photons` incident photons produce at least one click.
pub fn click_probability(efficiency: f64, photons: u32) -> f64 {
    1.0 - (1.0 - efficiency).powi(photons as i32)
}

/// Click candidates for one slot, before dead-time filtering. At most one
/// click per detector. Timestamps are clamped to `[0, horizon_ps]`.
pub fn candidate_clicks<R: Rng + ?Sized>(
    cfg: &DetectorConfig,
    counts: &DetectorCounts,
    slot_time_ps: u64,
    horizon_ps: u64,
    rng: &mut R,
    out: &mut Vec<DetectionEvent>,
) {
    let jitter = cfg.jitter();
    let bound = cfg.max_jitter_ps() as f64;
    for detector in DetectorId::ALL {
        let k = counts[detector.index()];
        if k == 0 || rng.random::<f64>() >= click_probability(cfg.efficiency, k) {
            continue;
        }
        let offset = jitter
            .map_or(0.0, |n| n.sample(rng).clamp(-bound, bound))
            .round() as i64;
        let t = slot_time_ps.saturating_add_signed(offset).min(horizon_ps);
        out.push(DetectionEvent::new(detector, t));
    }
}

/// Non-paralyzable dead time: a click closer than `dead_time_ps` to the
/// previous accepted click of the same detector is dropped.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    dead_time_ps: u64,
    last: [Option<u64>; 4],
    suppressed: u64,
}

impl DeadTimeFilter {
    pub fn new(dead_time_ps: u64) -> Self {
        Self {
            dead_time_ps,
            last: [None; 4],
            suppressed: 0,
        }
    }

    /// Events must be offered in time order per detector.
    pub fn admit(&mut self, event: &DetectionEvent) -> bool {
        let slot = &mut self.last[event.detector.index()];
        if let Some(prev) = *slot {
            if event.timestamp_ps < prev.saturating_add(self.dead_time_ps.max(1)) {
                self.suppressed += 1;
                return false;
            }
        }
        *slot = Some(event.timestamp_ps);
        true
    }

    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }
}

/// Detectors with their dead-time state, for slot-by-slot use.
#[derive(Debug, Clone)]
pub struct DetectorBank {
    cfg: DetectorConfig,
    filter: DeadTimeFilter,
    horizon_ps: u64,
}

impl DetectorBank {
    pub fn new(cfg: DetectorConfig, horizon_ps: u64) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let filter = DeadTimeFilter::new(cfg.dead_time_ps);
        Ok(Self {
            cfg,
            filter,
            horizon_ps,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Clicks registered for one slot, in time order.
    pub fn detect_slot<R: Rng + ?Sized>(
        &mut self,
        counts: &DetectorCounts,
        slot_time_ps: u64,
        rng: &mut R,
    ) -> Vec<DetectionEvent> {
        let mut events = Vec::with_capacity(4);
        candidate_clicks(
            &self.cfg,
            counts,
            slot_time_ps,
            self.horizon_ps,
            rng,
            &mut events,
        );
        events.sort_unstable();
        events.retain(|e| self.filter.admit(e));
        events
    }

    pub fn suppressed(&self) -> u64 {
        self.filter.suppressed()
    }
}

/// Raw dark-count candidates in `interval` (picoseconds): an independent
/// homogeneous Poisson process per detector. Returned in time order.
pub fn dark_events<R: Rng + ?Sized>(
    cfg: &DetectorConfig,
    interval: Range<u64>,
    rng: &mut R,
) -> Vec<DetectionEvent> {
    let mut events = Vec::new();
    if cfg.dark_rate <= 0.0 || interval.is_empty() {
        return events;
    }
    let mean_gap_ps = 1e12 / cfg.dark_rate;
    let (start, end) = (interval.start as f64, interval.end as f64);
    for detector in DetectorId::ALL {
        let mut t = start;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() * mean_gap_ps;
            if t >= end {
                break;
            }
            events.push(DetectionEvent::new(detector, t as u64));
        }
    }
    events.sort_unstable();
    events
}

/// Dark counts over `duration_s` seconds starting at zero, dead-time filtered.
pub fn dark_events_for_duration<R: Rng + ?Sized>(
    cfg: &DetectorConfig,
    duration_s: f64,
    rng: &mut R,
) -> Vec<DetectionEvent> {
    let end = (duration_s * 1e12).round() as u64;
    let mut filter = DeadTimeFilter::new(cfg.dead_time_ps);
    let mut events = dark_events(cfg, 0..end, rng);
    events.retain(|e| filter.admit(e));
    events
}
