//! Four-channel coincidence counting.
//!
//! Two clicks on different detectors coincide when `|t_x - t_y| <= window`.
//! A triple coincidence needs all three clicks mutually within the window,
//! i.e. `max(t) - min(t) <= window`. Each click is used at most once per
//! counting channel, and channels pair clicks greedily in time order
//! (earliest available partner first), like a hardware AND gate fed with
//! fixed-width pulses.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::detector::{DetectionEvent, DetectorId};
use crate::events::EventStreams;

#[derive(Debug, Error, PartialEq)]
pub enum CountError {
    #[error("event at {timestamp_ps} ps arrived after {previous_ps} ps; counter input must be time-ordered")]
    Unordered { timestamp_ps: u64, previous_ps: u64 },
    #[error("event streams cover {span_ps} ps but the acquisition is {acquisition_ps} ps")]
    ShortStream { span_ps: u64, acquisition_ps: u64 },
    #[error("window must be > 0 ps")]
    Window,
    #[error("acquisition must be finite and > 0 s, got {0}")]
    Acquisition(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcuConfig {
    /// Coincidence window in picoseconds.
    pub window_ps: u64,
    /// Seconds.
    pub acquisition_s: f64,
}

impl CcuConfig {
    pub fn validate(&self) -> Result<(), CountError> {
        if self.window_ps == 0 {
            return Err(CountError::Window);
        }
        if !self.acquisition_s.is_finite() || self.acquisition_s <= 0.0 {
            return Err(CountError::Acquisition(self.acquisition_s));
        }
        Ok(())
    }

    pub fn acquisition_ps(&self) -> u64 {
        (self.acquisition_s * 1e12).round() as u64
    }
}

/// Unordered detector pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectorPair(pub DetectorId, pub DetectorId);

impl DetectorPair {
    /// All six pairs. The first four are the ones tabulated in the reference
    /// measurement, in its row order.
    pub const ALL: [DetectorPair; 6] = [
        DetectorPair(DetectorId::APrime, DetectorId::ADoublePrime),
        DetectorPair(DetectorId::BPrime, DetectorId::BDoublePrime),
        DetectorPair(DetectorId::APrime, DetectorId::BPrime),
        DetectorPair(DetectorId::APrime, DetectorId::BDoublePrime),
        DetectorPair(DetectorId::ADoublePrime, DetectorId::BPrime),
        DetectorPair(DetectorId::ADoublePrime, DetectorId::BDoublePrime),
    ];

    pub const TABLE1: [DetectorPair; 4] = [Self::ALL[0], Self::ALL[1], Self::ALL[2], Self::ALL[3]];

    pub fn contains(self, d: DetectorId) -> bool {
        self.0 == d || self.1 == d
    }

    /// Both detectors on the same first-splitter output.
    pub fn is_same_side(self) -> bool {
        self.0.is_a_side() == self.1.is_a_side()
    }

    pub fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|p| p.0.min(p.1) == self.0.min(self.1) && p.0.max(p.1) == self.0.max(self.1))
            .expect("pair of distinct detectors")
    }

    pub fn label(self) -> String {
        format!("{}{}", self.0.label(), self.1.label())
    }
}

/// Unordered detector triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectorTriple(pub [DetectorId; 3]);

impl DetectorTriple {
    pub const ALL: [DetectorTriple; 4] = [
        DetectorTriple([
            DetectorId::APrime,
            DetectorId::ADoublePrime,
            DetectorId::BPrime,
        ]),
        DetectorTriple([
            DetectorId::APrime,
            DetectorId::ADoublePrime,
            DetectorId::BDoublePrime,
        ]),
        DetectorTriple([
            DetectorId::APrime,
            DetectorId::BPrime,
            DetectorId::BDoublePrime,
        ]),
        DetectorTriple([
            DetectorId::ADoublePrime,
            DetectorId::BPrime,
            DetectorId::BDoublePrime,
        ]),
    ];

    pub fn contains(self, d: DetectorId) -> bool {
        self.0.contains(&d)
    }

    /// The three pairs inside this triple.
    pub fn pairs(self) -> [DetectorPair; 3] {
        let [a, b, c] = self.0;
        [DetectorPair(a, b), DetectorPair(a, c), DetectorPair(b, c)]
    }

    pub fn label(self) -> String {
        self.0.iter().map(|d| d.label()).collect()
    }
}

/// One reported counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Counter {
    Single(DetectorId),
    Pair(DetectorPair),
    Triple(DetectorTriple),
}

impl Counter {
    pub fn all() -> impl Iterator<Item = Counter> {
        DetectorId::ALL
            .into_iter()
            .map(Counter::Single)
            .chain(DetectorPair::ALL.into_iter().map(Counter::Pair))
            .chain(DetectorTriple::ALL.into_iter().map(Counter::Triple))
    }

    /// Counters that appear in the reference measurement table.
    pub fn in_table1(self) -> bool {
        match self {
            Counter::Pair(p) => DetectorPair::TABLE1.contains(&p),
            _ => true,
        }
    }

    pub fn class(self) -> CounterClass {
        match self {
            Counter::Single(_) => CounterClass::Singles,
            Counter::Pair(_) => CounterClass::Pairs,
            Counter::Triple(_) => CounterClass::Triples,
        }
    }

    pub fn name(self) -> String {
        match self {
            Counter::Single(d) => format!("singles:{}", d.label()),
            Counter::Pair(p) => format!("pairs:{}", p.label()),
            Counter::Triple(t) => format!("triples:{}", t.label()),
        }
    }

    pub fn from_name(name: &str) -> Option<Counter> {
        Counter::all().find(|c| c.name() == name)
    }
}

impl fmt::Display for Counter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CounterClass {
    Singles,
    Pairs,
    Triples,
}

/// A value for every counter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CounterSet<T> {
    pub singles: [T; 4],
    pub pairs: [T; 6],
    pub triples: [T; 4],
}

impl<T: Copy> CounterSet<T> {
    pub fn get(&self, counter: Counter) -> T {
        match counter {
            Counter::Single(d) => self.singles[d.index()],
            Counter::Pair(p) => self.pairs[p.index()],
            Counter::Triple(t) => {
                self.triples[DetectorTriple::ALL
                    .iter()
                    .position(|x| *x == t)
                    .expect("known triple")]
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Counter, T)> + '_ {
        Counter::all().map(move |c| (c, self.get(c)))
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> CounterSet<U> {
        CounterSet {
            singles: self.singles.map(&f),
            pairs: self.pairs.map(&f),
            triples: self.triples.map(&f),
        }
    }

    pub fn pair(&self, a: DetectorId, b: DetectorId) -> T {
        self.pairs[DetectorPair(a, b).index()]
    }
}

/// Provenance of a tally.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TallyMetadata {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub mean_photon_number: Option<f64>,
    pub config: BTreeMap<String, String>,
}

/// Singles, two-fold and three-fold counts over one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct TallyTable {
    pub counts: CounterSet<u64>,
    pub acquisition_s: f64,
    pub metadata: TallyMetadata,
}

impl TallyTable {
    pub fn empty(acquisition_s: f64) -> Self {
        Self {
            counts: CounterSet::default(),
            acquisition_s,
            metadata: TallyMetadata::default(),
        }
    }

    pub fn count(&self, counter: Counter) -> u64 {
        self.counts.get(counter)
    }

    pub fn rate(&self, counter: Counter) -> f64 {
        self.count(counter) as f64 / self.acquisition_s
    }

    pub fn rates(&self) -> CounterSet<f64> {
        let t = self.acquisition_s;
        self.counts.map(|c| c as f64 / t)
    }

    /// Checks the counting hierarchy: a pair never outnumbers either single,
    /// a triple never outnumbers any pair inside it.
    pub fn check_hierarchy(&self) -> Result<(), String> {
        let c = &self.counts;
        for pair in DetectorPair::ALL {
            let n = c.get(Counter::Pair(pair));
            let limit = c.singles[pair.0.index()].min(c.singles[pair.1.index()]);
            if n > limit {
                return Err(format!(
                    "pair {} = {n} exceeds singles {limit}",
                    pair.label()
                ));
            }
        }
        for triple in DetectorTriple::ALL {
            let n = c.get(Counter::Triple(triple));
            for pair in triple.pairs() {
                let limit = c.get(Counter::Pair(pair));
                if n > limit {
                    return Err(format!(
                        "triple {} = {n} exceeds pair {} = {limit}",
                        triple.label(),
                        pair.label()
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PairChannel {
    pair: DetectorPair,
    // Unmatched clicks, all from the same detector of the pair.
    pending: VecDeque<(DetectorId, u64)>,
    count: u64,
}

impl PairChannel {
    fn new(pair: DetectorPair) -> Self {
        Self {
            pair,
            pending: VecDeque::new(),
            count: 0,
        }
    }

    fn push(&mut self, event: &DetectionEvent, window: u64) {
        let t = event.timestamp_ps;
        while self.pending.front().is_some_and(|&(_, p)| t - p > window) {
            self.pending.pop_front();
        }
        match self.pending.front() {
            Some(&(d, _)) if d != event.detector => {
                self.pending.pop_front();
                self.count += 1;
            }
            _ => self.pending.push_back((event.detector, t)),
        }
    }
}

#[derive(Debug, Clone)]
struct TripleChannel {
    triple: DetectorTriple,
    pending: [VecDeque<u64>; 3],
    count: u64,
}

impl TripleChannel {
    fn new(triple: DetectorTriple) -> Self {
        Self {
            triple,
            pending: Default::default(),
            count: 0,
        }
    }

    fn push(&mut self, event: &DetectionEvent, window: u64) {
        let t = event.timestamp_ps;
        for queue in self.pending.iter_mut() {
            while queue.front().is_some_and(|&p| t - p > window) {
                queue.pop_front();
            }
        }
        let slot = self
            .triple
            .0
            .iter()
            .position(|&d| d == event.detector)
            .expect("member detector");
        let others = (0..3).filter(|&k| k != slot);
        if others.clone().all(|k| !self.pending[k].is_empty()) {
            for k in others {
                self.pending[k].pop_front();
            }
            self.count += 1;
        } else {
            self.pending[slot].push_back(t);
        }
    }
}

/// Single-pass counter over a globally time-ordered event sequence.
#[derive(Debug, Clone)]
pub struct CoincidenceCounter {
    window_ps: u64,
    singles: [u64; 4],
    pairs: Vec<PairChannel>,
    triples: Vec<TripleChannel>,
    last_ps: Option<u64>,
}

impl CoincidenceCounter {
    pub fn new(window_ps: u64) -> Self {
        Self {
            window_ps,
            singles: [0; 4],
            pairs: DetectorPair::ALL
                .into_iter()
                .map(PairChannel::new)
                .collect(),
            triples: DetectorTriple::ALL
                .into_iter()
                .map(TripleChannel::new)
                .collect(),
            last_ps: None,
        }
    }

    pub fn push(&mut self, event: &DetectionEvent) -> Result<(), CountError> {
        if let Some(previous_ps) = self.last_ps {
            if event.timestamp_ps < previous_ps {
                return Err(CountError::Unordered {
                    timestamp_ps: event.timestamp_ps,
                    previous_ps,
                });
            }
        }
        self.last_ps = Some(event.timestamp_ps);
        self.singles[event.detector.index()] += 1;
        for channel in self
            .pairs
            .iter_mut()
            .filter(|c| c.pair.contains(event.detector))
        {
            channel.push(event, self.window_ps);
        }
        for channel in self
            .triples
            .iter_mut()
            .filter(|c| c.triple.contains(event.detector))
        {
            channel.push(event, self.window_ps);
        }
        Ok(())
    }

    pub fn counts(&self) -> CounterSet<u64> {
        let mut pairs = [0; 6];
        for (slot, c) in pairs.iter_mut().zip(&self.pairs) {
            *slot = c.count;
        }
        let mut triples = [0; 4];
        for (slot, c) in triples.iter_mut().zip(&self.triples) {
            *slot = c.count;
        }
        CounterSet {
            singles: self.singles,
            pairs,
            triples,
        }
    }

    pub fn into_tally(self, acquisition_s: f64) -> TallyTable {
        TallyTable {
            counts: self.counts(),
            acquisition_s,
            metadata: TallyMetadata::default(),
        }
    }
}

pub fn count_singles(streams: &EventStreams) -> [u64; 4] {
    DetectorId::ALL.map(|d| streams.stream(d).len() as u64)
}

/// Greedy two-pointer matching of two sorted streams.
fn match_pair(x: &[u64], y: &[u64], window: u64) -> u64 {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < x.len() && j < y.len() {
        if x[i].abs_diff(y[j]) <= window {
            count += 1;
            i += 1;
            j += 1;
        } else if x[i] < y[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    count
}

pub fn count_pairs(streams: &EventStreams, cfg: &CcuConfig) -> [u64; 6] {
    DetectorPair::ALL.map(|p| match_pair(streams.stream(p.0), streams.stream(p.1), cfg.window_ps))
}

pub fn count_triples(streams: &EventStreams, cfg: &CcuConfig) -> [u64; 4] {
    DetectorTriple::ALL.map(|triple| {
        let mut events: Vec<DetectionEvent> = triple
            .0
            .iter()
            .flat_map(|&d| {
                streams
                    .stream(d)
                    .iter()
                    .map(move |&t| DetectionEvent::new(d, t))
            })
            .collect();
        events.sort_unstable();
        let mut channel = TripleChannel::new(triple);
        for e in &events {
            channel.push(e, cfg.window_ps);
        }
        channel.count
    })
}

/// Counts every channel over `[0, acquisition]`.
pub fn accumulate(streams: &EventStreams, cfg: &CcuConfig) -> Result<TallyTable, CountError> {
    cfg.validate()?;
    let acquisition_ps = cfg.acquisition_ps();
    if streams.span_ps() < acquisition_ps {
        return Err(CountError::ShortStream {
            span_ps: streams.span_ps(),
            acquisition_ps,
        });
    }
    let clipped = if streams
        .merged()
        .last()
        .is_some_and(|e| e.timestamp_ps > acquisition_ps)
    {
        let per_detector = DetectorId::ALL.map(|d| {
            streams
                .stream(d)
                .iter()
                .copied()
                .take_while(|&t| t <= acquisition_ps)
                .collect()
        });
        EventStreams::new(per_detector, acquisition_ps).expect("prefix of an ordered stream")
    } else {
        streams.clone()
    };
    Ok(TallyTable {
        counts: CounterSet {
            singles: count_singles(&clipped),
            pairs: count_pairs(&clipped, cfg),
            triples: count_triples(&clipped, cfg),
        },
        acquisition_s: cfg.acquisition_s,
        metadata: TallyMetadata::default(),
    })
}
