//! Closed-form rate predictions, calibration against the reference table,
//! zero-delay correlation estimates and photon-number scaling.
//!
//! All detector-pattern probabilities come from composing the routing
//! enumeration with an enumeration of the second-stage splitters; none are
//! written out by hand.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::coincidence::{
    CcuConfig, Counter, CounterClass, CounterSet, DetectorPair, DetectorTriple, TallyTable,
};
use crate::detector::{click_probability, DetectorCounts, DetectorId};
use crate::routing::{enumerate_distribution, RoutingError, RoutingModel, ENUMERATION_LIMIT};

/// Above this mean photon number the leading-order rates are unreliable.
pub const WEAK_BEAM_LIMIT: f64 = 0.1;

/// Counters below this many events are left out of scaling fits.
pub const MIN_SCALING_COUNTS: u64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("calibration needs at least one singles and one pair target")]
    MissingTargets,
    #[error("calibration is inconsistent: fitted efficiency {efficiency} lies outside [0, 1]")]
    InconsistentEfficiency { efficiency: f64 },
    #[error("calibration anchor {0} has zero probability under this model")]
    DegenerateAnchor(String),
    #[error("correlation undefined: {0}")]
    Undefined(&'static str),
    #[error("tally metadata lacks the mean photon number")]
    MissingMeanPhotonNumber,
    #[error("scaling needs different mean photon numbers, got {0} twice")]
    SameMeanPhotonNumber(f64),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionOrder {
    /// Lowest-order Poisson term for each counter class, plus dark-count
    /// accidentals.
    Leading,
    /// Full Poisson sum with detector saturation, dead time and accidentals.
    Exact,
}

/// Everything the closed-form rates depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct RateInputs {
    pub model: RoutingModel,
    pub mean_photon_number: f64,
    /// Slots per second.
    pub slot_rate: f64,
    pub efficiency: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
    pub window_ps: u64,
    pub dead_time_ps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePrediction {
    /// Counts per second.
    pub rates: CounterSet<f64>,
    pub warnings: Vec<String>,
}

impl RatePrediction {
    pub fn singles_per_detector(&self) -> f64 {
        self.rates.singles.iter().sum::<f64>() / 4.0
    }
}

/// Distribution of photons over the four detectors for `n` source photons.
pub fn detector_occupancy(
    model: RoutingModel,
    n: u32,
) -> Result<Vec<(DetectorCounts, f64)>, RoutingError> {
    let mut out: BTreeMap<DetectorCounts, f64> = BTreeMap::new();
    for (ports, p) in enumerate_distribution(model, n)?.iter() {
        let (n1, n2) = (ports.port1, ports.port2);
        let weight = p * 0.5f64.powi((n1 + n2) as i32);
        for mask1 in 0u32..(1 << n1) {
            let to_a_prime = mask1.count_ones();
            for mask2 in 0u32..(1 << n2) {
                let to_b_prime = mask2.count_ones();
                let counts = [to_a_prime, n1 - to_a_prime, to_b_prime, n2 - to_b_prime];
                *out.entry(counts).or_insert(0.0) += weight;
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Probability that `n` photons land on exactly the detectors in `targets`,
/// one photon each.
fn landing_probability(model: RoutingModel, targets: &[DetectorId]) -> Result<f64, RoutingError> {
    let n = targets.len() as u32;
    Ok(detector_occupancy(model, n)?
        .into_iter()
        .filter(|(counts, _)| targets.iter().all(|d| counts[d.index()] == 1))
        .map(|(_, p)| p)
        .sum())
}

/// One-photon, two-photon and three-photon landing probabilities for every
/// single, pair and triple counter.
pub fn landing_probabilities(model: RoutingModel) -> Result<CounterSet<f64>, RoutingError> {
    let mut set = CounterSet::<f64>::default();
    for d in DetectorId::ALL {
        set.singles[d.index()] = landing_probability(model, &[d])?;
    }
    for (slot, pair) in set.pairs.iter_mut().zip(DetectorPair::ALL) {
        *slot = landing_probability(model, &[pair.0, pair.1])?;
    }
    for (slot, triple) in set.triples.iter_mut().zip(DetectorTriple::ALL) {
        *slot = landing_probability(model, &triple.0)?;
    }
    Ok(set)
}

fn poisson_pmf(mean: f64, n: u32) -> f64 {
    let mut p = (-mean).exp();
    for k in 1..=n {
        p *= mean / k as f64;
    }
    p
}

/// Slots after a click that fall inside the dead time.
pub fn dead_slots(dead_time_ps: u64, slot_rate: f64) -> u64 {
    if dead_time_ps == 0 {
        return 0;
    }
    let period_ps = 1e12 / slot_rate;
    ((dead_time_ps as f64 / period_ps).ceil() as u64).saturating_sub(1)
}

/// Neighbouring slots on one side of a slot that lie within the window.
fn window_neighbours(window_ps: u64, slot_rate: f64) -> f64 {
    (window_ps as f64 * 1e-12 * slot_rate).floor()
}

/// Click probabilities per slot from photons alone, by full enumeration.
fn exact_click_probabilities(
    inputs: &RateInputs,
    warnings: &mut Vec<String>,
) -> Result<CounterSet<f64>, RoutingError> {
    let mean = inputs.mean_photon_number;
    let mut probs = CounterSet::<f64>::default();
    let mut covered = 0.0;
    for n in 1..=ENUMERATION_LIMIT {
        covered += poisson_pmf(mean, n - 1);
        if 1.0 - covered < 1e-15 {
            break;
        }
        let weight = poisson_pmf(mean, n);
        for (counts, p) in detector_occupancy(inputs.model, n)? {
            let click = counts.map(|k| click_probability(inputs.efficiency, k));
            let w = weight * p;
            for d in DetectorId::ALL {
                probs.singles[d.index()] += w * click[d.index()];
            }
            for (slot, pair) in probs.pairs.iter_mut().zip(DetectorPair::ALL) {
                *slot += w * click[pair.0.index()] * click[pair.1.index()];
            }
            for (slot, triple) in probs.triples.iter_mut().zip(DetectorTriple::ALL) {
                *slot += w * triple.0.iter().map(|d| click[d.index()]).product::<f64>();
            }
        }
    }
    let tail = 1.0 - covered - poisson_pmf(mean, ENUMERATION_LIMIT);
    if tail > 1e-9 && covered < 1.0 {
        warnings.push(format!(
            "Poisson sum truncated at {ENUMERATION_LIMIT} photons leaves {tail:.2e} of the probability unaccounted"
        ));
    }
    Ok(probs)
}

/// Expected singles, two-fold and three-fold rates.
pub fn predicted_rates(
    inputs: &RateInputs,
    order: PredictionOrder,
) -> Result<RatePrediction, StatsError> {
    let mut warnings = Vec::new();
    let mean = inputs.mean_photon_number;
    if mean > WEAK_BEAM_LIMIT {
        warnings.push(format!(
            "mean photon number {mean} is outside the weak-beam regime (<= {WEAK_BEAM_LIMIT}); expect higher-order corrections"
        ));
    }
    let r = inputs.slot_rate;
    let eta = inputs.efficiency;
    let window_s = inputs.window_ps as f64 * 1e-12;
    let dark = inputs.dark_rate;

    let (signal, alive) = match order {
        PredictionOrder::Leading => {
            let landing = landing_probabilities(inputs.model)?;
            let signal = CounterSet {
                singles: landing.singles.map(|p| r * mean * eta * p),
                pairs: landing
                    .pairs
                    .map(|p| r * mean.powi(2) / 2.0 * eta.powi(2) * p),
                triples: landing
                    .triples
                    .map(|p| r * mean.powi(3) / 6.0 * eta.powi(3) * p),
            };
            (signal, [1.0; 4])
        }
        PredictionOrder::Exact => {
            let probs = exact_click_probabilities(inputs, &mut warnings)?;
            let d = dead_slots(inputs.dead_time_ps, r) as f64;
            let dead_s = inputs.dead_time_ps as f64 * 1e-12;
            let alive = probs.singles.map(|p| 1.0 / (1.0 + d * p + dark * dead_s));
            let mut signal = probs.map(|p| r * p);
            for (i, a) in alive.iter().enumerate() {
                signal.singles[i] *= a;
            }
            for (slot, pair) in signal.pairs.iter_mut().zip(DetectorPair::ALL) {
                *slot *= alive[pair.0.index()] * alive[pair.1.index()];
            }
            for (slot, triple) in signal.triples.iter_mut().zip(DetectorTriple::ALL) {
                *slot *= triple.0.iter().map(|d| alive[d.index()]).product::<f64>();
            }
            (signal, alive)
        }
    };

    let dark_singles = alive.map(|a| dark * a);
    let mut rates = signal;
    for (i, k) in dark_singles.iter().enumerate() {
        rates.singles[i] += k;
    }
    let neighbours = match order {
        PredictionOrder::Leading => 0.0,
        PredictionOrder::Exact => window_neighbours(inputs.window_ps, r),
    };
    for (slot, pair) in rates.pairs.iter_mut().zip(DetectorPair::ALL) {
        let (x, y) = (pair.0.index(), pair.1.index());
        let (sx, sy) = (signal.singles[x], signal.singles[y]);
        let (kx, ky) = (dark_singles[x], dark_singles[y]);
        *slot += 2.0 * window_s * (kx * sy + sx * ky + kx * ky) + 2.0 * neighbours * sx * sy / r;
    }
    Ok(RatePrediction { rates, warnings })
}

/// One block of the reference measurement: per-second singles, the four
/// tabulated pairs and the four triples at a given mean photon number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Block {
    pub mean_photon_number: f64,
    pub singles: [f64; 4],
    /// In [`DetectorPair::TABLE1`] order.
    pub pairs: [f64; 4],
    /// In [`DetectorTriple::ALL`] order.
    pub triples: [f64; 4],
}

pub const TABLE1_BLOCK1: Table1Block = Table1Block {
    mean_photon_number: 0.022,
    singles: [250877.8, 250259.1, 250441.5, 250316.4],
    pairs: [808.72, 803.51, 798.81, 800.58],
    triples: [2.69, 2.25, 2.18, 2.1],
};

pub const TABLE1_BLOCK2: Table1Block = Table1Block {
    mean_photon_number: 0.044,
    singles: [508592.1, 507361.8, 502778.7, 504008.3],
    pairs: [3440.36, 3497.19, 3483.59, 3478.35],
    triples: [16.17, 16.13, 16.53, 16.36],
};

impl Table1Block {
    /// Every tabulated counter with its value, in table order.
    pub fn observations(&self) -> Vec<(Counter, f64)> {
        let singles = DetectorId::ALL
            .into_iter()
            .map(Counter::Single)
            .zip(self.singles);
        let pairs = DetectorPair::TABLE1
            .into_iter()
            .map(Counter::Pair)
            .zip(self.pairs);
        let triples = DetectorTriple::ALL
            .into_iter()
            .map(Counter::Triple)
            .zip(self.triples);
        singles.chain(pairs).chain(triples).collect()
    }

    pub fn class_mean(&self, class: CounterClass) -> f64 {
        let values = match class {
            CounterClass::Singles => &self.singles,
            CounterClass::Pairs => &self.pairs,
            CounterClass::Triples => &self.triples,
        };
        values.iter().sum::<f64>() / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub counter: String,
    pub observed: f64,
    pub predicted: f64,
    /// `(predicted - observed) / observed`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub model: String,
    pub mean_photon_number: f64,
    pub slot_rate: f64,
    pub efficiency: f64,
    pub anchors: [String; 2],
    pub residuals: Vec<Residual>,
}

impl CalibrationResult {
    pub fn residual(&self, counter: Counter) -> Option<&Residual> {
        let name = counter.name();
        self.residuals.iter().find(|r| r.counter == name)
    }
}

/// Fits slot rate and efficiency from the first singles and first pair
/// observation using the leading-order relations
/// `single = R n eta P1` and `pair = R n^2/2 eta^2 P2`. Every observation
/// then gets a residual against the fitted leading-order prediction.
pub fn calibrate(
    observations: &[(Counter, f64)],
    mean_photon_number: f64,
    model: RoutingModel,
) -> Result<CalibrationResult, StatsError> {
    let single = observations
        .iter()
        .find(|(c, _)| matches!(c, Counter::Single(_)));
    let pair = observations
        .iter()
        .find(|(c, _)| matches!(c, Counter::Pair(_)));
    let (Some(&(single_counter, single_rate)), Some(&(pair_counter, pair_rate))) = (single, pair)
    else {
        return Err(StatsError::MissingTargets);
    };
    let landing = landing_probabilities(model)?;
    let p1 = landing.get(single_counter);
    let p2 = landing.get(pair_counter);
    if p2 == 0.0 {
        return Err(StatsError::DegenerateAnchor(pair_counter.name()));
    }
    let n = mean_photon_number;
    let efficiency = 2.0 * p1 * pair_rate / (n * p2 * single_rate);
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(StatsError::InconsistentEfficiency { efficiency });
    }
    let slot_rate = single_rate / (n * efficiency * p1);

    let prediction = predicted_rates(
        &RateInputs {
            model,
            mean_photon_number: n,
            slot_rate,
            efficiency,
            dark_rate: 0.0,
            window_ps: 1,
            dead_time_ps: 0,
        },
        PredictionOrder::Leading,
    )?;
    let residuals = observations
        .iter()
        .map(|&(counter, observed)| {
            let predicted = prediction.rates.get(counter);
            Residual {
                counter: counter.name(),
                observed,
                predicted,
                relative_error: (predicted - observed) / observed,
            }
        })
        .collect();
    Ok(CalibrationResult {
        model: model.name().to_string(),
        mean_photon_number: n,
        slot_rate,
        efficiency,
        anchors: [single_counter.name(), pair_counter.name()],
        residuals,
    })
}

/// Zero-delay correlation summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    /// Correlation between "some A detector clicked" and "some B detector
    /// clicked" in the same coincidence window.
    pub g2_cross: f64,
    /// Correlation between the two detectors of each side, pooled.
    pub g2_same: f64,
    /// Fraction of photon pairs leaving the first splitter through a single
    /// port. Same-side pairs are counted twice, since half of them land on
    /// one detector and register as a single click.
    pub bunching_fraction: Option<f64>,
    /// Raw share of same-side pairs among all six pair counters.
    pub same_side_pair_fraction: Option<f64>,
}

impl CorrelationResult {
    /// Named values, in report order.
    pub fn quantities(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("g2_cross", Some(self.g2_cross)),
            ("g2_same", Some(self.g2_same)),
            ("bunching_fraction", self.bunching_fraction),
            ("same_side_pair_fraction", self.same_side_pair_fraction),
        ]
    }
}

/// Independent coincidence trials per second: one per slot, shared between
/// slots close enough to fall inside one window.
pub fn trials_per_second(slot_rate: f64, window_ps: u64) -> f64 {
    slot_rate / (1.0 + 2.0 * window_neighbours(window_ps, slot_rate))
}

/// Correlation estimates from counter values over `trials` coincidence
/// trials. Works on counts or on rates, as long as both are consistent.
pub fn correlation_from_counts(
    counts: &CounterSet<f64>,
    trials: f64,
) -> Result<CorrelationResult, StatsError> {
    use DetectorId::*;
    let s = |d: DetectorId| counts.singles[d.index()];
    if DetectorId::ALL.into_iter().any(|d| s(d) <= 0.0) {
        return Err(StatsError::Undefined("a detector has no singles"));
    }
    let pair = |a, b| counts.pair(a, b);
    let a_side = s(APrime) + s(ADoublePrime) - pair(APrime, ADoublePrime);
    let b_side = s(BPrime) + s(BDoublePrime) - pair(BPrime, BDoublePrime);
    let cross_pairs: f64 = DetectorPair::ALL
        .iter()
        .filter(|p| !p.is_same_side())
        .map(|p| counts.pairs[p.index()])
        .sum();
    let both_sides = cross_pairs - counts.triples.iter().sum::<f64>();
    let g2_cross = both_sides * trials / (a_side * b_side);

    let same_pairs = pair(APrime, ADoublePrime) + pair(BPrime, BDoublePrime);
    let g2_same = same_pairs * trials / (s(APrime) * s(ADoublePrime) + s(BPrime) * s(BDoublePrime));

    let all_pairs = same_pairs + cross_pairs;
    let (bunching_fraction, same_side_pair_fraction) = if all_pairs > 0.0 {
        (
            Some(2.0 * same_pairs / (2.0 * same_pairs + cross_pairs)),
            Some(same_pairs / all_pairs),
        )
    } else {
        (None, None)
    };
    Ok(CorrelationResult {
        g2_cross,
        g2_same,
        bunching_fraction,
        same_side_pair_fraction,
    })
}

pub fn g2_zero(
    tally: &TallyTable,
    slot_rate: f64,
    cfg: &CcuConfig,
) -> Result<CorrelationResult, StatsError> {
    let trials = tally.acquisition_s * trials_per_second(slot_rate, cfg.window_ps);
    correlation_from_counts(&tally.counts.map(|c| c as f64), trials)
}

/// High-to-low ratio and fitted power-law exponent for one counter class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScaling {
    pub ratio: f64,
    pub exponent: f64,
    pub counters_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingExponents {
    pub singles: Option<ClassScaling>,
    pub pairs: Option<ClassScaling>,
    pub triples: Option<ClassScaling>,
}

impl ScalingExponents {
    pub fn class(&self, class: CounterClass) -> Option<ClassScaling> {
        match class {
            CounterClass::Singles => self.singles,
            CounterClass::Pairs => self.pairs,
            CounterClass::Triples => self.triples,
        }
    }
}

/// Power-law exponents from per-second rates at two mean photon numbers.
/// Each class pools the counters present in both inputs.
pub fn scaling_from_rates(
    low: &[(Counter, f64)],
    high: &[(Counter, f64)],
    mean_low: f64,
    mean_high: f64,
) -> Result<ScalingExponents, StatsError> {
    if mean_low == mean_high {
        return Err(StatsError::SameMeanPhotonNumber(mean_low));
    }
    let fit = |class: CounterClass| {
        let (mut sum_low, mut sum_high, mut used) = (0.0, 0.0, 0);
        for &(counter, lo) in low.iter().filter(|(c, _)| c.class() == class) {
            if let Some(&(_, hi)) = high.iter().find(|(c, _)| *c == counter) {
                sum_low += lo;
                sum_high += hi;
                used += 1;
            }
        }
        (used > 0 && sum_low > 0.0).then(|| {
            let ratio = sum_high / sum_low;
            ClassScaling {
                ratio,
                exponent: ratio.ln() / (mean_high / mean_low).ln(),
                counters_used: used,
            }
        })
    };
    Ok(ScalingExponents {
        singles: fit(CounterClass::Singles),
        pairs: fit(CounterClass::Pairs),
        triples: fit(CounterClass::Triples),
    })
}

/// Exponents from two simulated tallies; counters with fewer than
/// [`MIN_SCALING_COUNTS`] events in either tally are left out.
pub fn scaling_check(low: &TallyTable, high: &TallyTable) -> Result<ScalingExponents, StatsError> {
    let mean_low = low
        .metadata
        .mean_photon_number
        .ok_or(StatsError::MissingMeanPhotonNumber)?;
    let mean_high = high
        .metadata
        .mean_photon_number
        .ok_or(StatsError::MissingMeanPhotonNumber)?;
    let usable =
        |c: Counter| low.count(c) >= MIN_SCALING_COUNTS && high.count(c) >= MIN_SCALING_COUNTS;
    let rates = |t: &TallyTable| -> Vec<(Counter, f64)> {
        Counter::all()
            .filter(|&c| usable(c))
            .map(|c| (c, t.rate(c)))
            .collect()
    };
    scaling_from_rates(&rates(low), &rates(high), mean_low, mean_high)
}

/// Pearson chi-square test that all counts share one mean. Returns the
/// statistic and its p-value.
pub fn chi_square_equal(counts: &[f64]) -> (f64, f64) {
    let k = counts.len();
    if k < 2 {
        return (0.0, 1.0);
    }
    let mean = counts.iter().sum::<f64>() / k as f64;
    if mean <= 0.0 {
        return (0.0, 1.0);
    }
    let stat: f64 = counts.iter().map(|c| (c - mean).powi(2) / mean).sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    (stat, dist.sf(stat))
}

/// Standard score of the difference of two Poisson counts.
pub fn poisson_z(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        (a - b) / (a + b).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DetectorId::*;

    fn inputs(model: RoutingModel) -> RateInputs {
        RateInputs {
            model,
            mean_photon_number: 0.022,
            slot_rate: 7.78e7,
            efficiency: 0.586,
            dark_rate: 0.0,
            window_ps: 5000,
            dead_time_ps: 0,
        }
    }

    #[test]
    fn pair_landing_probabilities() {
        let classical = landing_probabilities(RoutingModel::ClassicalIndependent).unwrap();
        for p in classical.pairs {
            assert!((p - 0.125).abs() < 1e-12);
        }
        // Remaining two-photon mass is both photons on one detector.
        let collisions: f64 = detector_occupancy(RoutingModel::ClassicalIndependent, 2)
            .unwrap()
            .iter()
            .filter(|(c, _)| c.contains(&2))
            .map(|(_, p)| p)
            .sum();
        assert!((classical.pairs.iter().sum::<f64>() + collisions - 1.0).abs() < 1e-12);

        let bunching = landing_probabilities(RoutingModel::PureBunching).unwrap();
        assert_eq!(bunching.pair(APrime, BPrime), 0.0);
        assert!((bunching.pair(APrime, ADoublePrime) - 0.25).abs() < 1e-12);

        let phase = landing_probabilities(RoutingModel::PhaseBasisSuperposition).unwrap();
        assert_eq!(phase, classical);
        for p in classical.singles {
            assert!((p - 0.25).abs() < 1e-12);
        }
        for p in classical.triples {
            assert!((p - 3.0 / 32.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupancy_normalised() {
        for model in RoutingModel::ALL {
            for n in 0..=6 {
                let occ = detector_occupancy(model, n).unwrap();
                assert!((occ.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(occ.iter().all(|(c, _)| c.iter().sum::<u32>() == n));
            }
        }
    }

    #[test]
    fn leading_rates_at_reference_calibration() {
        let pred = predicted_rates(
            &inputs(RoutingModel::PhaseBasisSuperposition),
            PredictionOrder::Leading,
        )
        .unwrap();
        assert!(
            (pred.singles_per_detector() - 2.51e5).abs() < 0.005e5,
            "{}",
            pred.singles_per_detector()
        );
        for p in DetectorPair::TABLE1 {
            let rate = pred.rates.pairs[p.index()];
            assert!((rate - 810.0).abs() < 10.0, "{rate}");
        }
        for t in pred.rates.triples {
            assert!((t - 2.6).abs() < 0.05, "{t}");
        }
        assert!(pred.warnings.is_empty());
    }

    #[test]
    fn bunching_has_no_cross_pairs() {
        let pred =
            predicted_rates(&inputs(RoutingModel::PureBunching), PredictionOrder::Exact).unwrap();
        for p in DetectorPair::ALL.iter().filter(|p| !p.is_same_side()) {
            assert_eq!(pred.rates.pairs[p.index()], 0.0);
        }
        assert!(pred.rates.triples.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn equal_pairs_for_classical_and_phase_basis() {
        for model in [
            RoutingModel::ClassicalIndependent,
            RoutingModel::PhaseBasisSuperposition,
        ] {
            for order in [PredictionOrder::Leading, PredictionOrder::Exact] {
                let pred = predicted_rates(&inputs(model), order).unwrap();
                let first = pred.rates.pairs[0];
                assert!(pred
                    .rates
                    .pairs
                    .iter()
                    .all(|p| (p - first).abs() < 1e-9 * first));
            }
        }
    }

    #[test]
    fn exact_approaches_leading_for_weak_beams() {
        let mut i = inputs(RoutingModel::ClassicalIndependent);
        i.mean_photon_number = 1e-4;
        let lead = predicted_rates(&i, PredictionOrder::Leading).unwrap().rates;
        let exact = predicted_rates(&i, PredictionOrder::Exact).unwrap().rates;
        for (c, v) in lead.iter() {
            assert!((exact.get(c) / v - 1.0).abs() < 1e-3, "{c}");
        }
    }

    #[test]
    fn strong_beam_warns() {
        let mut i = inputs(RoutingModel::ClassicalIndependent);
        i.mean_photon_number = 0.5;
        assert!(!predicted_rates(&i, PredictionOrder::Leading)
            .unwrap()
            .warnings
            .is_empty());
    }

    #[test]
    fn dark_accidentals() {
        let mut i = inputs(RoutingModel::ClassicalIndependent);
        i.mean_photon_number = 0.0;
        i.dark_rate = 27.0;
        let pred = predicted_rates(&i, PredictionOrder::Leading).unwrap();
        assert_eq!(pred.rates.singles, [27.0; 4]);
        let expected = 2.0 * 5e-9 * 27.0 * 27.0;
        assert!(pred
            .rates
            .pairs
            .iter()
            .all(|p| (p - expected).abs() < 1e-15));
    }

    #[test]
    fn dead_slot_count() {
        assert_eq!(dead_slots(22_000, 7.78e7), 1);
        assert_eq!(dead_slots(0, 7.78e7), 0);
        assert_eq!(dead_slots(10_000, 1e8), 0);
        assert_eq!(dead_slots(10_001, 1e8), 1);
    }

    #[test]
    fn calibrate_block1() {
        let cal = calibrate(
            &TABLE1_BLOCK1.observations(),
            0.022,
            RoutingModel::PhaseBasisSuperposition,
        )
        .unwrap();
        assert!((cal.efficiency - 0.586).abs() < 0.001, "{}", cal.efficiency);
        assert!(
            (cal.slot_rate / 7.78e7 - 1.0).abs() < 0.002,
            "{}",
            cal.slot_rate
        );
        // Anchors round-trip exactly.
        for anchor in [Counter::Single(APrime), Counter::Pair(DetectorPair::ALL[0])] {
            assert!(cal.residual(anchor).unwrap().relative_error.abs() < 1e-12);
        }
        for r in &cal.residuals {
            assert!(
                r.relative_error.abs() < 0.25,
                "{}: {}",
                r.counter,
                r.relative_error
            );
        }
        for t in DetectorTriple::ALL {
            let r = cal.residual(Counter::Triple(t)).unwrap();
            assert!((r.predicted - 2.6).abs() < 0.05);
        }
    }

    #[test]
    fn calibrate_block2_is_consistent_with_block1() {
        let one = calibrate(
            &TABLE1_BLOCK1.observations(),
            0.022,
            RoutingModel::PhaseBasisSuperposition,
        )
        .unwrap();
        let two = calibrate(
            &TABLE1_BLOCK2.observations(),
            0.044,
            RoutingModel::PhaseBasisSuperposition,
        )
        .unwrap();
        assert!((two.efficiency / one.efficiency - 1.0).abs() < 0.15);
        assert!((two.slot_rate / one.slot_rate - 1.0).abs() < 0.15);
    }

    #[test]
    fn calibrate_errors() {
        let only_singles = [(Counter::Single(APrime), 1.0)];
        assert_eq!(
            calibrate(&only_singles, 0.022, RoutingModel::ClassicalIndependent),
            Err(StatsError::MissingTargets)
        );
        let impossible = [
            (Counter::Single(APrime), 1000.0),
            (Counter::Pair(DetectorPair::ALL[0]), 900.0),
        ];
        assert!(matches!(
            calibrate(&impossible, 0.022, RoutingModel::ClassicalIndependent),
            Err(StatsError::InconsistentEfficiency { .. })
        ));
        let cross = [
            (Counter::Single(APrime), 1000.0),
            (Counter::Pair(DetectorPair(APrime, BPrime)), 1.0),
        ];
        assert!(matches!(
            calibrate(&cross, 0.022, RoutingModel::PureBunching),
            Err(StatsError::DegenerateAnchor(_))
        ));
    }

    #[test]
    fn reference_table_scaling() {
        let s = scaling_from_rates(
            &TABLE1_BLOCK1.observations(),
            &TABLE1_BLOCK2.observations(),
            0.022,
            0.044,
        )
        .unwrap();
        let singles = s.singles.unwrap();
        // Block means 505685.2 / 250473.7.
        assert!((singles.ratio - 2.0189).abs() < 1e-3, "{}", singles.ratio);
        assert!((singles.exponent - 1.014).abs() < 0.005);
        let pairs = s.pairs.unwrap();
        assert!((pairs.exponent - 2.11).abs() < 0.01, "{}", pairs.exponent);
        assert!(s.triples.unwrap().ratio > 7.0);
    }

    #[test]
    fn correlation_of_ideal_patterns() {
        // Independent detectors: each clicks with p per trial.
        let trials = 1e9;
        let p: f64 = 1e-3;
        let mut counts = CounterSet {
            singles: [p * trials; 4],
            pairs: [p * p * trials; 6],
            triples: [p * p * p * trials; 4],
        };
        let c = correlation_from_counts(&counts, trials).unwrap();
        assert!((c.g2_same - 1.0).abs() < 1e-12);
        assert!((c.g2_cross - 1.0).abs() < 1e-2, "{}", c.g2_cross);
        assert!((c.bunching_fraction.unwrap() - 0.5).abs() < 1e-12);
        assert!((c.same_side_pair_fraction.unwrap() - 1.0 / 3.0).abs() < 1e-12);

        // Only same-side pairs.
        counts.pairs = [5.0, 5.0, 0.0, 0.0, 0.0, 0.0];
        counts.triples = [0.0; 4];
        let c = correlation_from_counts(&counts, trials).unwrap();
        assert_eq!(c.g2_cross, 0.0);
        assert_eq!(c.bunching_fraction, Some(1.0));

        counts.singles[2] = 0.0;
        assert!(matches!(
            correlation_from_counts(&counts, trials),
            Err(StatsError::Undefined(_))
        ));
    }

    #[test]
    fn chi_square() {
        let (stat, p) = chi_square_equal(&[800.0, 800.0, 800.0, 800.0]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        // chi2 = 7.815 is the 95% point for 3 degrees of freedom.
        let d = (7.815f64 * 50.0).sqrt();
        let (stat, p) = chi_square_equal(&[100.0 + d, 100.0 - d, 100.0, 100.0]);
        assert!((stat - 7.815).abs() < 1e-9);
        assert!((p - 0.05).abs() < 1e-3, "{p}");
    }

    #[test]
    fn trials_account_for_window_neighbours() {
        assert_eq!(trials_per_second(7.78e7, 5000), 7.78e7);
        assert_eq!(trials_per_second(1e9, 2500), 1e9 / 5.0);
    }
}
