//! First-splitter routing: how the photons of one slot divide between the
//! two output ports.
//!
//! Three models are provided:
//!
//! * `ClassicalIndependent` - each photon picks a port by a fair coin.
//! * `PhaseBasisSuperposition` - each photon of a pair independently sees one
//!   of the two splitter phase bases. Opposite bases send the whole pair out
//!   of one port, same bases split it evenly; the four combinations are
//!   equally likely. Single photons follow the Born rule for a randomly chosen
//!   basis. Three or more photons fall back to independent coin flips.
//! * `PureBunching` - every multi-photon slot leaves through a single port.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::algebra::{
    apply, apply_same_basis, bs_matrix, intensity, superpose_opposite, Combination, Complex,
    IntensityPair, PhaseBasis, PortAmplitudes,
};

/// Largest photon number [`enumerate_distribution`] will expand.
pub const ENUMERATION_LIMIT: u32 = 12;

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("photon number {0} exceeds the enumeration limit of {ENUMERATION_LIMIT}")]
    TooManyPhotons(u32),
    #[error("unknown routing model '{0}' (expected classical, phase-basis or bunching)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoutingModel {
    ClassicalIndependent,
    PhaseBasisSuperposition,
    PureBunching,
}

impl RoutingModel {
    pub const ALL: [RoutingModel; 3] = [
        RoutingModel::ClassicalIndependent,
        RoutingModel::PhaseBasisSuperposition,
        RoutingModel::PureBunching,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoutingModel::ClassicalIndependent => "classical",
            RoutingModel::PhaseBasisSuperposition => "phase-basis",
            RoutingModel::PureBunching => "bunching",
        }
    }

    /// Whether `n` photons are routed by the binomial fallback rather than
    /// the model's own rule.
    pub fn uses_fallback(self, n: u32) -> bool {
        self == RoutingModel::PhaseBasisSuperposition && n >= 3
    }
}

impl fmt::Display for RoutingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoutingModel {
    type Err = RoutingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classical" => Ok(RoutingModel::ClassicalIndependent),
            "phase-basis" => Ok(RoutingModel::PhaseBasisSuperposition),
            "bunching" => Ok(RoutingModel::PureBunching),
            other => Err(RoutingError::UnknownModel(other.to_string())),
        }
    }
}

/// Photons leaving each output port of the first splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortOccupancy {
    pub port1: u32,
    pub port2: u32,
}

impl PortOccupancy {
    pub fn new(port1: u32, port2: u32) -> Self {
        Self { port1, port2 }
    }

    pub fn total(&self) -> u32 {
        self.port1 + self.port2
    }
}

/// Exact probabilities of each occupancy for a fixed photon number.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeDistribution {
    probabilities: BTreeMap<PortOccupancy, f64>,
}

impl OutcomeDistribution {
    fn add(&mut self, outcome: PortOccupancy, p: f64) {
        *self.probabilities.entry(outcome).or_insert(0.0) += p;
    }

    pub fn probability(&self, port1: u32, port2: u32) -> f64 {
        self.probabilities
            .get(&PortOccupancy::new(port1, port2))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PortOccupancy, f64)> + '_ {
        self.probabilities.iter().map(|(k, v)| (*k, *v))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

fn occupancy_from_intensity(i: IntensityPair) -> PortOccupancy {
    PortOccupancy::new(i.i1.round() as u32, i.i2.round() as u32)
}

fn random_basis<R: Rng + ?Sized>(rng: &mut R) -> PhaseBasis {
    if rng.random::<bool>() {
        PhaseBasis::Plus
    } else {
        PhaseBasis::Minus
    }
}

/// Amplitudes of a photon pair given the basis each photon sees.
fn pair_amplitudes(first: PhaseBasis, second: PhaseBasis, phase: f64) -> PortAmplitudes {
    let e0 = Complex::from_polar(1.0, phase);
    match (first, second) {
        (PhaseBasis::Plus, PhaseBasis::Minus) => {
            superpose_opposite(&PortAmplitudes::single_port(e0), Combination::Symmetric)
        }
        (PhaseBasis::Minus, PhaseBasis::Plus) => {
            superpose_opposite(&PortAmplitudes::single_port(e0), Combination::Antisymmetric)
        }
        (same, _) => apply_same_basis(e0 * std::f64::consts::SQRT_2, same),
    }
}

/// Probability that a single photon of the given phase leaves port 1.
fn single_photon_port1(basis: PhaseBasis, phase: f64) -> f64 {
    let input = PortAmplitudes::single_port(Complex::from_polar(1.0, phase));
    let out = apply(&bs_matrix(basis), &input).expect("basis matrices are unitary");
    let i = intensity(&out);
    i.i1 / i.total()
}

fn binomial_route<R: Rng + ?Sized>(n: u32, rng: &mut R) -> PortOccupancy {
    let port1 = (0..n).filter(|_| rng.random::<bool>()).count() as u32;
    PortOccupancy::new(port1, n - port1)
}

/// Samples the port occupancy of `n` photons with zero global phase.
pub fn route<R: Rng + ?Sized>(model: RoutingModel, n: u32, rng: &mut R) -> PortOccupancy {
    route_coherent(model, n, 0.0, rng)
}

/// Samples the port occupancy of a slot carrying `n` photons of common
/// global phase `phase`. The phase enters the amplitudes of the
/// phase-basis model but cannot change any intensity.
pub fn route_coherent<R: Rng + ?Sized>(
    model: RoutingModel,
    n: u32,
    phase: f64,
    rng: &mut R,
) -> PortOccupancy {
    match (model, n) {
        (_, 0) => PortOccupancy::new(0, 0),
        (RoutingModel::ClassicalIndependent, _) => binomial_route(n, rng),
        (RoutingModel::PureBunching, 1) => binomial_route(1, rng),
        (RoutingModel::PureBunching, _) => {
            if rng.random::<bool>() {
                PortOccupancy::new(n, 0)
            } else {
                PortOccupancy::new(0, n)
            }
        }
        (RoutingModel::PhaseBasisSuperposition, 1) => {
            let p1 = single_photon_port1(random_basis(rng), phase);
            if rng.random::<f64>() < p1 {
                PortOccupancy::new(1, 0)
            } else {
                PortOccupancy::new(0, 1)
            }
        }
        (RoutingModel::PhaseBasisSuperposition, 2) => {
            let first = random_basis(rng);
            let second = random_basis(rng);
            occupancy_from_intensity(intensity(&pair_amplitudes(first, second, phase)))
        }
        (RoutingModel::PhaseBasisSuperposition, _) => binomial_route(n, rng),
    }
}

fn enumerate_binomial(n: u32) -> OutcomeDistribution {
    let mut dist = OutcomeDistribution::default();
    let weight = 0.5f64.powi(n as i32);
    for mask in 0u32..(1 << n) {
        let port1 = mask.count_ones();
        dist.add(PortOccupancy::new(port1, n - port1), weight);
    }
    dist
}

/// Exact occupancy distribution of `n` photons, by exhaustive enumeration of
/// every elementary choice the model makes.
pub fn enumerate_distribution(
    model: RoutingModel,
    n: u32,
) -> Result<OutcomeDistribution, RoutingError> {
    if n > ENUMERATION_LIMIT {
        return Err(RoutingError::TooManyPhotons(n));
    }
    let mut dist = OutcomeDistribution::default();
    match (model, n) {
        (_, 0) => dist.add(PortOccupancy::new(0, 0), 1.0),
        (RoutingModel::ClassicalIndependent, _) | (RoutingModel::PureBunching, 1) => {
            return Ok(enumerate_binomial(n))
        }
        (RoutingModel::PureBunching, _) => {
            dist.add(PortOccupancy::new(n, 0), 0.5);
            dist.add(PortOccupancy::new(0, n), 0.5);
        }
        (RoutingModel::PhaseBasisSuperposition, 1) => {
            for basis in PhaseBasis::ALL {
                let p1 = single_photon_port1(basis, 0.0);
                dist.add(PortOccupancy::new(1, 0), 0.5 * p1);
                dist.add(PortOccupancy::new(0, 1), 0.5 * (1.0 - p1));
            }
        }
        (RoutingModel::PhaseBasisSuperposition, 2) => {
            for first in PhaseBasis::ALL {
                for second in PhaseBasis::ALL {
                    let out = intensity(&pair_amplitudes(first, second, 0.0));
                    dist.add(occupancy_from_intensity(out), 0.25);
                }
            }
        }
        (RoutingModel::PhaseBasisSuperposition, _) => return Ok(enumerate_binomial(n)),
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_dist(dist: &OutcomeDistribution, expected: &[((u32, u32), f64)]) {
        assert_eq!(dist.len(), expected.len(), "{dist:?}");
        for &((a, b), p) in expected {
            assert!(
                (dist.probability(a, b) - p).abs() < 1e-12,
                "({a},{b}) in {dist:?}"
            );
        }
    }

    #[test]
    fn photon_pairs() {
        let split = [((2, 0), 0.25), ((1, 1), 0.5), ((0, 2), 0.25)];
        assert_dist(
            &enumerate_distribution(RoutingModel::PhaseBasisSuperposition, 2).unwrap(),
            &split,
        );
        assert_dist(
            &enumerate_distribution(RoutingModel::ClassicalIndependent, 2).unwrap(),
            &split,
        );
        assert_dist(
            &enumerate_distribution(RoutingModel::PureBunching, 2).unwrap(),
            &[((2, 0), 0.5), ((0, 2), 0.5)],
        );
    }

    #[test]
    fn single_photons_split_evenly() {
        for model in RoutingModel::ALL {
            assert_dist(
                &enumerate_distribution(model, 1).unwrap(),
                &[((1, 0), 0.5), ((0, 1), 0.5)],
            );
        }
    }

    #[test]
    fn three_photons_and_vacuum() {
        assert_dist(
            &enumerate_distribution(RoutingModel::ClassicalIndependent, 3).unwrap(),
            &[
                ((3, 0), 0.125),
                ((2, 1), 0.375),
                ((1, 2), 0.375),
                ((0, 3), 0.125),
            ],
        );
        assert_dist(
            &enumerate_distribution(RoutingModel::PureBunching, 3).unwrap(),
            &[((3, 0), 0.5), ((0, 3), 0.5)],
        );
        for model in RoutingModel::ALL {
            assert_dist(&enumerate_distribution(model, 0).unwrap(), &[((0, 0), 1.0)]);
        }
    }

    #[test]
    fn enumeration_bound() {
        assert!(enumerate_distribution(RoutingModel::ClassicalIndependent, 12).is_ok());
        assert_eq!(
            enumerate_distribution(RoutingModel::ClassicalIndependent, 13),
            Err(RoutingError::TooManyPhotons(13))
        );
    }

    #[test]
    fn distributions_normalised_and_conserving() {
        for model in RoutingModel::ALL {
            for n in 0..=ENUMERATION_LIMIT {
                let dist = enumerate_distribution(model, n).unwrap();
                assert!((dist.total() - 1.0).abs() < 1e-12);
                assert!(dist.iter().all(|(o, _)| o.total() == n));
            }
        }
    }

    #[test]
    fn model_names_round_trip() {
        for model in RoutingModel::ALL {
            assert_eq!(model.name().parse::<RoutingModel>().unwrap(), model);
        }
        assert!(matches!(
            "hom".parse::<RoutingModel>(),
            Err(RoutingError::UnknownModel(_))
        ));
    }

    #[test]
    fn global_phase_does_not_change_routing() {
        // Same RNG draws with different phases must give identical occupancies.
        for n in 0..5 {
            let mut a = ChaCha8Rng::seed_from_u64(n as u64);
            let mut b = ChaCha8Rng::seed_from_u64(n as u64);
            for k in 0..2000 {
                let phase = k as f64 * 0.37;
                assert_eq!(
                    route_coherent(RoutingModel::PhaseBasisSuperposition, n, phase, &mut a),
                    route(RoutingModel::PhaseBasisSuperposition, n, &mut b)
                );
            }
        }
    }

    #[test]
    fn pure_bunching_never_mixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..8 {
            for _ in 0..1000 {
                let o = route(RoutingModel::PureBunching, n, &mut rng);
                assert!(o.port1 == 0 || o.port2 == 0);
                assert_eq!(o.total(), n);
            }
        }
    }
}
