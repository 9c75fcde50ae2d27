//! Attenuated CW laser as a stream of discrete time slots.
//!
//! Each slot carries a Poisson-distributed photon number. At the mean photon
//! numbers of interest (a few percent) almost every slot is empty, so the
//! stream is generated by jumping directly from one occupied slot to the next:
//! the number of empty slots before an occupied one is geometric with
//! parameter `1 - exp(-mean)`, which is `floor(E / mean)` for a unit
//! exponential `E`. The photon number of an occupied slot is then drawn by
//! inverting the zero-truncated Poisson CDF. The result is distributed exactly
//! as slot-by-slot Poisson sampling.

use std::f64::consts::TAU;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{counter_uniform, substream, Purpose};

/// Slots per generation chunk. Chunks are the unit of parallel work and of
/// RNG substream derivation.
pub const CHUNK_SLOTS: u64 = 1 << 20;

/// Largest slot count whose timestamps stay exactly representable.
const MAX_SLOTS: f64 = (1u64 << 53) as f64;

pub const PICOS_PER_SECOND: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("mean_photon_number must be finite and >= 0, got {0}")]
    MeanPhotonNumber(f64),
    #[error("slot_rate must be finite and > 0, got {0}")]
    SlotRate(f64),
    #[error("duration must be finite and > 0, got {0}")]
    Duration(f64),
    #[error("slot count {0:.3e} is too large to index")]
    SlotCountOverflow(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Mean photons per slot.
    pub mean_photon_number: f64,
    /// Slots per second.
    pub slot_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SourceError> {
        if !self.mean_photon_number.is_finite() || self.mean_photon_number < 0.0 {
            return Err(SourceError::MeanPhotonNumber(self.mean_photon_number));
        }
        if !self.slot_rate.is_finite() || self.slot_rate <= 0.0 {
            return Err(SourceError::SlotRate(self.slot_rate));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(SourceError::Duration(self.duration));
        }
        Ok(())
    }

    /// `floor(duration * slot_rate)`.
    pub fn slot_count(&self) -> Result<u64, SourceError> {
        self.validate()?;
        let slots = (self.duration * self.slot_rate).floor();
        if !slots.is_finite() || slots >= MAX_SLOTS {
            return Err(SourceError::SlotCountOverflow(slots));
        }
        Ok(slots as u64)
    }

    pub fn slot_period_ps(&self) -> f64 {
        PICOS_PER_SECOND / self.slot_rate
    }

    pub fn slot_time_ps(&self, index: u64) -> u64 {
        (index as f64 * self.slot_period_ps()).round() as u64
    }

    pub fn duration_ps(&self) -> u64 {
        (self.duration * PICOS_PER_SECOND).round() as u64
    }
}

/// One source time slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonSlot {
    pub index: u64,
    pub n_photons: u32,
    /// Radians in `[0, 2 pi)`.
    pub global_phase: f64,
}

/// Poisson inversion: smallest `k` with `CDF(k) > u`.
pub fn poisson_inverse(mean: f64, u: f64) -> u32 {
    let mut k = 0u32;
    let mut term = (-mean).exp();
    let mut cdf = term;
    while u >= cdf {
        k += 1;
        term *= mean / k as f64;
        if term == 0.0 {
            break;
        }
        cdf += term;
    }
    k
}

/// Inversion of the Poisson distribution conditioned on `k >= 1`.
pub fn zero_truncated_poisson_inverse(mean: f64, u: f64) -> u32 {
    let occupied = -(-mean).exp_m1();
    let mut k = 1u32;
    let mut term = mean * (-mean).exp() / occupied;
    let mut cdf = term;
    while u >= cdf {
        k += 1;
        term *= mean / k as f64;
        if term == 0.0 {
            break;
        }
        cdf += term;
    }
    k
}

/// Draws a single slot by direct Poisson inversion.
pub fn sample_slot<R: Rng + ?Sized>(config: &SourceConfig, index: u64, rng: &mut R) -> PhotonSlot {
    let n_photons = poisson_inverse(config.mean_photon_number, rng.random::<f64>());
    PhotonSlot {
        index,
        n_photons,
        global_phase: TAU * rng.random::<f64>(),
    }
}

/// Global phase assigned to slot `index` of a seeded stream.
pub fn slot_phase(seed: u64, index: u64) -> f64 {
    TAU * counter_uniform(seed, index)
}

pub fn chunk_count(slot_count: u64) -> u64 {
    slot_count.div_ceil(CHUNK_SLOTS)
}

pub fn chunk_range(slot_count: u64, chunk: u64) -> Range<u64> {
    let start = chunk * CHUNK_SLOTS;
    start.min(slot_count)..(start + CHUNK_SLOTS).min(slot_count)
}

/// Occupied slots of one chunk, in index order.
pub struct ChunkSlots {
    rng: ChaCha8Rng,
    next: u64,
    end: u64,
    mean: f64,
    seed: u64,
}

impl ChunkSlots {
    pub fn new(config: &SourceConfig, slot_count: u64, chunk: u64) -> Self {
        let range = chunk_range(slot_count, chunk);
        Self {
            rng: substream(config.seed, chunk, Purpose::Source),
            next: range.start,
            end: range.end,
            mean: config.mean_photon_number,
            seed: config.seed,
        }
    }
}

impl Iterator for ChunkSlots {
    type Item = PhotonSlot;

    fn next(&mut self) -> Option<PhotonSlot> {
        if self.mean <= 0.0 || self.next >= self.end {
            return None;
        }
        let exponential = -(1.0 - self.rng.random::<f64>()).ln();
        let gap = exponential / self.mean;
        if gap >= (self.end - self.next) as f64 {
            self.next = self.end;
            return None;
        }
        let index = self.next + gap as u64;
        let n_photons = zero_truncated_poisson_inverse(self.mean, self.rng.random::<f64>());
        self.next = index + 1;
        Some(PhotonSlot {
            index,
            n_photons,
            global_phase: slot_phase(self.seed, index),
        })
    }
}

/// Occupied slots of the whole stream, generated serially.
pub fn occupied_slots(
    config: &SourceConfig,
) -> Result<impl Iterator<Item = PhotonSlot>, SourceError> {
    let slots = config.slot_count()?;
    let config = config.clone();
    Ok((0..chunk_count(slots)).flat_map(move |chunk| ChunkSlots::new(&config, slots, chunk)))
}

/// Occupied slots generated chunk-parallel on `workers` threads. The result
/// is identical to [`occupied_slots`] for any worker count.
pub fn occupied_slots_parallel(
    config: &SourceConfig,
    workers: usize,
) -> Result<Vec<PhotonSlot>, SourceError> {
    let slots = config.slot_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let per_chunk: Vec<Vec<PhotonSlot>> = pool.install(|| {
        (0..chunk_count(slots))
            .into_par_iter()
            .map(|chunk| ChunkSlots::new(config, slots, chunk).collect())
            .collect()
    });
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Every slot of the stream, empty ones included.
pub struct SlotStream {
    occupied: Box<dyn Iterator<Item = PhotonSlot> + Send>,
    pending: Option<PhotonSlot>,
    next_index: u64,
    slot_count: u64,
    seed: u64,
}

impl Iterator for SlotStream {
    type Item = PhotonSlot;

    fn next(&mut self) -> Option<PhotonSlot> {
        if self.next_index >= self.slot_count {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        if self.pending.is_none() {
            self.pending = self.occupied.next();
        }
        match self.pending {
            Some(slot) if slot.index == index => {
                self.pending = None;
                Some(slot)
            }
            _ => Some(PhotonSlot {
                index,
                n_photons: 0,
                global_phase: slot_phase(self.seed, index),
            }),
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.slot_count - self.next_index) as usize;
        (left, Some(left))
    }
}

/// The full slot sequence, `floor(duration * slot_rate)` slots long.
pub fn generate_stream(config: &SourceConfig) -> Result<SlotStream, SourceError> {
    let slot_count = config.slot_count()?;
    Ok(SlotStream {
        occupied: Box::new(occupied_slots(config)?),
        pending: None,
        next_index: 0,
        slot_count,
        seed: config.seed,
    })
}
