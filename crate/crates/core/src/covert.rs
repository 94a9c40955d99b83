//! Timing covert-channel simulation over Hamming-weight encoded words.
//!
//! A sender encodes a symbol as the Hamming weight of a fixed-length
//! secret word; each set bit steers one loop iteration through the slow
//! placement path, so execution time grows linearly with the weight. The
//! receiver decodes by nearest centroid. The cycle model is parametric
//! (base + slope * weight + Gaussian jitter); all randomness flows through
//! explicit seeds so every run is reproducible.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symbol alphabet of the channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelConfig {
    /// 1..=8: the word can encode at most 8 bits.
    pub bits_per_symbol: u8,
    /// Secret word length in bits.
    pub word_length: u32,
    /// One Hamming weight per symbol; strictly increasing, first 0, last
    /// `word_length`.
    pub level_weights: Vec<u32>,
}

/// Parametric cycle model for one transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub base_cycles: f64,
    pub cycles_per_slow_iter: f64,
    /// Gaussian jitter in cycles; 0 disables noise.
    pub noise_sigma: f64,
    pub cpu_freq_hz: f64,
}

impl Default for TimingModel {
    /// Model calibrated so a full-weight 256-bit word costs 1239 cycles on
    /// a 4 GHz core, with one extra cycle per slow iteration and about two
    /// cycles of jitter.
    fn default() -> TimingModel {
        TimingModel { base_cycles: 983.0, cycles_per_slow_iter: 1.0, noise_sigma: 2.0, cpu_freq_hz: 4.0e9 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CovertError {
    #[error("bits_per_symbol must be 1..=8, got {0}")]
    BitsOutOfRange(u8),
    #[error("too many levels: 2^{bits} - 1 exceeds word length {word_length}")]
    TooManyLevels { bits: u8, word_length: u32 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Evenly spread Hamming weights for `2^bits_per_symbol` levels.
///
/// `weight_i = round(i * word_length / (2^k - 1))`; with at least one bit
/// of word per level the rounded sequence is strictly increasing, starts
/// at 0, and ends at `word_length`.
pub fn level_weights(bits_per_symbol: u8, word_length: u32) -> Result<Vec<u32>, CovertError> {
    if !(1..=8).contains(&bits_per_symbol) {
        return Err(CovertError::BitsOutOfRange(bits_per_symbol));
    }
    let levels = 1u32 << bits_per_symbol;
    if levels - 1 > word_length {
        return Err(CovertError::TooManyLevels { bits: bits_per_symbol, word_length });
    }
    Ok((0..levels)
        .map(|i| {
            let exact = f64::from(i) * f64::from(word_length) / f64::from(levels - 1);
            exact.round() as u32
        })
        .collect())
}

pub const DEFAULT_WORD_LENGTH: u32 = 256;

impl ChannelConfig {
    pub fn new(bits_per_symbol: u8, word_length: u32) -> Result<ChannelConfig, CovertError> {
        let weights = level_weights(bits_per_symbol, word_length)?;
        Ok(ChannelConfig { bits_per_symbol, word_length, level_weights: weights })
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.bits_per_symbol
    }
}

/// Number of set bits in a packed word.
pub fn hamming_weight(word: &[u8]) -> u32 {
    word.iter().map(|b| b.count_ones()).sum()
}

/// Encode a symbol as a packed secret word of the configured weight.
///
/// Without a seed the lowest bit indices are set; with a seed the set
/// positions are drawn uniformly. Either way the popcount equals
/// `level_weights[symbol]`.
pub fn encode(config: &ChannelConfig, symbol: u32, seed: Option<u64>) -> Vec<u8> {
    assert!(symbol < config.levels(), "symbol out of range");
    let weight = config.level_weights[symbol as usize] as usize;
    let len = config.word_length.div_ceil(8) as usize;
    let mut word = vec![0u8; len];
    match seed {
        None => {
            for i in 0..weight {
                word[i / 8] |= 1 << (i % 8);
            }
        }
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in sample(&mut rng, config.word_length as usize, weight) {
                word[i / 8] |= 1 << (i % 8);
            }
        }
    }
    word
}

/// Simulated cycle count for transmitting one symbol.
///
/// `base + slope * weight + N(0, sigma)`, where the slow-iteration count
/// is the encoded word's Hamming weight (which bit value takes the slow
/// branch is irrelevant to capacity). Deterministic for a given seed.
pub fn simulate_symbol(model: &TimingModel, config: &ChannelConfig, symbol: u32, seed: u64) -> f64 {
    assert!(symbol < config.levels(), "symbol out of range");
    let weight = config.level_weights[symbol as usize];
    let mut cycles = model.base_cycles + model.cycles_per_slow_iter * f64::from(weight);
    if model.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, model.noise_sigma).expect("sigma is finite and non-negative");
        cycles += noise.sample(&mut rng);
    }
    cycles
}

/// Receiver training: mean observed cycles per symbol.
pub fn calibrate(
    model: &TimingModel,
    config: &ChannelConfig,
    samples_per_level: u32,
    seed: u64,
) -> Vec<f64> {
    assert!(samples_per_level >= 1, "calibration needs at least one sample per level");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.levels())
        .map(|symbol| {
            let total: f64 =
                (0..samples_per_level).map(|_| simulate_symbol(model, config, symbol, rng.random())).sum();
            total / f64::from(samples_per_level)
        })
        .collect()
}

/// Nearest-centroid decode; ties resolve to the lower symbol.
pub fn decode_nearest(centroids: &[f64], cycles: f64) -> u32 {
    let mut best = 0u32;
    let mut best_distance = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let distance = (cycles - c).abs();
        if distance < best_distance {
            best_distance = distance;
            best = i as u32;
        }
    }
    best
}

/// Outcome of a seeded channel run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRun {
    /// Fraction of trials whose decoded symbol mismatched the sent one.
    pub error_rate: f64,
    pub mean_symbol_cycles: f64,
    /// `bits_per_symbol * cpu_freq_hz / mean_symbol_cycles`.
    pub throughput_bps: f64,
}

const CALIBRATION_SAMPLES_PER_LEVEL: u32 = 128;

/// Run `trials` independent symbol transmissions and score the decoder.
///
/// Symbols are drawn uniformly. The receiver is first calibrated with
/// seeds derived from `seed`, so the whole run is a pure function of its
/// arguments.
pub fn run_channel(config: &ChannelConfig, model: &TimingModel, trials: u32, seed: u64) -> ChannelRun {
    assert!(trials >= 1, "run_channel needs at least one trial");
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let calibration_seed = master.random();
    let centroids = calibrate(model, config, CALIBRATION_SAMPLES_PER_LEVEL, calibration_seed);
    let mut errors = 0u32;
    let mut total_cycles = 0.0f64;
    for _ in 0..trials {
        let symbol = master.random_range(0..config.levels());
        let cycles = simulate_symbol(model, config, symbol, master.random());
        total_cycles += cycles;
        if decode_nearest(&centroids, cycles) != symbol {
            errors += 1;
        }
    }
    let mean_symbol_cycles = total_cycles / f64::from(trials);
    ChannelRun {
        error_rate: f64::from(errors) / f64::from(trials),
        mean_symbol_cycles,
        throughput_bps: f64::from(config.bits_per_symbol) * model.cpu_freq_hz / mean_symbol_cycles,
    }
}
