//! Alignment classification of fusible pairs and the per-offset oracle.
//!
//! A fused pair can hit two distinct front-end slow paths, decided purely
//! by where the pair sits relative to cache-line and 32-byte boundaries:
//!
//! * `no_mfuse`: the jump's own address is cache-line aligned, so the two
//!   instructions land in different decoded-µop cache sets and never fuse.
//! * `no_ucache`: the pair spans a 32-byte boundary, so the microcode
//!   mitigation for the JCC erratum evicts it from the decoded-µop cache.
//!
//! `no_mfuse` takes precedence: the 32-byte test applies only to pairs
//! that do fuse. Everything is a pure function of addresses and lengths.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::fusion::{is_fusible_pair, ArchProfile};
use crate::insn::AdjacentPair;

/// Placement verdict for one fusible pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementClass {
    Fast,
    NoMfuse,
    NoUcache,
}

impl fmt::Display for PlacementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementClass::Fast => "fast",
            PlacementClass::NoMfuse => "noMFuse",
            PlacementClass::NoUcache => "noµCache",
        })
    }
}

/// Exact probability as a ratio of admissible offsets, e.g. 9/64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numerator: u32,
    pub denominator: u32,
}

impl Fraction {
    pub fn new(numerator: u32, denominator: u32) -> Fraction {
        assert!(denominator > 0, "fraction denominator must be positive");
        Fraction { numerator, denominator }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.numerator) / f64::from(self.denominator)
    }

    pub fn percent(self) -> f64 {
        100.0 * self.as_f64()
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Brute-force classification of every cache-line offset for one geometry.
///
/// `no_mfuse_offsets`, `no_ucache_offsets`, and `fast_offsets` partition
/// the offsets `0..cache_line`; an offset is the first instruction's
/// address mod the cache line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetAnalysis {
    pub first_len: u32,
    pub jump_len: u32,
    pub no_mfuse_offsets: BTreeSet<u8>,
    pub no_ucache_offsets: BTreeSet<u8>,
    pub fast_offsets: BTreeSet<u8>,
}

impl OffsetAnalysis {
    /// The bucket offset `b` falls into.
    pub fn class_of(&self, b: u8) -> PlacementClass {
        if self.no_mfuse_offsets.contains(&b) {
            PlacementClass::NoMfuse
        } else if self.no_ucache_offsets.contains(&b) {
            PlacementClass::NoUcache
        } else {
            PlacementClass::Fast
        }
    }

    /// Number of offsets classified, i.e. the cache-line size.
    pub fn offset_count(&self) -> u32 {
        (self.no_mfuse_offsets.len() + self.no_ucache_offsets.len() + self.fast_offsets.len()) as u32
    }

    pub fn no_mfuse_fraction(&self) -> Fraction {
        Fraction::new(self.no_mfuse_offsets.len() as u32, self.offset_count())
    }

    pub fn no_ucache_fraction(&self) -> Fraction {
        Fraction::new(self.no_ucache_offsets.len() as u32, self.offset_count())
    }

    pub fn fast_fraction(&self) -> Fraction {
        Fraction::new(self.fast_offsets.len() as u32, self.offset_count())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("pair is not fusible under the active profile; placement applies to fusible pairs only")]
    NotFusible,
    #[error("geometry out of range: first_len {first_len} and jump_len {jump_len} must each be at least 1 and sum to at most one exclusion block")]
    GeometryOutOfRange { first_len: u32, jump_len: u32 },
    #[error("pair length range out of bounds: require 2 <= {min} <= {max} <= 32")]
    BoundsOutOfRange { min: u32, max: u32 },
    #[error("pair already classifies fast; padding advice applies to slow pairs only")]
    AlreadyFast,
}

/// Classify a fusible pair's placement.
///
/// Errors with [`PlacementError::NotFusible`] when the pair does not fuse
/// under `profile`; non-fusing pairs take neither slow path.
pub fn classify(profile: &ArchProfile, pair: &AdjacentPair) -> Result<PlacementClass, PlacementError> {
    if !is_fusible_pair(profile, pair) {
        return Err(PlacementError::NotFusible);
    }
    Ok(classify_geometry(
        profile,
        pair.first().address,
        pair.jump().address,
        u32::from(pair.jump().length),
    ))
}

/// The address-arithmetic core of [`classify`], shared with the oracle.
pub fn classify_geometry(
    profile: &ArchProfile,
    first_address: u64,
    jump_address: u64,
    jump_len: u32,
) -> PlacementClass {
    debug_assert!(jump_address > first_address && jump_len >= 1);
    if jump_address.is_multiple_of(u64::from(profile.cache_line)) {
        return PlacementClass::NoMfuse;
    }
    let block = u64::from(profile.exclusion_boundary);
    let last_jump_byte = jump_address + u64::from(jump_len) - 1;
    if first_address / block != last_jump_byte / block {
        return PlacementClass::NoUcache;
    }
    PlacementClass::Fast
}

/// Whether the jump's last byte ends exactly on an exclusion boundary.
///
/// Such a jump is evicted from the decoded-µop cache by the microcode
/// mitigation even though the counting rule classifies the pair fast when
/// nothing crosses the boundary; surfaced as a diagnostic, not a class.
pub fn terminates_on_boundary(profile: &ArchProfile, jump_address: u64, jump_len: u32) -> bool {
    (jump_address + u64::from(jump_len)).is_multiple_of(u64::from(profile.exclusion_boundary))
}

/// Classify every offset in a cache line for the given pair geometry.
///
/// Places a synthetic pair at each of the 64 offsets of a cache-line
/// aligned base and buckets the offsets by classification; the result is
/// independent of the base chosen (translation invariance).
pub fn slow_offsets(
    first_len: u32,
    jump_len: u32,
    profile: &ArchProfile,
) -> Result<OffsetAnalysis, PlacementError> {
    if first_len < 1 || jump_len < 1 || first_len + jump_len > profile.exclusion_boundary {
        return Err(PlacementError::GeometryOutOfRange { first_len, jump_len });
    }
    let mut analysis = OffsetAnalysis {
        first_len,
        jump_len,
        no_mfuse_offsets: BTreeSet::new(),
        no_ucache_offsets: BTreeSet::new(),
        fast_offsets: BTreeSet::new(),
    };
    let base = u64::from(profile.cache_line);
    for b in 0..profile.cache_line {
        let first_address = base + u64::from(b);
        let jump_address = first_address + u64::from(first_len);
        let bucket = match classify_geometry(profile, first_address, jump_address, jump_len) {
            PlacementClass::NoMfuse => &mut analysis.no_mfuse_offsets,
            PlacementClass::NoUcache => &mut analysis.no_ucache_offsets,
            PlacementClass::Fast => &mut analysis.fast_offsets,
        };
        bucket.insert(b as u8);
    }
    Ok(analysis)
}

/// Closed-form bounds on the fraction of offsets hit by the 32-byte rule.
///
/// A pair of total length `p` crosses at `p - 1` offsets per 32-byte block;
/// two blocks per cache line, minus the one offset the 64-byte rule claims
/// first, gives `(2p - 3)/64`. Evaluated at the extremes of the given pair
/// length range.
pub fn probability_bounds(
    pair_len_min: u32,
    pair_len_max: u32,
) -> Result<(Fraction, Fraction), PlacementError> {
    if pair_len_min < 2 || pair_len_min > pair_len_max || pair_len_max > 32 {
        return Err(PlacementError::BoundsOutOfRange { min: pair_len_min, max: pair_len_max });
    }
    Ok((
        Fraction::new(2 * pair_len_min - 3, 64),
        Fraction::new(2 * pair_len_max - 3, 64),
    ))
}

/// Longest padding the advisor may suggest: the assembler mitigation can
/// grow an instruction by at most five prefix bytes.
pub const MAX_SUGGESTED_PADDING: u32 = 5;

/// Smallest forward shift in `1..=5` that makes a slow pair fast.
///
/// Returns `Ok(None)` when no shift within the budget helps. Errors with
/// [`PlacementError::AlreadyFast`] when the pair needs no padding. The
/// shift models moving the pair only; downstream address cascades are out
/// of scope.
pub fn suggest_padding(
    first_address: u64,
    first_len: u32,
    jump_len: u32,
    profile: &ArchProfile,
) -> Result<Option<u32>, PlacementError> {
    let class_at = |addr: u64| {
        classify_geometry(profile, addr, addr + u64::from(first_len), jump_len)
    };
    if class_at(first_address) == PlacementClass::Fast {
        return Err(PlacementError::AlreadyFast);
    }
    Ok((1..=MAX_SUGGESTED_PADDING)
        .find(|s| class_at(first_address + u64::from(*s)) == PlacementClass::Fast))
}
