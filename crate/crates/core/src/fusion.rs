//! Macro-fusion decision under a configurable architecture profile.
//!
//! A profile is data: the fusible (mnemonic, condition) table, the operand
//! exclusions, and the three alignment granularities the placement rules
//! use. Two profiles are built in; arbitrary ones load from TOML so new
//! jump variants can be added without code changes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::insn::{AdjacentPair, Cond, OperandTraits};

/// Architecture profile driving fusion and placement decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchProfile {
    pub name: String,
    /// First-instruction mnemonic -> canonical condition tags it fuses with.
    pub fusible_table: BTreeMap<String, BTreeSet<Cond>>,
    /// Whether the negation of a listed condition also fuses.
    pub fuse_negated_jumps: bool,
    /// Operand traits that disqualify the first instruction from fusing.
    pub operand_exclusions: OperandTraits,
    /// Instruction-fetch block size in bytes.
    pub fetch_window: u32,
    /// Boundary whose crossing evicts a jump from the decoded-µop cache.
    pub exclusion_boundary: u32,
    /// Instruction cache line size in bytes.
    pub cache_line: u32,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown profile `{0}` (built-ins: skylake_family, zen2)")]
    UnknownProfile(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub const BUILTIN_PROFILE_NAMES: [&str; 2] = ["skylake_family", "zen2"];

/// Construct one of the embedded profiles.
///
/// `skylake_family` carries the full fusion table; `zen2` restricts it to
/// the `test` and `cmp` rows. The operand exclusions are documented for
/// Skylake-based cores; `zen2` copies them as an assumption (see the
/// comment in its exported form).
pub fn builtin_profile(name: &str) -> Result<ArchProfile, ProfileError> {
    let flag = [Cond::Z, Cond::C, Cond::A, Cond::L, Cond::G];
    let flag_sign = [Cond::Z, Cond::C, Cond::A, Cond::L, Cond::G, Cond::S, Cond::P, Cond::O];
    let counter = [Cond::Z, Cond::L, Cond::G];
    let rows: &[(&str, &[Cond])] = match name {
        "skylake_family" => &[
            ("cmp", &flag),
            ("add", &flag),
            ("sub", &flag),
            ("inc", &counter),
            ("dec", &counter),
            ("test", &flag_sign),
            ("and", &flag_sign),
        ],
        "zen2" => &[("cmp", &flag), ("test", &flag_sign)],
        other => return Err(ProfileError::UnknownProfile(other.to_string())),
    };
    let fusible_table = rows
        .iter()
        .map(|(mnemonic, conds)| (mnemonic.to_string(), conds.iter().copied().collect()))
        .collect();
    Ok(ArchProfile {
        name: name.to_string(),
        fusible_table,
        fuse_negated_jumps: true,
        operand_exclusions: OperandTraits::ALL,
        fetch_window: 16,
        exclusion_boundary: 32,
        cache_line: 64,
    })
}

/// Load a profile by built-in name or, failing that, from a TOML file path.
pub fn resolve_profile(name_or_path: &str) -> Result<ArchProfile, ProfileError> {
    match builtin_profile(name_or_path) {
        Ok(p) => Ok(p),
        Err(ProfileError::UnknownProfile(_)) if Path::new(name_or_path).is_file() => {
            load_profile_file(Path::new(name_or_path))
        }
        Err(e) => Err(e),
    }
}

pub fn load_profile_file(path: &Path) -> Result<ArchProfile, ProfileError> {
    let text = std::fs::read_to_string(path)?;
    ArchProfile::from_toml_str(&text)
}

/// Decide whether an adjacent pair macro-fuses under `profile`.
///
/// True iff the first instruction's mnemonic has a table row, the jump's
/// condition (or its negation, when the profile fuses negated jumps) is in
/// that row, and none of the first instruction's operand traits is
/// excluded. Addresses play no part: fusibility and placement are
/// orthogonal.
pub fn is_fusible_pair(profile: &ArchProfile, pair: &AdjacentPair) -> bool {
    let Some(cond) = pair.jump().cond_code else { return false };
    let Some(row) = profile.fusible_table.get(pair.first().mnemonic.as_str()) else {
        return false;
    };
    if pair.first().traits.intersects(profile.operand_exclusions) {
        return false;
    }
    row.contains(&cond) || (profile.fuse_negated_jumps && row.contains(&cond.negated()))
}

/// Serialized form of a profile: a flat key-value TOML document.
#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    name: String,
    fuse_negated_jumps: bool,
    operand_exclusions: OperandTraits,
    fetch_window: u32,
    exclusion_boundary: u32,
    cache_line: u32,
    fusible: BTreeMap<String, BTreeSet<Cond>>,
}

impl ArchProfile {
    pub fn from_toml_str(text: &str) -> Result<ArchProfile, ProfileError> {
        let doc: ProfileDoc =
            toml::from_str(text).map_err(|e| ProfileError::InvalidProfile(e.to_string()))?;
        let profile = ArchProfile {
            name: doc.name,
            fusible_table: doc.fusible,
            fuse_negated_jumps: doc.fuse_negated_jumps,
            operand_exclusions: doc.operand_exclusions,
            fetch_window: doc.fetch_window,
            exclusion_boundary: doc.exclusion_boundary,
            cache_line: doc.cache_line,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_toml_string(&self) -> String {
        let doc = ProfileDoc {
            name: self.name.clone(),
            fuse_negated_jumps: self.fuse_negated_jumps,
            operand_exclusions: self.operand_exclusions,
            fetch_window: self.fetch_window,
            exclusion_boundary: self.exclusion_boundary,
            cache_line: self.cache_line,
            fusible: self.fusible_table.clone(),
        };
        let mut out = String::new();
        if self.name == "zen2" {
            // Carried over from the Skylake rules; not confirmed for Zen 2.
            out.push_str("# operand_exclusions are assumed, not vendor-documented\n");
        }
        out.push_str(&toml::to_string(&doc).expect("profile serializes"));
        out
    }

    /// Check the structural invariants a hand-written profile can violate.
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.fetch_window == 0 || self.exclusion_boundary == 0 || self.cache_line == 0 {
            return Err(ProfileError::InvalidProfile("boundary sizes must be nonzero".into()));
        }
        if !self.exclusion_boundary.is_multiple_of(self.fetch_window) {
            return Err(ProfileError::InvalidProfile(format!(
                "fetch_window {} must divide exclusion_boundary {}",
                self.fetch_window, self.exclusion_boundary
            )));
        }
        if !self.cache_line.is_multiple_of(self.exclusion_boundary) {
            return Err(ProfileError::InvalidProfile(format!(
                "exclusion_boundary {} must divide cache_line {}",
                self.exclusion_boundary, self.cache_line
            )));
        }
        if self.fusible_table.keys().any(|m| m.is_empty()) {
            return Err(ProfileError::InvalidProfile("fusible table has an empty mnemonic key".into()));
        }
        Ok(())
    }
}
