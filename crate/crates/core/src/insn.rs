//! Linear-sweep decoding of a code section into instruction records.
//!
//! The records carry exactly the attributes the fusion and placement
//! analyses consume: address, length, normalized mnemonic, conditional-jump
//! condition code, and the operand traits the fusion exclusion rules test.
//! Full x86-64 decoding is delegated to iced-x86; this module owns the
//! record interface, not the decoder internals.

use iced_x86::{Decoder, DecoderOptions, Instruction, Mnemonic, OpKind};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loader::CodeSection;

/// Canonical condition code of a conditional jump.
///
/// Encoding aliases (`e`/`z`, `b`/`c`, `ae`/`nb`/`nc`, ...) normalize to one
/// flag-style tag per condition so the fusion table needs a single entry
/// each. Negation is a table lookup, never mnemonic string surgery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cond {
    Z,
    Nz,
    C,
    Nc,
    A,
    Na,
    L,
    Nl,
    G,
    Ng,
    S,
    Ns,
    P,
    Np,
    O,
    No,
}

impl Cond {
    pub const ALL: [Cond; 16] = [
        Cond::Z,
        Cond::Nz,
        Cond::C,
        Cond::Nc,
        Cond::A,
        Cond::Na,
        Cond::L,
        Cond::Nl,
        Cond::G,
        Cond::Ng,
        Cond::S,
        Cond::Ns,
        Cond::P,
        Cond::Np,
        Cond::O,
        Cond::No,
    ];

    /// Canonical lowercase tag.
    pub fn as_str(self) -> &'static str {
        match self {
            Cond::Z => "z",
            Cond::Nz => "nz",
            Cond::C => "c",
            Cond::Nc => "nc",
            Cond::A => "a",
            Cond::Na => "na",
            Cond::L => "l",
            Cond::Nl => "nl",
            Cond::G => "g",
            Cond::Ng => "ng",
            Cond::S => "s",
            Cond::Ns => "ns",
            Cond::P => "p",
            Cond::Np => "np",
            Cond::O => "o",
            Cond::No => "no",
        }
    }

    /// Parse a condition tag, normalizing aliases to the canonical form.
    pub fn parse(tag: &str) -> Option<Cond> {
        Some(match tag {
            "z" | "e" => Cond::Z,
            "nz" | "ne" => Cond::Nz,
            "c" | "b" | "nae" => Cond::C,
            "nc" | "nb" | "ae" => Cond::Nc,
            "a" | "nbe" => Cond::A,
            "na" | "be" => Cond::Na,
            "l" | "nge" => Cond::L,
            "nl" | "ge" => Cond::Nl,
            "g" | "nle" => Cond::G,
            "ng" | "le" => Cond::Ng,
            "s" => Cond::S,
            "ns" => Cond::Ns,
            "p" | "pe" => Cond::P,
            "np" | "po" => Cond::Np,
            "o" => Cond::O,
            "no" => Cond::No,
            _ => return None,
        })
    }

    /// The opposite condition (`z` <-> `nz`, `a` <-> `na`, ...).
    pub fn negated(self) -> Cond {
        match self {
            Cond::Z => Cond::Nz,
            Cond::Nz => Cond::Z,
            Cond::C => Cond::Nc,
            Cond::Nc => Cond::C,
            Cond::A => Cond::Na,
            Cond::Na => Cond::A,
            Cond::L => Cond::Nl,
            Cond::Nl => Cond::L,
            Cond::G => Cond::Ng,
            Cond::Ng => Cond::G,
            Cond::S => Cond::Ns,
            Cond::Ns => Cond::S,
            Cond::P => Cond::Np,
            Cond::Np => Cond::P,
            Cond::O => Cond::No,
            Cond::No => Cond::O,
        }
    }
}

impl std::fmt::Display for Cond {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Cond {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Cond {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        Cond::parse(&tag).ok_or_else(|| de::Error::custom(format!("unknown condition tag `{tag}`")))
    }
}

/// Operand attributes that can disqualify an instruction from fusing.
///
/// A small set type: the three traits mirror the operand shapes the fusion
/// rules exclude (rip-relative addressing, a memory destination, and an
/// immediate combined with a memory operand).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct OperandTraits(u8);

impl OperandTraits {
    pub const NONE: OperandTraits = OperandTraits(0);
    pub const RIP_RELATIVE_OPERAND: OperandTraits = OperandTraits(1);
    pub const MEMORY_DESTINATION: OperandTraits = OperandTraits(1 << 1);
    pub const IMMEDIATE_AND_MEMORY_SOURCE: OperandTraits = OperandTraits(1 << 2);
    pub const ALL: OperandTraits = OperandTraits(0b111);

    const NAMES: [(&'static str, OperandTraits); 3] = [
        ("rip_relative_operand", OperandTraits::RIP_RELATIVE_OPERAND),
        ("memory_destination", OperandTraits::MEMORY_DESTINATION),
        ("immediate_and_memory_source", OperandTraits::IMMEDIATE_AND_MEMORY_SOURCE),
    ];

    pub fn union(self, other: OperandTraits) -> OperandTraits {
        OperandTraits(self.0 | other.0)
    }

    pub fn intersection(self, other: OperandTraits) -> OperandTraits {
        OperandTraits(self.0 & other.0)
    }

    pub fn contains(self, other: OperandTraits) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: OperandTraits) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Names of the set traits, in declaration order.
    pub fn names(self) -> Vec<&'static str> {
        Self::NAMES.iter().filter(|(_, t)| self.contains(*t)).map(|(n, _)| *n).collect()
    }

    pub fn from_name(name: &str) -> Option<OperandTraits> {
        Self::NAMES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }
}

impl Serialize for OperandTraits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let names = self.names();
        let mut seq = serializer.serialize_seq(Some(names.len()))?;
        for name in names {
            seq.serialize_element(name)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for OperandTraits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TraitsVisitor;

        impl<'de> Visitor<'de> for TraitsVisitor {
            type Value = OperandTraits;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a list of operand trait names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut traits = OperandTraits::NONE;
                while let Some(name) = seq.next_element::<String>()? {
                    let t = OperandTraits::from_name(&name)
                        .ok_or_else(|| de::Error::custom(format!("unknown operand trait `{name}`")))?;
                    traits = traits.union(t);
                }
                Ok(traits)
            }
        }

        deserializer.deserialize_seq(TraitsVisitor)
    }
}

/// One decoded instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionRecord {
    pub address: u64,
    /// 1..=15; the x86-64 maximum instruction length.
    pub length: u8,
    /// Normalized lowercase mnemonic. Conditional jumps use the canonical
    /// condition tag (`jnz`, never `jne`).
    pub mnemonic: String,
    pub is_cond_jump: bool,
    /// Present exactly when `is_cond_jump`.
    pub cond_code: Option<Cond>,
    /// Only ever set for non-jump instructions.
    pub traits: OperandTraits,
}

/// An adjacent (predecessor, conditional jump) pair in the decoded stream.
///
/// Pairing is purely syntactic byte adjacency; whether the pair actually
/// fuses is judged by the fusion model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacentPair {
    first: InstructionRecord,
    jump: InstructionRecord,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PairError {
    #[error("second instruction of a pair must be a conditional jump")]
    NotCondJump,
    #[error("pair instructions are not byte-adjacent")]
    NotAdjacent,
}

impl AdjacentPair {
    pub fn new(first: InstructionRecord, jump: InstructionRecord) -> Result<AdjacentPair, PairError> {
        if !jump.is_cond_jump {
            return Err(PairError::NotCondJump);
        }
        if jump.address != first.address + u64::from(first.length) {
            return Err(PairError::NotAdjacent);
        }
        Ok(AdjacentPair { first, jump })
    }

    pub fn first(&self) -> &InstructionRecord {
        &self.first
    }

    pub fn jump(&self) -> &InstructionRecord {
        &self.jump
    }
}

/// A decoded section: the record list plus decode diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedStream {
    /// Strictly increasing in address.
    pub records: Vec<InstructionRecord>,
    /// Bytes dropped by resynchronization on undecodable input.
    pub bytes_skipped: u64,
}

/// Decode a section with a linear sweep.
///
/// Undecodable byte runs are resynchronized by skipping exactly one byte
/// and retrying; every skipped byte is counted in `bytes_skipped`. Data
/// embedded in code is decoded as if it were code, exactly as a naive
/// linear sweep would.
///
/// # Panics
///
/// Panics if `section.bytes` is empty; the loader never returns such a
/// section and other callers must filter.
pub fn decode_stream(section: &CodeSection) -> DecodedStream {
    assert!(!section.bytes.is_empty(), "decode_stream requires a non-empty section");
    let mut decoder =
        Decoder::with_ip(64, &section.bytes, section.virtual_address, DecoderOptions::NONE);
    let mut records = Vec::new();
    let mut bytes_skipped = 0u64;
    let mut insn = Instruction::default();
    while decoder.can_decode() {
        let pos = decoder.position();
        let ip = decoder.ip();
        decoder.decode_out(&mut insn);
        if insn.is_invalid() {
            decoder.set_position(pos + 1).expect("position stays within the buffer");
            decoder.set_ip(ip + 1);
            bytes_skipped += 1;
            continue;
        }
        records.push(record_of(&insn));
    }
    DecodedStream { records, bytes_skipped }
}

/// Pair every conditional jump with its byte-adjacent predecessor.
///
/// Conditional jumps at a section start or after a resynchronization gap
/// have no adjacent predecessor and produce no pair, but still count as
/// conditional jumps in the caller's totals.
pub fn find_adjacent_pairs(records: &[InstructionRecord]) -> Vec<AdjacentPair> {
    debug_assert!(records.windows(2).all(|w| w[0].address < w[1].address));
    records
        .windows(2)
        .filter_map(|w| AdjacentPair::new(w[0].clone(), w[1].clone()).ok())
        .collect()
}

fn record_of(insn: &Instruction) -> InstructionRecord {
    let cond = jcc_cond(insn.mnemonic());
    let mnemonic = match cond {
        Some(c) => format!("j{c}"),
        None => format!("{:?}", insn.mnemonic()).to_ascii_lowercase(),
    };
    let traits = if cond.is_some() { OperandTraits::NONE } else { operand_traits(insn) };
    InstructionRecord {
        address: insn.ip(),
        length: insn.len() as u8,
        mnemonic,
        is_cond_jump: cond.is_some(),
        cond_code: cond,
        traits,
    }
}

/// Condition code of a flag-conditional jump mnemonic.
///
/// `jrcxz`/`jecxz` and the `loop` family branch on register values, carry
/// no condition flags, and never fuse; they are not treated as conditional
/// jumps here.
fn jcc_cond(m: Mnemonic) -> Option<Cond> {
    Some(match m {
        Mnemonic::Je => Cond::Z,
        Mnemonic::Jne => Cond::Nz,
        Mnemonic::Jb => Cond::C,
        Mnemonic::Jae => Cond::Nc,
        Mnemonic::Ja => Cond::A,
        Mnemonic::Jbe => Cond::Na,
        Mnemonic::Jl => Cond::L,
        Mnemonic::Jge => Cond::Nl,
        Mnemonic::Jg => Cond::G,
        Mnemonic::Jle => Cond::Ng,
        Mnemonic::Js => Cond::S,
        Mnemonic::Jns => Cond::Ns,
        Mnemonic::Jp => Cond::P,
        Mnemonic::Jnp => Cond::Np,
        Mnemonic::Jo => Cond::O,
        Mnemonic::Jno => Cond::No,
        _ => return None,
    })
}

fn operand_traits(insn: &Instruction) -> OperandTraits {
    let mut traits = OperandTraits::NONE;
    let mut has_memory = false;
    let mut has_immediate = false;
    for i in 0..insn.op_count() {
        match insn.op_kind(i) {
            OpKind::Memory => has_memory = true,
            OpKind::Immediate8
            | OpKind::Immediate8_2nd
            | OpKind::Immediate16
            | OpKind::Immediate32
            | OpKind::Immediate64
            | OpKind::Immediate8to16
            | OpKind::Immediate8to32
            | OpKind::Immediate8to64
            | OpKind::Immediate32to64 => has_immediate = true,
            _ => {}
        }
    }
    if insn.is_ip_rel_memory_operand() {
        traits = traits.union(OperandTraits::RIP_RELATIVE_OPERAND);
    }
    if insn.op_count() > 0 && insn.op_kind(0) == OpKind::Memory {
        traits = traits.union(OperandTraits::MEMORY_DESTINATION);
    }
    if has_memory && has_immediate {
        traits = traits.union(OperandTraits::IMMEDIATE_AND_MEMORY_SOURCE);
    }
    traits
}
