//! Generation of the offset-shifted countdown-loop microbenchmark.
//!
//! The benchmark is a `sub rcx, 1 / jnz loop` countdown whose position
//! within a cache line is steered by a run of one-byte `nop`s, emitted
//! either as GNU-assembler text or as raw machine bytes. Running and
//! timing the artifact is a manual, hardware-specific procedure; tests
//! only ever decode and classify the emitted bytes.

use std::fmt::Write as _;

/// Parameters of one generated benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    /// Target offset of the loop within a 64-byte cache line.
    pub offset_b: u8,
    /// Loop iteration count; each iteration executes one fused pair.
    pub iterations: u32,
    /// Emit serialized timestamp reads around the loop (assembly only).
    pub instrument: bool,
}

pub const DEFAULT_ITERATIONS: u32 = 200;

impl BenchSpec {
    /// Spec with the default iteration count and instrumentation on.
    pub fn new(offset_b: u8) -> BenchSpec {
        BenchSpec { offset_b, iterations: DEFAULT_ITERATIONS, instrument: true }
    }

    pub fn is_valid(&self) -> bool {
        self.offset_b < 64 && self.iterations >= 1
    }
}

/// Fixed canonical encodings used by the raw-bytes path. One encoding per
/// instruction keeps byte-level tests exact.
pub const NOP: u8 = 0x90;
pub const MOV_RCX_IMM32: [u8; 3] = [0x48, 0xC7, 0xC1]; // + imm32
pub const SUB_RCX_1: [u8; 4] = [0x48, 0x83, 0xE9, 0x01];
pub const JNZ_BACK_TO_SUB: [u8; 2] = [0x75, 0xFA]; // rel8 = -6

/// Byte index of the `sub` within [`emit_loop_bytes`] output: the nop run
/// plus the 7-byte counter setup.
pub fn sub_index(spec: &BenchSpec) -> usize {
    usize::from(spec.offset_b) + MOV_RCX_IMM32.len() + 4
}

/// Emit the benchmark as GNU-assembler text (Intel syntax).
///
/// The counter setup precedes an alignment directive and the `nop` run, so
/// the `loop` label assembles to `offset_b` modulo 64 whenever the section
/// base is 64-byte aligned. External counter reads are represented as
/// comments; linking a real collector is the (manual) caller's business.
pub fn emit_assembly(spec: &BenchSpec) -> String {
    assert!(spec.is_valid(), "benchmark spec out of range");
    let mut out = String::new();
    out.push_str(".intel_syntax noprefix\n");
    out.push_str(".text\n");
    out.push_str(".globl bench_entry\n");
    out.push_str("bench_entry:\n");
    if spec.instrument {
        out.push_str("\nlfence\n");
        out.push_str("# call counter_read   (external hardware-counter hook)\n");
        out.push_str("lfence\n");
        out.push_str("rdtsc\n");
        out.push_str("lfence\n");
    }
    writeln!(out, "\nmov rcx, {:#x}", spec.iterations).unwrap();
    out.push_str("\n.p2align 6\n");
    writeln!(out, ".rept {}", spec.offset_b).unwrap();
    out.push_str("    nop\n");
    out.push_str(".endr\n");
    out.push_str("loop:\n");
    out.push_str("    sub rcx, 1\n");
    out.push_str("    jnz loop\n");
    if spec.instrument {
        out.push_str("\nlfence\n");
        out.push_str("rdtsc\n");
        out.push_str("lfence\n");
        out.push_str("# call counter_read   (external hardware-counter hook)\n");
    }
    out.push_str("\nret\n");
    out
}

/// Emit the loop as raw bytes positioned relative to a 64-aligned origin.
///
/// Layout: `offset_b` one-byte nops, the 7-byte counter setup, the 4-byte
/// `sub`, and the 2-byte short jump back to the `sub`. The `sub` therefore
/// sits at buffer index `offset_b + 7`; interpret the buffer at any
/// 64-byte aligned base address.
pub fn emit_loop_bytes(spec: &BenchSpec) -> Vec<u8> {
    assert!(spec.is_valid(), "benchmark spec out of range");
    let mut bytes = vec![NOP; usize::from(spec.offset_b)];
    bytes.extend_from_slice(&MOV_RCX_IMM32);
    bytes.extend_from_slice(&spec.iterations.to_le_bytes());
    bytes.extend_from_slice(&SUB_RCX_1);
    bytes.extend_from_slice(&JNZ_BACK_TO_SUB);
    debug_assert_eq!(bytes.len(), sub_index(spec) + SUB_RCX_1.len() + JNZ_BACK_TO_SUB.len());
    bytes
}

/// Sidecar text describing how to place the raw-bytes artifact.
pub fn bytes_sidecar(spec: &BenchSpec) -> String {
    let sub = sub_index(spec);
    format!(
        "flat binary; load at a 64-byte aligned base address\n\
         nop padding: {} bytes\n\
         counter setup (mov rcx, {:#x}): buffer index {}\n\
         sub at buffer index {} (offset {} in its cache line)\n\
         jnz at buffer index {}\n",
        spec.offset_b,
        spec.iterations,
        spec.offset_b,
        sub,
        sub % 64,
        sub + SUB_RCX_1.len(),
    )
}
