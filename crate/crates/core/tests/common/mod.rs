//! Shared fixtures: hand-assembled ELF/PE images and record constructors.
//!
//! The container writers are deliberately independent of the crate's
//! loader (and of goblin) so loader tests check against a second,
//! bit-level implementation of the formats rather than against itself.

#![allow(dead_code)]

use jccscan_core::insn::{AdjacentPair, Cond, InstructionRecord, OperandTraits};

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn pad_to(buf: &mut Vec<u8>, len: usize) {
    assert!(buf.len() <= len);
    buf.resize(len, 0);
}

/// One section for [`elf64`].
pub struct ElfSection<'a> {
    pub name: &'a str,
    pub vaddr: u64,
    pub bytes: &'a [u8],
    pub executable: bool,
}

/// A function symbol entry for [`elf64`]: (name, address, size).
pub type ElfFunc<'a> = (&'a str, u64, u64);

/// Minimal 64-bit ELF shared object, written field by field.
///
/// Layout: [ehdr][section data...][.strtab][.symtab][.shstrtab][headers].
/// When `funcs` is non-empty a symbol table with STT_FUNC entries is
/// emitted.
pub fn elf64(sections: &[ElfSection<'_>], funcs: &[ElfFunc<'_>]) -> Vec<u8> {
    // shstrtab: \0, section names, then the fixed table names
    let mut shstrtab: Vec<u8> = vec![0];
    let mut name_offsets = Vec::new();
    for s in sections {
        name_offsets.push(shstrtab.len() as u32);
        shstrtab.extend_from_slice(s.name.as_bytes());
        shstrtab.push(0);
    }
    let strtab_name = shstrtab.len() as u32;
    shstrtab.extend_from_slice(b".strtab\0");
    let symtab_name = shstrtab.len() as u32;
    shstrtab.extend_from_slice(b".symtab\0");
    let shstrtab_name = shstrtab.len() as u32;
    shstrtab.extend_from_slice(b".shstrtab\0");

    // .strtab and .symtab contents
    let mut strtab: Vec<u8> = vec![0];
    let mut symtab: Vec<u8> = vec![0; 24]; // null symbol
    for (name, addr, size) in funcs {
        let name_off = strtab.len() as u32;
        strtab.extend_from_slice(name.as_bytes());
        strtab.push(0);
        put_u32(&mut symtab, name_off);
        symtab.push(0x12); // GLOBAL | FUNC
        symtab.push(0);
        put_u16(&mut symtab, 1); // st_shndx: first section
        put_u64(&mut symtab, *addr);
        put_u64(&mut symtab, *size);
    }
    let with_syms = !funcs.is_empty();

    let mut offsets = Vec::new();
    let mut cursor = 64usize;
    for s in sections {
        offsets.push(cursor);
        cursor += s.bytes.len();
    }
    let strtab_off = cursor;
    cursor += if with_syms { strtab.len() } else { 0 };
    let symtab_off = (cursor + 7) & !7;
    cursor = symtab_off + if with_syms { symtab.len() } else { 0 };
    let shstr_off = cursor;
    cursor += shstrtab.len();
    let sh_off = (cursor + 7) & !7;

    let extra = if with_syms { 2 } else { 0 };
    let shnum = 1 + sections.len() + extra + 1;
    let shstrndx = shnum - 1;
    let strtab_index = 1 + sections.len();

    let mut f = Vec::new();
    f.extend_from_slice(&[0x7F, b'E', b'L', b'F', 2, 1, 1, 0]);
    f.extend_from_slice(&[0u8; 8]);
    put_u16(&mut f, 3); // ET_DYN
    put_u16(&mut f, 62); // EM_X86_64
    put_u32(&mut f, 1);
    put_u64(&mut f, sections.first().map_or(0, |s| s.vaddr)); // e_entry
    put_u64(&mut f, 0); // e_phoff
    put_u64(&mut f, sh_off as u64);
    put_u32(&mut f, 0); // e_flags
    put_u16(&mut f, 64); // e_ehsize
    put_u16(&mut f, 56); // e_phentsize
    put_u16(&mut f, 0); // e_phnum
    put_u16(&mut f, 64); // e_shentsize
    put_u16(&mut f, shnum as u16);
    put_u16(&mut f, shstrndx as u16);
    assert_eq!(f.len(), 64);

    for s in sections {
        f.extend_from_slice(s.bytes);
    }
    if with_syms {
        f.extend_from_slice(&strtab);
        pad_to(&mut f, symtab_off);
        f.extend_from_slice(&symtab);
    }
    pad_to(&mut f, shstr_off);
    f.extend_from_slice(&shstrtab);
    pad_to(&mut f, sh_off);

    let mut shdr = |name: u32, ty: u32, flags: u64, addr: u64, off: usize, size: usize, link: u32, info: u32, align: u64, entsize: u64| {
        put_u32(&mut f, name);
        put_u32(&mut f, ty);
        put_u64(&mut f, flags);
        put_u64(&mut f, addr);
        put_u64(&mut f, off as u64);
        put_u64(&mut f, size as u64);
        put_u32(&mut f, link);
        put_u32(&mut f, info);
        put_u64(&mut f, align);
        put_u64(&mut f, entsize);
    };

    shdr(0, 0, 0, 0, 0, 0, 0, 0, 0, 0); // SHN_UNDEF
    for (i, s) in sections.iter().enumerate() {
        let flags = if s.executable { 2 | 4 } else { 2 }; // ALLOC (| EXECINSTR)
        shdr(name_offsets[i], 1, flags, s.vaddr, offsets[i], s.bytes.len(), 0, 0, 64, 0);
    }
    if with_syms {
        shdr(strtab_name, 3, 0, 0, strtab_off, strtab.len(), 0, 0, 1, 0);
        shdr(symtab_name, 2, 0, 0, symtab_off, symtab.len(), strtab_index as u32, 1, 8, 24);
    }
    shdr(shstrtab_name, 3, 0, 0, shstr_off, shstrtab.len(), 0, 0, 1, 0);

    f
}

/// One executable .text section at `vaddr`.
pub fn elf64_with_text(text: &[u8], vaddr: u64) -> Vec<u8> {
    elf64(&[ElfSection { name: ".text", vaddr, bytes: text, executable: true }], &[])
}

/// Allocated read-only data only; no executable content.
pub fn elf64_data_only(data: &[u8]) -> Vec<u8> {
    elf64(&[ElfSection { name: ".rodata", vaddr: 0x400000, bytes: data, executable: false }], &[])
}

/// Minimal valid ELF32 header with no sections, for format rejection
/// tests.
pub fn elf32_header_only() -> Vec<u8> {
    let mut f = Vec::new();
    f.extend_from_slice(&[0x7F, b'E', b'L', b'F', 1, 1, 1, 0]);
    f.extend_from_slice(&[0u8; 8]);
    put_u16(&mut f, 3); // ET_DYN
    put_u16(&mut f, 3); // EM_386
    put_u32(&mut f, 1);
    put_u32(&mut f, 0); // e_entry
    put_u32(&mut f, 0); // e_phoff
    put_u32(&mut f, 0); // e_shoff
    put_u32(&mut f, 0); // e_flags
    put_u16(&mut f, 52); // e_ehsize
    put_u16(&mut f, 32); // e_phentsize
    put_u16(&mut f, 0);
    put_u16(&mut f, 40); // e_shentsize
    put_u16(&mut f, 0);
    put_u16(&mut f, 0);
    assert_eq!(f.len(), 52);
    f
}

/// Decode a whitespace-free hex dump.
pub fn from_hex(hex: &str) -> Vec<u8> {
    assert!(hex.len().is_multiple_of(2));
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).expect("hex digit"))
        .collect()
}

pub const PE_IMAGE_BASE: u64 = 0x1_4000_0000;
pub const PE_TEXT_RVA: u32 = 0x1000;

/// Minimal PE32+ image with one executable .text section.
pub fn pe64_with_text(text: &[u8]) -> Vec<u8> {
    pe_with_text(text, true)
}

/// Same layout as [`pe64_with_text`] but with a PE32 (32-bit) optional
/// header, for unsupported-format tests.
pub fn pe32_with_text(text: &[u8]) -> Vec<u8> {
    pe_with_text(text, false)
}

fn pe_with_text(text: &[u8], pe32_plus: bool) -> Vec<u8> {
    let file_align = 0x200usize;
    let raw_size = text.len().div_ceil(file_align) * file_align;

    let mut f = Vec::new();
    f.extend_from_slice(b"MZ");
    pad_to(&mut f, 0x3C);
    put_u32(&mut f, 0x80); // e_lfanew
    pad_to(&mut f, 0x80);

    f.extend_from_slice(b"PE\0\0");
    // COFF header
    put_u16(&mut f, if pe32_plus { 0x8664 } else { 0x014C });
    put_u16(&mut f, 1); // sections
    put_u32(&mut f, 0); // timestamp
    put_u32(&mut f, 0);
    put_u32(&mut f, 0);
    put_u16(&mut f, if pe32_plus { 240 } else { 224 }); // optional header size
    put_u16(&mut f, 0x2022); // EXECUTABLE_IMAGE | LARGE_ADDRESS_AWARE | DLL

    let opt_start = f.len();
    if pe32_plus {
        put_u16(&mut f, 0x20B);
        f.extend_from_slice(&[0, 0]); // linker version
        put_u32(&mut f, raw_size as u32); // size of code
        put_u32(&mut f, 0);
        put_u32(&mut f, 0);
        put_u32(&mut f, PE_TEXT_RVA); // entry point
        put_u32(&mut f, PE_TEXT_RVA); // base of code
        put_u64(&mut f, PE_IMAGE_BASE);
    } else {
        put_u16(&mut f, 0x10B);
        f.extend_from_slice(&[0, 0]);
        put_u32(&mut f, raw_size as u32);
        put_u32(&mut f, 0);
        put_u32(&mut f, 0);
        put_u32(&mut f, PE_TEXT_RVA);
        put_u32(&mut f, PE_TEXT_RVA);
        put_u32(&mut f, 0x2000); // base of data (PE32 only)
        put_u32(&mut f, 0x40000000); // image base
    }
    put_u32(&mut f, 0x1000); // section alignment
    put_u32(&mut f, file_align as u32);
    put_u16(&mut f, 6); // OS major
    put_u16(&mut f, 0);
    put_u16(&mut f, 0);
    put_u16(&mut f, 0);
    put_u16(&mut f, 6); // subsystem major
    put_u16(&mut f, 0);
    put_u32(&mut f, 0); // win32 version
    let size_of_image = (PE_TEXT_RVA as usize + text.len().max(1)).div_ceil(0x1000) * 0x1000;
    put_u32(&mut f, size_of_image as u32);
    put_u32(&mut f, 0x200); // size of headers
    put_u32(&mut f, 0); // checksum
    put_u16(&mut f, 3); // subsystem: console
    put_u16(&mut f, 0); // dll characteristics
    if pe32_plus {
        put_u64(&mut f, 0x100000);
        put_u64(&mut f, 0x1000);
        put_u64(&mut f, 0x100000);
        put_u64(&mut f, 0x1000);
    } else {
        put_u32(&mut f, 0x100000);
        put_u32(&mut f, 0x1000);
        put_u32(&mut f, 0x100000);
        put_u32(&mut f, 0x1000);
    }
    put_u32(&mut f, 0); // loader flags
    put_u32(&mut f, 16); // rva-and-sizes count
    f.extend_from_slice(&[0u8; 16 * 8]);
    assert_eq!(f.len() - opt_start, if pe32_plus { 240 } else { 224 });

    // section header
    f.extend_from_slice(b".text\0\0\0");
    put_u32(&mut f, text.len() as u32); // virtual size
    put_u32(&mut f, PE_TEXT_RVA);
    put_u32(&mut f, raw_size as u32);
    put_u32(&mut f, 0x200); // pointer to raw data
    put_u32(&mut f, 0);
    put_u32(&mut f, 0);
    put_u16(&mut f, 0);
    put_u16(&mut f, 0);
    put_u32(&mut f, 0x6000_0020); // CODE | EXECUTE | READ

    pad_to(&mut f, 0x200);
    f.extend_from_slice(text);
    pad_to(&mut f, 0x200 + raw_size);
    f
}

/// Non-jump record with no operand traits.
pub fn record(address: u64, length: u8, mnemonic: &str) -> InstructionRecord {
    InstructionRecord {
        address,
        length,
        mnemonic: mnemonic.to_string(),
        is_cond_jump: false,
        cond_code: None,
        traits: OperandTraits::NONE,
    }
}

/// Non-jump record carrying the given operand traits.
pub fn record_with_traits(
    address: u64,
    length: u8,
    mnemonic: &str,
    traits: OperandTraits,
) -> InstructionRecord {
    InstructionRecord { traits, ..record(address, length, mnemonic) }
}

/// Conditional-jump record; `tag` may be any condition alias.
pub fn jump_record(address: u64, length: u8, tag: &str) -> InstructionRecord {
    let cond = Cond::parse(tag).unwrap_or_else(|| panic!("bad condition tag `{tag}`"));
    InstructionRecord {
        address,
        length,
        mnemonic: format!("j{cond}"),
        is_cond_jump: true,
        cond_code: Some(cond),
        traits: OperandTraits::NONE,
    }
}

/// Builds .text contents with instructions at scripted offsets, nop-padding
/// the gaps. Expected counts stay in the tests; the builder only places
/// bytes.
pub struct CodeBuilder {
    pub bytes: Vec<u8>,
}

impl CodeBuilder {
    pub fn new() -> CodeBuilder {
        CodeBuilder { bytes: Vec::new() }
    }

    pub fn pad_to(&mut self, offset: usize) {
        assert!(self.bytes.len() <= offset, "layout overlap at {offset}");
        self.bytes.resize(offset, 0x90);
    }

    /// sub rcx, 1; jnz -6 -- the canonical fusible pair, geometry (4, 2).
    pub fn sub_jnz_at(&mut self, offset: usize) {
        self.pad_to(offset);
        self.bytes.extend_from_slice(&[0x48, 0x83, 0xE9, 0x01, 0x75, 0xFA]);
    }

    /// mov rax, rbx; jnz -- adjacent but not fusible (mov has no table row).
    pub fn mov_jnz_at(&mut self, offset: usize) {
        self.pad_to(offset);
        self.bytes.extend_from_slice(&[0x48, 0x89, 0xD8, 0x75, 0xFA]);
    }

    /// cmp dword ptr [rip+0x100], 7; jz -- excluded by operand traits.
    pub fn cmp_rip_jz_at(&mut self, offset: usize) {
        self.pad_to(offset);
        self.bytes.extend_from_slice(&[0x83, 0x3D, 0x00, 0x01, 0x00, 0x00, 0x07, 0x74, 0x00]);
    }

    pub fn to_elf(&self, vaddr: u64) -> Vec<u8> {
        elf64_with_text(&self.bytes, vaddr)
    }
}

/// Adjacent (mnemonic, jcc) pair with the given geometry at `first_address`.
pub fn pair_at(
    first_address: u64,
    first_len: u8,
    jump_len: u8,
    mnemonic: &str,
    tag: &str,
) -> AdjacentPair {
    let first = record(first_address, first_len, mnemonic);
    let jump = jump_record(first_address + u64::from(first_len), jump_len, tag);
    AdjacentPair::new(first, jump).expect("constructed adjacency")
}
