//! Executable-section extraction from ELF and PE images.
//!
//! Only 64-bit containers are accepted: the alignment arithmetic downstream
//! assumes a uniform 64-bit address space. Virtual addresses, not file
//! offsets, drive that arithmetic; loaders map sections page-aligned, so an
//! address mod 64 at rest equals the address mod 64 at runtime.

use std::fs;
use std::path::Path;

use goblin::elf::section_header::SHF_EXECINSTR;
use goblin::elf::sym::STT_FUNC;
use goblin::elf::Elf;
use goblin::pe::options::ParseOptions;
use goblin::pe::section_table::IMAGE_SCN_MEM_EXECUTE;
use goblin::pe::PE;
use thiserror::Error;

/// One executable section lifted out of a binary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSection {
    pub name: String,
    pub virtual_address: u64,
    /// Raw section bytes; never empty for a returned section.
    pub bytes: Vec<u8>,
    pub source_path: String,
}

/// A function symbol span, used for per-function attribution of findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSymbol {
    pub name: String,
    pub address: u64,
    pub size: u64,
}

/// Container format expected by the caller. `Auto` sniffs magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormatHint {
    Elf,
    Pe,
    #[default]
    Auto,
}

impl std::str::FromStr for FormatHint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elf" => Ok(FormatHint::Elf),
            "pe" => Ok(FormatHint::Pe),
            "auto" => Ok(FormatHint::Auto),
            other => Err(format!("unknown format `{other}` (expected elf, pe, or auto)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    /// Magic bytes match neither a 64-bit ELF nor a PE32+ image.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    /// Magic bytes matched but header fields are inconsistent with the file.
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

const ELF_MAGIC: &[u8] = &[0x7F, b'E', b'L', b'F'];
const DOS_MAGIC: &[u8] = b"MZ";

fn sniff(bytes: &[u8]) -> Option<FormatHint> {
    if bytes.starts_with(ELF_MAGIC) {
        Some(FormatHint::Elf)
    } else if bytes.starts_with(DOS_MAGIC) {
        Some(FormatHint::Pe)
    } else {
        None
    }
}

/// Extract the executable sections of an in-memory binary image.
///
/// Returns exactly the sections the container flags executable, ordered by
/// virtual address. A valid binary with no executable content yields an
/// empty list, which is not an error. With an explicit `hint` the magic
/// bytes must agree with it.
pub fn load_sections(
    bytes: &[u8],
    source_path: &str,
    hint: FormatHint,
) -> Result<Vec<CodeSection>, LoadError> {
    let detected = sniff(bytes)
        .ok_or_else(|| LoadError::UnsupportedFormat("magic bytes match neither ELF nor PE".into()))?;
    let format = match hint {
        FormatHint::Auto => detected,
        explicit if explicit == detected => explicit,
        explicit => {
            return Err(LoadError::UnsupportedFormat(format!(
                "file magic indicates {detected:?}, but {explicit:?} was requested"
            )))
        }
    };
    let mut sections = match format {
        FormatHint::Elf => elf_sections(bytes, source_path)?,
        FormatHint::Pe => pe_sections(bytes, source_path)?,
        FormatHint::Auto => unreachable!("hint resolved above"),
    };
    sections.sort_by_key(|s| s.virtual_address);
    Ok(sections)
}

/// [`load_sections`] over a file on disk.
pub fn load_sections_from_path(path: &Path, hint: FormatHint) -> Result<Vec<CodeSection>, LoadError> {
    let bytes = fs::read(path)?;
    load_sections(&bytes, &path.to_string_lossy(), hint)
}

fn elf_sections(bytes: &[u8], source_path: &str) -> Result<Vec<CodeSection>, LoadError> {
    let elf = Elf::parse(bytes).map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
    if !elf.is_64 {
        return Err(LoadError::UnsupportedFormat(
            "32-bit ELF is not supported; analysis targets x86-64 binaries".into(),
        ));
    }
    let mut out = Vec::new();
    for sh in &elf.section_headers {
        if sh.sh_flags & u64::from(SHF_EXECINSTR) == 0 || !sh.is_alloc() {
            continue;
        }
        // SHT_NOBITS sections occupy no file space; nothing to analyze.
        let Some(range) = sh.file_range() else { continue };
        if range.is_empty() {
            continue;
        }
        let data = bytes.get(range.clone()).ok_or_else(|| {
            LoadError::MalformedContainer(format!(
                "section data {range:?} lies outside the file ({} bytes)",
                bytes.len()
            ))
        })?;
        let name = elf.shdr_strtab.get_at(sh.sh_name).unwrap_or("").to_string();
        out.push(CodeSection {
            name,
            virtual_address: sh.sh_addr,
            bytes: data.to_vec(),
            source_path: source_path.to_string(),
        });
    }
    Ok(out)
}

fn pe_sections(bytes: &[u8], source_path: &str) -> Result<Vec<CodeSection>, LoadError> {
    // Resolving data directories is unnecessary for section extraction and
    // fails on images whose certificate tables point outside the file.
    let opts = ParseOptions { resolve_rva: false, parse_attribute_certificates: false };
    let pe = PE::parse_with_opts(bytes, &opts).map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
    if !pe.is_64 {
        return Err(LoadError::UnsupportedFormat(
            "32-bit PE is not supported; analysis targets x86-64 binaries (PE32+)".into(),
        ));
    }
    let image_base = pe.image_base as u64;
    let mut out = Vec::new();
    for sec in &pe.sections {
        if sec.characteristics & IMAGE_SCN_MEM_EXECUTE == 0 {
            continue;
        }
        // On-disk bytes only: virtual_size beyond raw data is zero fill,
        // and raw data beyond virtual_size is file-alignment padding.
        let start = sec.pointer_to_raw_data as usize;
        let mut len = sec.size_of_raw_data as usize;
        if sec.virtual_size != 0 {
            len = len.min(sec.virtual_size as usize);
        }
        if len == 0 {
            continue;
        }
        let data = bytes.get(start..start + len).ok_or_else(|| {
            LoadError::MalformedContainer(format!(
                "section raw data {start}..{} lies outside the file ({} bytes)",
                start + len,
                bytes.len()
            ))
        })?;
        let name = sec.name().unwrap_or("").to_string();
        out.push(CodeSection {
            name,
            virtual_address: image_base + u64::from(sec.virtual_address),
            bytes: data.to_vec(),
            source_path: source_path.to_string(),
        });
    }
    Ok(out)
}

/// Function symbol spans for per-function attribution, sorted by address.
///
/// ELF: `STT_FUNC` entries from the symbol tables. PE: exported functions
/// (spans are synthesized as zero-length and match by nearest-preceding
/// address). Binaries without symbols yield an empty list.
pub fn load_function_symbols(bytes: &[u8]) -> Result<Vec<FunctionSymbol>, LoadError> {
    let format = sniff(bytes)
        .ok_or_else(|| LoadError::UnsupportedFormat("magic bytes match neither ELF nor PE".into()))?;
    let mut syms = match format {
        FormatHint::Elf => {
            let elf = Elf::parse(bytes).map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
            let mut v = Vec::new();
            for sym in elf.syms.iter().chain(elf.dynsyms.iter()) {
                if sym.st_type() != STT_FUNC || sym.st_value == 0 {
                    continue;
                }
                let Some(name) = elf.strtab.get_at(sym.st_name).or_else(|| elf.dynstrtab.get_at(sym.st_name))
                else {
                    continue;
                };
                if name.is_empty() {
                    continue;
                }
                v.push(FunctionSymbol { name: name.to_string(), address: sym.st_value, size: sym.st_size });
            }
            v
        }
        FormatHint::Pe => {
            let opts = ParseOptions { resolve_rva: true, parse_attribute_certificates: false };
            let pe = PE::parse_with_opts(bytes, &opts).map_err(|e| LoadError::MalformedContainer(e.to_string()))?;
            let base = pe.image_base as u64;
            pe.exports
                .iter()
                .filter_map(|e| {
                    let name = e.name?;
                    Some(FunctionSymbol { name: name.to_string(), address: base + e.rva as u64, size: 0 })
                })
                .collect()
        }
        FormatHint::Auto => unreachable!("sniff returns a concrete format"),
    };
    syms.sort_by(|a, b| a.address.cmp(&b.address).then_with(|| a.name.cmp(&b.name)));
    syms.dedup_by(|a, b| a.address == b.address && a.name == b.name);
    Ok(syms)
}
