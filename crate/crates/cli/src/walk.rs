//! Deterministic candidate collection for `analyze`.
//!
//! Directories are walked with entries sorted by name, symlinks are
//! followed at most one level deep (enough for the usual `lib -> usr/lib`
//! indirection), and walked files are magic-sniffed so text files never
//! reach the decoder. Explicitly named files always become candidates so
//! their errors surface per file.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

const MAX_SYMLINK_DEPTH: u32 = 1;

pub fn collect_candidates(inputs: &[PathBuf]) -> Vec<PathBuf> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for input in inputs {
        let Ok(link_meta) = fs::symlink_metadata(input) else {
            eprintln!("jccscan: skipping {}: no such file or directory", input.display());
            continue;
        };
        let depth = u32::from(link_meta.is_symlink());
        match fs::metadata(input) {
            Err(err) => eprintln!("jccscan: skipping {}: {err}", input.display()),
            Ok(meta) if meta.is_dir() => walk_dir(input, depth, &mut seen, &mut out),
            Ok(_) => push_unique(input, &mut seen, &mut out),
        }
    }
    out
}

fn walk_dir(dir: &Path, depth: u32, seen: &mut HashSet<PathBuf>, out: &mut Vec<PathBuf>) {
    let mut entries: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(err) => {
            eprintln!("jccscan: skipping {}: {err}", dir.display());
            return;
        }
    };
    entries.sort();
    for path in entries {
        let Ok(link_meta) = fs::symlink_metadata(&path) else { continue };
        let next_depth = depth + u32::from(link_meta.is_symlink());
        if link_meta.is_symlink() && next_depth > MAX_SYMLINK_DEPTH {
            continue;
        }
        // Follows the link; broken links drop out here.
        let Ok(meta) = fs::metadata(&path) else { continue };
        if meta.is_dir() {
            walk_dir(&path, next_depth, seen, out);
        } else if meta.is_file() && sniffs_binary(&path) {
            push_unique(&path, seen, out);
        }
    }
}

/// True when the file starts with an ELF or PE (MZ) magic.
fn sniffs_binary(path: &Path) -> bool {
    let mut magic = [0u8; 4];
    match fs::File::open(path).and_then(|mut f| f.read_exact(&mut magic)) {
        Ok(()) => magic == *b"\x7fELF" || magic[..2] == *b"MZ",
        Err(_) => false,
    }
}

fn push_unique(path: &Path, seen: &mut HashSet<PathBuf>, out: &mut Vec<PathBuf>) {
    let key = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    if seen.insert(key) {
        out.push(path.to_path_buf());
    }
}
