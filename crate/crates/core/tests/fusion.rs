mod common;

use jccscan_core::fusion::{builtin_profile, is_fusible_pair, ArchProfile, ProfileError};
use jccscan_core::insn::{AdjacentPair, Cond, OperandTraits};

use common::{jump_record, pair_at, record_with_traits};

fn pair_with_traits(mnemonic: &str, traits: OperandTraits, tag: &str) -> AdjacentPair {
    let first = record_with_traits(0, 4, mnemonic, traits);
    AdjacentPair::new(first, jump_record(4, 2, tag)).unwrap()
}

#[test]
fn skylake_rows_and_conditions() {
    let p = builtin_profile("skylake_family").unwrap();
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "z")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "sub", "nz")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "test", "s")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "and", "o")));
    // `inc` fuses only with the zero/less/greater family.
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "inc", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "inc", "c")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "s")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "mov", "z")));
}

#[test]
fn aliases_and_negations_fuse() {
    let p = builtin_profile("skylake_family").unwrap();
    // jb aliases jc; jae is its negation; je aliases jz.
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "b")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "ae")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "e")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "dec", "ng")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "test", "np")));
}

#[test]
fn negation_lookup_can_be_disabled() {
    let mut p = builtin_profile("skylake_family").unwrap();
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "nz")));
    p.fuse_negated_jumps = false;
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "nz")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "z")));
}

#[test]
fn operand_exclusions_reject() {
    let p = builtin_profile("skylake_family").unwrap();
    for traits in [
        OperandTraits::RIP_RELATIVE_OPERAND,
        OperandTraits::MEMORY_DESTINATION,
        OperandTraits::IMMEDIATE_AND_MEMORY_SOURCE,
    ] {
        assert!(!is_fusible_pair(&p, &pair_with_traits("cmp", traits, "z")), "{traits:?}");
        assert!(!is_fusible_pair(&p, &pair_with_traits("add", traits, "z")), "{traits:?}");
    }
    assert!(is_fusible_pair(&p, &pair_with_traits("cmp", OperandTraits::NONE, "z")));
}

#[test]
fn exclusions_are_configurable() {
    let mut p = builtin_profile("skylake_family").unwrap();
    p.operand_exclusions = OperandTraits::RIP_RELATIVE_OPERAND;
    assert!(is_fusible_pair(&p, &pair_with_traits("cmp", OperandTraits::MEMORY_DESTINATION, "z")));
    assert!(!is_fusible_pair(&p, &pair_with_traits("cmp", OperandTraits::RIP_RELATIVE_OPERAND, "z")));
}

#[test]
fn zen2_restricts_to_test_and_cmp() {
    let p = builtin_profile("zen2").unwrap();
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "z")));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "test", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "sub", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "add", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "inc", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "and", "z")));
    assert_eq!(p.fusible_table.len(), 2);
}

#[test]
fn builtin_boundaries() {
    for name in ["skylake_family", "zen2"] {
        let p = builtin_profile(name).unwrap();
        assert_eq!((p.fetch_window, p.exclusion_boundary, p.cache_line), (16, 32, 64));
        p.validate().unwrap();
    }
}

#[test]
fn unknown_profile_is_an_error() {
    assert!(matches!(builtin_profile("haswell"), Err(ProfileError::UnknownProfile(_))));
}

#[test]
fn fusibility_ignores_addresses() {
    let p = builtin_profile("skylake_family").unwrap();
    for offset in [0u64, 27, 60, 63, 1000, 4096] {
        assert!(is_fusible_pair(&p, &pair_at(offset, 4, 2, "cmp", "z")), "offset {offset}");
    }
}

#[test]
fn toml_round_trip_preserves_profile() {
    for name in ["skylake_family", "zen2"] {
        let p = builtin_profile(name).unwrap();
        let text = p.to_toml_string();
        let back = ArchProfile::from_toml_str(&text).unwrap();
        assert_eq!(back, p, "{name}");
    }
}

#[test]
fn profile_file_accepts_alias_tags() {
    let text = r#"
name = "custom"
fuse_negated_jumps = false
operand_exclusions = ["rip_relative_operand"]
fetch_window = 16
exclusion_boundary = 32
cache_line = 64

[fusible]
cmp = ["e", "b", "ae"]
"#;
    let p = ArchProfile::from_toml_str(text).unwrap();
    let row = &p.fusible_table["cmp"];
    assert!(row.contains(&Cond::Z) && row.contains(&Cond::C) && row.contains(&Cond::Nc));
    assert!(is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "z")));
    assert!(!is_fusible_pair(&p, &pair_at(0, 4, 2, "cmp", "nz")));
}

#[test]
fn malformed_profiles_rejected() {
    let bad_tag = r#"
name = "x"
fuse_negated_jumps = true
operand_exclusions = []
fetch_window = 16
exclusion_boundary = 32
cache_line = 64
[fusible]
cmp = ["zz"]
"#;
    assert!(matches!(ArchProfile::from_toml_str(bad_tag), Err(ProfileError::InvalidProfile(_))));

    let bad_boundaries = r#"
name = "x"
fuse_negated_jumps = true
operand_exclusions = []
fetch_window = 24
exclusion_boundary = 32
cache_line = 64
[fusible]
cmp = ["z"]
"#;
    assert!(matches!(
        ArchProfile::from_toml_str(bad_boundaries),
        Err(ProfileError::InvalidProfile(_))
    ));
}
