//! Inputs shared by the benchmarks.

use qlc_core::lang::{parse_entry_expression, Expr};

pub const SMALLEST: &str = include_str!("../../core/fixtures/smallest.mjq");
pub const COUNT_VOWELS: &str = include_str!("../../core/fixtures/count_vowels.mjq");

pub const SMALLEST_ENTRIES: [&str; 2] = [r#"smallest("ABBA")"#, r#"smallestFrom("ACDC", 0)"#];

pub fn entries(texts: &[&str]) -> Vec<Expr> {
    texts
        .iter()
        .map(|e| parse_entry_expression(e).expect("bench entry parses"))
        .collect()
}

/// A word of `len` letters cycling through the alphabet backwards.
pub fn word(len: usize) -> String {
    (0..len).map(|i| char::from(b'z' - (i % 26) as u8)).collect()
}
