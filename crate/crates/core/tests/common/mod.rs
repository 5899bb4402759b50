//! Helpers shared by the timing-based test targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfgzip::bench::{bench, BenchReport};
use cfgzip::fuzz::FuzzConfig;
use cfgzip::{compile, suite, Cfg, CompileOptions, Engine, Vocabulary};

/// One token per class of the test vocabulary, specials and the empty token
/// dropped. Every token of the result is its own class.
pub fn distinct_tokens(g: &Cfg) -> Vec<Vec<u8>> {
    let v = suite::test_vocabulary(g, 0);
    let out = compile(g, &v, &CompileOptions::default()).unwrap();
    out.table
        .representatives()
        .iter()
        .filter(|&&r| !v.is_special(r) && !v.token(r).is_empty())
        .map(|&r| v.token(r).to_vec())
        .collect()
}

/// `base` repeated `copies` times, in shuffled order, with no specials.
pub fn with_duplicates(base: &[Vec<u8>], copies: usize, seed: u64) -> Vocabulary {
    let mut tokens: Vec<Vec<u8>> = (0..copies).flat_map(|_| base.iter().cloned()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..tokens.len()).rev() {
        tokens.swap(i, rng.gen_range(0..=i));
    }
    Vocabulary::new(tokens, []).unwrap()
}

/// `n` tokens cycling through `base`.
pub fn cycled(base: &[Vec<u8>], n: usize) -> Vocabulary {
    Vocabulary::new(base.iter().cycle().take(n).cloned().collect(), []).unwrap()
}

pub fn measure(g: &Cfg, v: &Vocabulary, steps: usize, runs: usize) -> BenchReport {
    let out = compile(g, v, &CompileOptions::default()).unwrap();
    let engine = Engine::new(g).unwrap();
    let config = FuzzConfig::new(1, steps, runs).unwrap();
    bench(&engine, v, &out.table, &config, 1)
}
