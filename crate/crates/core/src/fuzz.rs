//! Mock-sampler decoding runs comparing naive and compressed masks.
//!
//! Each run keeps two engine states: one fed the sampled tokens' bytes and
//! one fed their class representatives' bytes. At every step the naive mask
//! of the first is compared with the expanded class mask of the second.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::classes::ClassTable;
use crate::engine::{Engine, EngineState};
use crate::error::Error;
use crate::mask::Mask;
use crate::vocab::{sha256, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub seed: u64,
    /// Maximum sampled tokens per run.
    pub steps: usize,
    pub runs: usize,
}

impl FuzzConfig {
    pub fn new(seed: u64, steps: usize, runs: usize) -> Result<Self, Error> {
        if steps == 0 || runs == 0 {
            return Err(Error::Config("steps and runs must be at least 1".into()));
        }
        Ok(Self { seed, steps, runs })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    /// A special (end-of-sequence) token was sampled.
    Completed,
    StepLimit,
    /// No token was allowed and the text was not complete.
    Stuck,
    /// The representative of a sampled token was rejected by the compressed
    /// state.
    Diverged,
}

impl RunOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RunOutcome::Completed => "completed",
            RunOutcome::StepLimit => "step-limit",
            RunOutcome::Stuck => "stuck",
            RunOutcome::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub step: usize,
    /// Short digest of the text before this step.
    pub state_digest: String,
    pub naive_mask: Mask,
    /// Expanded class mask, when a table was given.
    pub compressed_mask: Option<Mask>,
    pub sampled: Option<u32>,
    pub naive_ns: u64,
    pub compressed_ns: Option<u64>,
}

impl StepRecord {
    pub fn mismatch(&self) -> bool {
        self.compressed_mask.as_ref().is_some_and(|m| *m != self.naive_mask)
    }

    /// First token whose bits differ.
    pub fn first_difference(&self) -> Option<usize> {
        self.compressed_mask.as_ref().and_then(|m| m.diff(&self.naive_mask).next())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub seed: u64,
    pub run: usize,
    pub outcome: RunOutcome,
    pub steps: Vec<StepRecord>,
    /// Bytes of the sampled tokens, specials excluded.
    pub text: Vec<u8>,
}

impl RunReport {
    pub fn mismatches(&self) -> usize {
        self.steps.iter().filter(|s| s.mismatch()).count()
    }

    /// Steps at which a token was sampled.
    pub fn sampled_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.sampled.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzReport {
    pub config: FuzzConfig,
    pub runs: Vec<RunReport>,
}

/// A step whose masks differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub run: usize,
    pub step: usize,
    pub state_digest: String,
    pub token: usize,
}

impl FuzzReport {
    pub fn total_steps(&self) -> usize {
        self.runs.iter().map(|r| r.steps.len()).sum()
    }

    pub fn mismatches(&self) -> usize {
        self.runs.iter().map(RunReport::mismatches).sum()
    }

    pub fn count(&self, outcome: RunOutcome) -> usize {
        self.runs.iter().filter(|r| r.outcome == outcome).count()
    }

    pub fn first_mismatch(&self) -> Option<Mismatch> {
        self.runs.iter().find_map(|r| {
            r.steps.iter().find(|s| s.mismatch()).map(|s| Mismatch {
                run: r.run,
                step: s.step,
                state_digest: s.state_digest.clone(),
                token: s.first_difference().expect("masks differ"),
            })
        })
    }

    /// One JSON object per step.
    pub fn json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            for s in &r.steps {
                let line = json!({
                    "seed": r.seed,
                    "run": r.run,
                    "step": s.step,
                    "state": s.state_digest,
                    "naive_mask": s.naive_mask.to_hex(),
                    "compressed_mask": s.compressed_mask.as_ref().map(Mask::to_hex),
                    "allowed": s.naive_mask.count_ones(),
                    "sampled": s.sampled,
                    "mismatch": s.mismatch(),
                    "naive_ns": s.naive_ns,
                    "compressed_ns": s.compressed_ns,
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
        out
    }
}

fn digest_text(text: &[u8]) -> String {
    hex::encode(&sha256(text)[..8])
}

/// One decoding run. The sampler is seeded from `(seed, run)` only.
pub fn fuzz_run(engine: &Engine, vocab: &Vocabulary, table: Option<&ClassTable>, seed: u64, run: usize, steps: usize) -> RunReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut naive_state: EngineState = engine.new_state();
    let mut compressed_state = engine.new_state();
    let mut text = Vec::new();
    let mut records = Vec::new();
    let mut outcome = RunOutcome::StepLimit;
    for step in 0..steps {
        let t0 = Instant::now();
        let naive_mask = engine.compute_mask_naive(&naive_state, vocab);
        let naive_ns = t0.elapsed().as_nanos() as u64;
        let (compressed_mask, compressed_ns) = match table {
            Some(t) => {
                let t1 = Instant::now();
                let m = engine.compute_mask_compressed(&compressed_state, t, vocab);
                let m = t.expand(&m).expect("table matches vocabulary");
                (Some(m), Some(t1.elapsed().as_nanos() as u64))
            }
            None => (None, None),
        };
        let allowed: Vec<usize> = naive_mask.ones().collect();
        let sampled = (!allowed.is_empty()).then(|| allowed[rng.gen_range(0..allowed.len())] as u32);
        records.push(StepRecord {
            step,
            state_digest: digest_text(&text),
            naive_mask,
            compressed_mask,
            sampled,
            naive_ns,
            compressed_ns,
        });
        let Some(token) = sampled else {
            outcome = RunOutcome::Stuck;
            break;
        };
        if vocab.is_special(token) {
            outcome = RunOutcome::Completed;
            break;
        }
        naive_state = engine
            .try_advance(&naive_state, vocab.token(token))
            .expect("naive mask only allows viable tokens");
        text.extend_from_slice(vocab.token(token));
        if let Some(t) = table {
            match engine.commit_token(&compressed_state, token, t, vocab) {
                Ok(s) => compressed_state = s,
                Err(_) => {
                    outcome = RunOutcome::Diverged;
                    break;
                }
            }
        }
    }
    RunReport {
        seed,
        run,
        outcome,
        steps: records,
        text,
    }
}

/// `config.runs` independent runs, merged in run order.
pub fn fuzz_decode(
    engine: &Engine,
    vocab: &Vocabulary,
    table: Option<&ClassTable>,
    config: &FuzzConfig,
    threads: usize,
) -> FuzzReport {
    let one = |run: usize| fuzz_run(engine, vocab, table, config.seed, run, config.steps);
    let runs = if threads <= 1 {
        (0..config.runs).map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| (0..config.runs).into_par_iter().map(one).collect())
    };
    FuzzReport { config: *config, runs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{compile, CompileOptions};
    use crate::suite;

    #[test]
    fn same_seed_same_report() {
        let g = suite::grammar("dyck2");
        let v = suite::test_vocabulary(&g, 1);
        let out = compile(&g, &v, &CompileOptions::default()).unwrap();
        let e = Engine::new(&g).unwrap();
        let cfg = FuzzConfig::new(5, 30, 4).unwrap();
        let strip = |mut r: FuzzReport| {
            for run in &mut r.runs {
                for s in &mut run.steps {
                    s.naive_ns = 0;
                    s.compressed_ns = s.compressed_ns.map(|_| 0);
                }
            }
            r
        };
        let a = strip(fuzz_decode(&e, &v, Some(&out.table), &cfg, 1));
        let b = strip(fuzz_decode(&e, &v, Some(&out.table), &cfg, 2));
        assert_eq!(a, b);
        assert_eq!(a.mismatches(), 0);
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(FuzzConfig::new(0, 0, 1).is_err());
        assert!(FuzzConfig::new(0, 1, 0).is_err());
    }

    #[test]
    fn stuck_runs_are_reported() {
        let g = suite::grammar("arith");
        let v = Vocabulary::from_tokens([b"+"]);
        let e = Engine::new(&g).unwrap();
        let r = fuzz_run(&e, &v, None, 0, 0, 10);
        assert_eq!(r.outcome, RunOutcome::Stuck);
        assert_eq!(r.steps.len(), 1);
    }
}
