//! Grammar + vocabulary → class table.

use std::time::Instant;

use crate::adjacency::{stack_adjacency, StackAdjacency};
use crate::classes::{grammar_digest, ClassKind, ClassTable};
use crate::displacement::{DisplacementSearch, SearchOptions, TokenDisplacement, DEFAULT_NODE_BUDGET};
use crate::error::Error;
use crate::gnf::{to_gnf_with, GnfGrammar, GnfOptions};
use crate::grammar::Cfg;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub gnf: GnfOptions,
    /// Search node cap per token.
    pub budget: u64,
    pub use_adjacency: bool,
    pub threads: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            gnf: GnfOptions::default(),
            budget: DEFAULT_NODE_BUDGET,
            use_adjacency: true,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileStats {
    pub tokens: usize,
    pub classes: usize,
    pub dead_tokens: usize,
    pub fallback_tokens: usize,
    pub gnf_productions: usize,
    pub adjacency_pairs: usize,
    pub seconds: f64,
}

impl CompileStats {
    pub fn ratio(&self) -> f64 {
        self.tokens as f64 / self.classes.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct CompileOutput {
    /// The validated input grammar.
    pub cfg: Cfg,
    pub gnf: GnfGrammar,
    pub adjacency: StackAdjacency,
    pub displacements: Vec<TokenDisplacement>,
    pub table: ClassTable,
    pub stats: CompileStats,
}

/// Validates, converts, computes every displacement and groups the tokens.
pub fn compile(cfg: &Cfg, vocab: &Vocabulary, options: &CompileOptions) -> Result<CompileOutput, Error> {
    if options.threads == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    let started = Instant::now();
    let cfg = cfg.clone().validate()?;
    let gnf = to_gnf_with(&cfg, options.gnf)?;
    let adjacency = stack_adjacency(&gnf);
    let search = DisplacementSearch::new(
        &gnf,
        &adjacency,
        SearchOptions {
            budget: options.budget,
            use_adjacency: options.use_adjacency,
        },
    );
    let displacements = search.compute_all(vocab.tokens(), options.threads);
    for (t, d) in vocab.tokens().iter().zip(&displacements) {
        if let TokenDisplacement::Computed(d) = d {
            assert!(
                d.pairs().iter().all(|(i, _)| i.len() <= t.len()),
                "input stack longer than its token"
            );
        }
    }
    let table = ClassTable::build(vocab, &displacements, grammar_digest(&cfg));
    let members = table.members();
    let count = |kind: ClassKind| -> usize {
        (0..table.class_count())
            .filter(|&k| table.kind(k as u32) == kind)
            .map(|k| members[k].len())
            .sum()
    };
    let stats = CompileStats {
        tokens: vocab.len(),
        classes: table.class_count(),
        dead_tokens: count(ClassKind::Dead),
        fallback_tokens: count(ClassKind::Fallback),
        gnf_productions: gnf.productions().len(),
        adjacency_pairs: adjacency.len(),
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok(CompileOutput {
        cfg,
        gnf,
        adjacency,
        displacements,
        table,
        stats,
    })
}
