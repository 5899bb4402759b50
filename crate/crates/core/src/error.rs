use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("{origin}:{line}:{col}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{origin}:{line}:{col}: reference to undefined rule `{name}`")]
    UndefinedRule {
        origin: String,
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{origin}: grammar has no rules")]
    EmptyGrammar { origin: String },
    #[error("empty language: start symbol `{start}` derives no terminal string")]
    EmptyLanguage { start: String },
    #[error("malformed grammar: {0}")]
    Malformed(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum GnfError {
    #[error("GNF conversion exceeded the production cap ({cap}) during {stage}")]
    TooManyProductions { cap: usize, stage: &'static str },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("GNF conversion failed: {0}")]
    Internal(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisplacementError {
    #[error("displacement is undefined for the empty token")]
    EmptyToken,
    #[error("search budget of {budget} nodes exceeded")]
    BudgetExceeded { budget: u64 },
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("special token id {id} out of range ({len} tokens)")]
    SpecialOutOfRange { id: u32, len: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a class-table cache (bad magic)")]
    BadMagic,
    #[error("cache format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("cache file is truncated or has trailing bytes")]
    Truncated,
    #[error("cache checksum mismatch (file is corrupt)")]
    ChecksumMismatch,
    #[error("stale cache: grammar digest does not match")]
    StaleGrammar,
    #[error("stale cache: vocabulary digest does not match")]
    StaleVocab,
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("token id {id} out of range ({len} tokens)")]
    TokenOutOfRange { id: u32, len: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("mask domain mismatch: expected a {expected} mask")]
    WrongDomain { expected: &'static str },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("token {id} is masked in the current state")]
    MaskedToken { id: u32 },
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("input of {len} bytes exceeds the oracle bound of {bound}")]
    TooLong { len: usize, bound: usize },
}

/// Top-level error for the compile pipeline and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Gnf(#[from] GnfError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
