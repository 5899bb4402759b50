//! Grammar-relative token vocabulary compression.
//!
//! Tokens of a vocabulary are grouped into classes that are interchangeable
//! under a context-free grammar, so a constrained decoder can check one
//! representative per class instead of every token. The pipeline:
//!
//! 1. [`grammar`]: parse and validate a byte-level grammar.
//! 2. [`gnf`]: convert it to Greibach normal form.
//! 3. [`adjacency`]: precompute which stack symbols can be popped in a row.
//! 4. [`displacement`]: compute how each token rewrites the automaton stack.
//! 5. [`classes`]: group tokens with equal displacements and cache the result.
//!
//! [`engine`] is a reference Earley recognizer producing naive and
//! compressed masks; [`oracle`], [`fuzz`] and [`bench`] check and measure
//! the two against each other.

pub mod adjacency;
pub mod bench;
pub mod classes;
pub mod displacement;
pub mod engine;
pub mod error;
pub mod fuzz;
pub mod gnf;
pub mod grammar;
pub mod mask;
pub mod oracle;
pub mod pipeline;
pub mod suite;
pub mod vocab;

pub use classes::{ClassKind, ClassTable};
pub use engine::{CompressedStream, Engine, EngineState, StepOutcome};
pub use error::Error;
pub use gnf::{to_gnf, GnfGrammar};
pub use grammar::{parse_grammar, Cfg, GrammarSource};
pub use mask::{Mask, MaskDomain};
pub use pipeline::{compile, CompileOptions, CompileOutput};
pub use vocab::Vocabulary;
