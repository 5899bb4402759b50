//! Token displacements: how a token rewrites the GNF automaton's stack.
//!
//! The displacement of token `t` is the set of pairs `(input, output)` such
//! that consuming exactly the symbols `input` (in order, from the top of some
//! stack) while reading `t` leaves `output` pushed in their place. Two tokens
//! with equal displacements are interchangeable everywhere in the language.
//!
//! The search starts with an empty output stack. Whenever the output stack
//! runs empty before the token ends, the search "backtracks" into the input:
//! it guesses the next input symbol `A` among heads of productions `A -> c β`
//! for the current byte `c`. Guesses are pruned with [`StackAdjacency`]
//! against the last symbol popped (or guessed), except for the very first one.

use std::collections::BTreeSet;
use std::rc::Rc;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::adjacency::StackAdjacency;
use crate::error::DisplacementError;
use crate::gnf::GnfGrammar;
use crate::grammar::NtId;

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Input queue and output stack; the output stack is listed top first.
pub type StackPair = (Vec<NtId>, Vec<NtId>);

/// A canonically ordered set of stack pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Displacement {
    pairs: Vec<StackPair>,
}

impl Displacement {
    pub fn from_pairs(pairs: impl IntoIterator<Item = StackPair>) -> Self {
        let set: BTreeSet<StackPair> = pairs.into_iter().collect();
        Self {
            pairs: set.into_iter().collect(),
        }
    }

    pub fn pairs(&self) -> &[StackPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: &StackPair) -> bool {
        self.pairs.binary_search(pair).is_ok()
    }
}

/// Per-token result of a vocabulary sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenDisplacement {
    /// The token has no bytes.
    Empty,
    Computed(Displacement),
    /// The search hit its node budget; the token must be checked on its own.
    BudgetExceeded,
}

/// One step of a recorded search path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    /// Byte position in the token.
    pub position: usize,
    /// Index of the GNF production applied.
    pub production: u32,
    /// Whether this step guessed a new input symbol.
    pub backtrack: bool,
    pub input: Vec<NtId>,
    /// Top first.
    pub output: Vec<NtId>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Maximum search nodes per token.
    pub budget: u64,
    /// Prune backtracks with the adjacency relation.
    pub use_adjacency: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_NODE_BUDGET,
            use_adjacency: true,
        }
    }
}

/// Displacement computation for one grammar.
pub struct DisplacementSearch<'a> {
    grammar: &'a GnfGrammar,
    adjacency: &'a StackAdjacency,
    options: SearchOptions,
    known_bytes: [bool; 256],
}

/// Results reachable from one search node: input symbols still to be guessed
/// and the final output stack (stored bottom first).
type Partial = Rc<Vec<(Vec<NtId>, Vec<NtId>)>>;

struct Memo {
    table: FxHashMap<(usize, Vec<NtId>, Option<NtId>), Partial>,
    nodes: u64,
}

impl<'a> DisplacementSearch<'a> {
    pub fn new(grammar: &'a GnfGrammar, adjacency: &'a StackAdjacency, options: SearchOptions) -> Self {
        let mut known_bytes = [false; 256];
        for &b in grammar.alphabet() {
            known_bytes[b as usize] = true;
        }
        Self {
            grammar,
            adjacency,
            options,
            known_bytes,
        }
    }

    pub fn options(&self) -> SearchOptions {
        self.options
    }

    #[inline]
    fn allowed(&self, prev: Option<NtId>, next: NtId) -> bool {
        match prev {
            None => true,
            Some(_) if !self.options.use_adjacency => true,
            Some(p) => self.adjacency.contains(p, next),
        }
    }

    /// Displacement of a single non-empty token.
    pub fn compute(&self, token: &[u8]) -> Result<Displacement, DisplacementError> {
        if token.is_empty() {
            return Err(DisplacementError::EmptyToken);
        }
        if token.iter().any(|&b| !self.known_bytes[b as usize]) {
            return Ok(Displacement::default());
        }
        let mut memo = Memo {
            table: FxHashMap::default(),
            nodes: 0,
        };
        let results = self.search(token, 0, Vec::new(), None, &mut memo)?;
        Ok(Displacement::from_pairs(results.iter().map(|(input, out)| {
            let mut top_first = out.clone();
            top_first.reverse();
            (input.clone(), top_first)
        })))
    }

    /// `stack` is bottom first (top at the end).
    fn search(
        &self,
        token: &[u8],
        pos: usize,
        stack: Vec<NtId>,
        prev: Option<NtId>,
        memo: &mut Memo,
    ) -> Result<Partial, DisplacementError> {
        if pos == token.len() {
            return Ok(Rc::new(vec![(Vec::new(), stack)]));
        }
        let key = (pos, stack, prev);
        if let Some(hit) = memo.table.get(&key) {
            return Ok(hit.clone());
        }
        memo.nodes += 1;
        if memo.nodes > self.options.budget {
            return Err(DisplacementError::BudgetExceeded {
                budget: self.options.budget,
            });
        }
        let (pos, stack, prev) = (key.0, key.1.clone(), key.2);
        let byte = token[pos];
        let mut out: BTreeSet<(Vec<NtId>, Vec<NtId>)> = BTreeSet::new();
        match stack.last() {
            None => {
                for &pi in self.grammar.productions_with_byte(byte) {
                    let p = self.grammar.production(pi);
                    if !self.allowed(prev, p.head) {
                        continue;
                    }
                    let next: Vec<NtId> = p.tail.iter().rev().copied().collect();
                    for (input, fin) in self.search(token, pos + 1, next, Some(p.head), memo)?.iter() {
                        let mut guessed = Vec::with_capacity(input.len() + 1);
                        guessed.push(p.head);
                        guessed.extend_from_slice(input);
                        out.insert((guessed, fin.clone()));
                    }
                }
            }
            Some(&top) => {
                for &pi in self.grammar.transitions(byte, top) {
                    let p = self.grammar.production(pi);
                    let mut next = stack.clone();
                    next.pop();
                    next.extend(p.tail.iter().rev());
                    let sub = self.search(token, pos + 1, next, Some(top), memo)?;
                    out.extend(sub.iter().cloned());
                }
            }
        }
        let result: Partial = Rc::new(out.into_iter().collect());
        memo.table.insert(key, result.clone());
        Ok(result)
    }

    /// Sweep over a vocabulary on `threads` workers; output order is by
    /// token index regardless of scheduling.
    pub fn compute_all<T: AsRef<[u8]> + Sync>(&self, tokens: &[T], threads: usize) -> Vec<TokenDisplacement>
    where
        Self: Sync,
    {
        let one = |t: &T| -> TokenDisplacement {
            match self.compute(t.as_ref()) {
                Ok(d) => TokenDisplacement::Computed(d),
                Err(DisplacementError::EmptyToken) => TokenDisplacement::Empty,
                Err(DisplacementError::BudgetExceeded { .. }) => TokenDisplacement::BudgetExceeded,
            }
        };
        if threads <= 1 {
            return tokens.iter().map(one).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| tokens.par_iter().map(one).collect())
    }

    /// Every search path that yields a result, without memoization.
    ///
    /// Exponential; for small tokens and tests only.
    pub fn trace(&self, token: &[u8]) -> Vec<(StackPair, Vec<TraceStep>)> {
        let mut paths = Vec::new();
        let mut steps = Vec::new();
        self.trace_rec(token, 0, &mut Vec::new(), &mut Vec::new(), None, &mut steps, &mut paths);
        paths
    }

    #[allow(clippy::too_many_arguments)]
    fn trace_rec(
        &self,
        token: &[u8],
        pos: usize,
        input: &mut Vec<NtId>,
        stack: &mut Vec<NtId>,
        prev: Option<NtId>,
        steps: &mut Vec<TraceStep>,
        paths: &mut Vec<(StackPair, Vec<TraceStep>)>,
    ) {
        if pos == token.len() {
            let top_first: Vec<NtId> = stack.iter().rev().copied().collect();
            paths.push(((input.clone(), top_first), steps.clone()));
            return;
        }
        let byte = token[pos];
        let record = |input: &Vec<NtId>, stack: &Vec<NtId>, production: u32, backtrack: bool, steps: &mut Vec<TraceStep>| {
            steps.push(TraceStep {
                position: pos,
                production,
                backtrack,
                input: input.clone(),
                output: stack.iter().rev().copied().collect(),
            });
        };
        match stack.last().copied() {
            None => {
                for &pi in self.grammar.productions_with_byte(byte) {
                    let p = self.grammar.production(pi);
                    if !self.allowed(prev, p.head) {
                        continue;
                    }
                    input.push(p.head);
                    let saved = std::mem::replace(stack, p.tail.iter().rev().copied().collect());
                    record(input, stack, pi, true, steps);
                    self.trace_rec(token, pos + 1, input, stack, Some(p.head), steps, paths);
                    steps.pop();
                    *stack = saved;
                    input.pop();
                }
            }
            Some(top) => {
                for &pi in self.grammar.transitions(byte, top) {
                    let p = self.grammar.production(pi);
                    let saved = stack.clone();
                    stack.pop();
                    stack.extend(p.tail.iter().rev());
                    record(input, stack, pi, false, steps);
                    self.trace_rec(token, pos + 1, input, stack, Some(top), steps, paths);
                    steps.pop();
                    *stack = saved;
                }
            }
        }
    }
}
