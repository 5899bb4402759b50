//! Reference constrained-decoding engine.
//!
//! An Earley recognizer over the original grammar (nullable symbols handled
//! at prediction time, Aycock–Horspool style). A state keeps one finished
//! set per consumed byte behind `Arc`s, so trial advances build a few
//! scratch sets on top and throw them away.

use std::sync::Arc;

use rustc_hash::FxHashSet;

use crate::classes::{ClassKind, ClassTable};
use crate::error::{EngineError, TableError};
use crate::grammar::{Cfg, Symbol};
use crate::mask::{Mask, MaskDomain};
use crate::vocab::Vocabulary;

const NO_SYMBOL: u32 = u32::MAX;

/// Dotted rules laid out contiguously per production, so advancing the dot
/// is `+ 1`.
#[derive(Debug)]
struct Compiled {
    /// Next symbol after the dot: terminal byte, `256 + nonterminal`, or
    /// `NO_SYMBOL` when the dot is at the end.
    next: Vec<u32>,
    /// Head of the production each dotted rule belongs to.
    head: Vec<u32>,
    /// First dotted rule of each production of each nonterminal.
    starts: Vec<Vec<u32>>,
    nullable: Vec<bool>,
    start: u32,
}

impl Compiled {
    fn new(g: &Cfg) -> Self {
        let mut next = Vec::new();
        let mut head = Vec::new();
        let mut starts = vec![Vec::new(); g.nonterminal_count()];
        for p in g.productions() {
            starts[p.head.index()].push(next.len() as u32);
            for s in &p.body {
                next.push(match *s {
                    Symbol::Terminal(b) => b as u32,
                    Symbol::Nonterminal(n) => 256 + n.0,
                });
                head.push(p.head.0);
            }
            next.push(NO_SYMBOL);
            head.push(p.head.0);
        }
        Self {
            next,
            head,
            starts,
            nullable: g.nullable(),
            start: g.start().0,
        }
    }
}

/// (dotted rule, origin set)
type Item = (u32, u32);

/// One finished Earley set, indexed for the two operations that read it
/// later: scanning the next byte and completing a nonterminal.
#[derive(Debug, Default)]
struct EarleySet {
    /// (byte, advanced item), sorted by byte.
    scans: Vec<(u8, Item)>,
    /// (nonterminal, advanced item), sorted by nonterminal.
    waiting: Vec<(u32, Item)>,
    complete: bool,
}

impl EarleySet {
    fn scan(&self, byte: u8) -> &[(u8, Item)] {
        let lo = self.scans.partition_point(|e| e.0 < byte);
        let hi = lo + self.scans[lo..].partition_point(|e| e.0 == byte);
        &self.scans[lo..hi]
    }

    fn waiting_on(&self, nt: u32) -> &[(u32, Item)] {
        let lo = self.waiting.partition_point(|e| e.0 < nt);
        let hi = lo + self.waiting[lo..].partition_point(|e| e.0 == nt);
        &self.waiting[lo..hi]
    }
}

#[derive(Default)]
struct Scratch {
    seen: FxHashSet<Item>,
    work: Vec<Item>,
    predicted: FxHashSet<u32>,
}

/// Recognizer state after some accepted bytes.
#[derive(Debug, Clone)]
pub struct EngineState {
    sets: Vec<Arc<EarleySet>>,
}

impl EngineState {
    /// Bytes consumed so far.
    pub fn consumed(&self) -> usize {
        self.sets.len() - 1
    }

    /// Whether the consumed bytes form a sentence.
    pub fn is_complete(&self) -> bool {
        self.sets.last().expect("at least one set").complete
    }
}

/// Result of asking for the next mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Mask(Mask),
    /// No token is allowed and the text is not complete.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct Engine {
    grammar: Arc<Compiled>,
}

impl Engine {
    /// Validates `g` and prepares the recognizer.
    pub fn new(g: &Cfg) -> Result<Self, EngineError> {
        let g = g.clone().validate()?;
        Ok(Self {
            grammar: Arc::new(Compiled::new(&g)),
        })
    }

    /// Recognizer for an already validated grammar.
    pub fn from_validated(g: &Cfg) -> Self {
        Self {
            grammar: Arc::new(Compiled::new(g)),
        }
    }

    pub fn new_state(&self) -> EngineState {
        let g = &*self.grammar;
        let kernel: Vec<Item> = g.starts[g.start as usize].iter().map(|&r| (r, 0)).collect();
        let mut scratch = Scratch::default();
        let set = self.close(kernel, 0, &[], &[], &mut scratch);
        EngineState {
            sets: vec![Arc::new(set)],
        }
    }

    /// Builds the set at position `pos` from its kernel. Earlier sets are
    /// `base` followed by `fresh`.
    fn close(
        &self,
        kernel: Vec<Item>,
        pos: u32,
        base: &[Arc<EarleySet>],
        fresh: &[EarleySet],
        s: &mut Scratch,
    ) -> EarleySet {
        let g = &*self.grammar;
        s.seen.clear();
        s.predicted.clear();
        s.work.clear();
        let mut set = EarleySet::default();
        for it in kernel {
            if s.seen.insert(it) {
                s.work.push(it);
            }
        }
        while let Some((rule, origin)) = s.work.pop() {
            let sym = g.next[rule as usize];
            if sym == NO_SYMBOL {
                let head = g.head[rule as usize];
                if origin == 0 && head == g.start {
                    set.complete = true;
                }
                // Completions with origin == pos are nullable and were
                // advanced at prediction time.
                if origin < pos {
                    let o = origin as usize;
                    let older = if o < base.len() { &*base[o] } else { &fresh[o - base.len()] };
                    for &(_, adv) in older.waiting_on(head) {
                        if s.seen.insert(adv) {
                            s.work.push(adv);
                        }
                    }
                }
            } else if sym < 256 {
                set.scans.push((sym as u8, (rule + 1, origin)));
            } else {
                let nt = sym - 256;
                set.waiting.push((nt, (rule + 1, origin)));
                if s.predicted.insert(nt) {
                    for &r in &g.starts[nt as usize] {
                        if s.seen.insert((r, pos)) {
                            s.work.push((r, pos));
                        }
                    }
                }
                if g.nullable[nt as usize] && s.seen.insert((rule + 1, origin)) {
                    s.work.push((rule + 1, origin));
                }
            }
        }
        set.scans.sort_unstable();
        set.waiting.sort_unstable();
        set
    }

    fn run(&self, state: &EngineState, bytes: &[u8], s: &mut Scratch) -> Option<Vec<EarleySet>> {
        let mut fresh: Vec<EarleySet> = Vec::with_capacity(bytes.len());
        for &b in bytes {
            let prev: &EarleySet = fresh.last().unwrap_or_else(|| state.sets.last().expect("non-empty"));
            let kernel: Vec<Item> = prev.scan(b).iter().map(|e| e.1).collect();
            if kernel.is_empty() {
                return None;
            }
            let pos = (state.sets.len() + fresh.len()) as u32;
            let set = self.close(kernel, pos, &state.sets, &fresh, s);
            fresh.push(set);
        }
        Some(fresh)
    }

    /// The state after `bytes`, or `None` if they leave the prefix language.
    pub fn try_advance(&self, state: &EngineState, bytes: &[u8]) -> Option<EngineState> {
        let fresh = self.run(state, bytes, &mut Scratch::default())?;
        let mut sets = state.sets.clone();
        sets.extend(fresh.into_iter().map(Arc::new));
        Some(EngineState { sets })
    }

    /// Whether appending `bytes` keeps the text viable.
    pub fn accepts(&self, state: &EngineState, bytes: &[u8]) -> bool {
        self.run(state, bytes, &mut Scratch::default()).is_some()
    }

    /// Trial-advances every token. Specials are allowed iff the state is
    /// complete.
    pub fn compute_mask_naive(&self, state: &EngineState, vocab: &Vocabulary) -> Mask {
        let mut s = Scratch::default();
        let complete = state.is_complete();
        Mask::from_fn(MaskDomain::Tokens, vocab.len(), |i| {
            let id = i as u32;
            if vocab.is_special(id) {
                complete
            } else {
                self.run(state, vocab.token(id), &mut s).is_some()
            }
        })
    }

    /// Trial-advances one representative per class.
    pub fn compute_mask_compressed(&self, state: &EngineState, table: &ClassTable, vocab: &Vocabulary) -> Mask {
        let mut s = Scratch::default();
        let complete = state.is_complete();
        Mask::from_fn(MaskDomain::Classes, table.class_count(), |k| match table.kind(k as u32) {
            ClassKind::Dead => false,
            ClassKind::Empty => true,
            ClassKind::Special => complete,
            ClassKind::Grammar | ClassKind::Fallback => {
                let rep = vocab.token(table.representative(k as u32));
                self.run(state, rep, &mut s).is_some()
            }
        })
    }

    /// Advances by the representative of `token`'s class. Specials leave the
    /// state unchanged.
    pub fn commit_token(
        &self,
        state: &EngineState,
        token: u32,
        table: &ClassTable,
        vocab: &Vocabulary,
    ) -> Result<EngineState, EngineError> {
        let rep = table.map_token(token)?;
        if vocab.is_special(token) {
            return if state.is_complete() {
                Ok(state.clone())
            } else {
                Err(EngineError::MaskedToken { id: token })
            };
        }
        self.try_advance(state, vocab.token(rep))
            .ok_or(EngineError::MaskedToken { id: token })
    }
}

/// Decoding wrapper: the sampler sees full-vocabulary masks, the
/// engine only ever sees representatives, and the text keeps the sampled
/// tokens' bytes.
#[derive(Debug, Clone)]
pub struct CompressedStream<'a> {
    engine: &'a Engine,
    table: &'a ClassTable,
    vocab: &'a Vocabulary,
    state: EngineState,
    text: Vec<u8>,
    tokens: Vec<u32>,
}

impl<'a> CompressedStream<'a> {
    pub fn new(engine: &'a Engine, table: &'a ClassTable, vocab: &'a Vocabulary) -> Result<Self, TableError> {
        if table.token_count() != vocab.len() {
            return Err(TableError::LengthMismatch {
                expected: vocab.len(),
                actual: table.token_count(),
            });
        }
        Ok(Self {
            engine,
            table,
            vocab,
            state: engine.new_state(),
            text: Vec::new(),
            tokens: Vec::new(),
        })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// Bytes of the sampled tokens.
    pub fn text(&self) -> &[u8] {
        &self.text
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn class_mask(&self) -> Mask {
        self.engine.compute_mask_compressed(&self.state, self.table, self.vocab)
    }

    /// Class mask, or `Stuck` when nothing is allowed.
    pub fn step(&self) -> StepOutcome {
        let m = self.class_mask();
        if m.none() {
            StepOutcome::Stuck
        } else {
            StepOutcome::Mask(m)
        }
    }

    /// Full-vocabulary mask expanded from the class mask.
    pub fn token_mask(&self) -> Mask {
        self.table.expand(&self.class_mask()).expect("table matches vocabulary")
    }

    pub fn commit(&mut self, token: u32) -> Result<(), EngineError> {
        self.state = self.engine.commit_token(&self.state, token, self.table, self.vocab)?;
        if !self.vocab.is_special(token) {
            self.text.extend_from_slice(self.vocab.token(token));
        }
        self.tokens.push(token);
        Ok(())
    }
}
