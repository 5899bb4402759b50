//! Brute-force oracles that share no code with the engine or the GNF path.
//!
//! Membership and prefix questions go through a bitset CYK chart over a
//! Chomsky-normal-form copy of the grammar, built column by column so that
//! depth-first enumerations can push and pop single bytes.
//!
//! The prefix check is exact. Besides the usual cells `N[i][j]` (symbols
//! deriving exactly `w[i..j]`), each column `j` keeps `P[i][j]`, the symbols
//! deriving `w[i..j]` followed by anything:
//!
//! ```text
//! P[j][j] = every symbol
//! P[i][j] = left-closure( N[i][j] ∪ { A | A -> B C, B ∈ N[i][k], C ∈ P[k][j], i < k < j } )
//! ```
//!
//! where left-closure adds `A` whenever `A -> B C` and `B` is already in.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use sha2::{Digest as _, Sha256};

use crate::adjacency::StackAdjacency;
use crate::classes::{ClassKind, ClassTable};
use crate::displacement::{Displacement, StackPair};
use crate::error::OracleError;
use crate::gnf::GnfGrammar;
use crate::grammar::{Cfg, NtId, Symbol};
use crate::vocab::Vocabulary;

pub const DEFAULT_BOUND: usize = 16;

#[derive(Clone, PartialEq, Eq, Debug)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn has(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        ones(&self.0)
    }
}

fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    {
        words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    wi * 64 + b
                })
            })
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Sym {
    T(u8),
    N(usize),
}

/// Chomsky normal form: `A -> a`, `A -> B C`, plus a flag for `ε`.
#[derive(Debug, Clone)]
struct Cnf {
    start: usize,
    start_nullable: bool,
    /// Symbols with `A -> b`, per byte.
    by_byte: Vec<Bits>,
    /// `(C, A)` for every `A -> B C`, indexed by `B`.
    by_left: Vec<Vec<(usize, usize)>>,
    /// `(B, C)` for every `A -> B C`, indexed by `A`.
    by_head: Vec<Vec<(usize, usize)>>,
    /// Each symbol plus everything having it as a leftmost descendant.
    left_closure: Vec<Bits>,
    all: Bits,
}

fn nullable_of(n: usize, rules: &[(usize, Vec<Sym>)]) -> Vec<bool> {
    let mut nullable = vec![false; n];
    let mut changed = true;
    while changed {
        changed = false;
        for (h, body) in rules {
            if !nullable[*h] && body.iter().all(|s| matches!(s, Sym::N(x) if nullable[*x])) {
                nullable[*h] = true;
                changed = true;
            }
        }
    }
    nullable
}

impl Cnf {
    fn new(g: &Cfg) -> Self {
        let mut n = g.nonterminal_count();
        let start = g.start().index();
        let mut rules: Vec<(usize, Vec<Sym>)> = g
            .productions()
            .iter()
            .map(|p| {
                let body = p
                    .body
                    .iter()
                    .map(|s| match *s {
                        Symbol::Terminal(b) => Sym::T(b),
                        Symbol::Nonterminal(x) => Sym::N(x.index()),
                    })
                    .collect();
                (p.head.index(), body)
            })
            .collect();

        // Terminals inside longer bodies get their own symbol.
        let mut proxy: BTreeMap<u8, usize> = BTreeMap::new();
        for (_, body) in rules.iter_mut() {
            if body.len() >= 2 {
                for s in body.iter_mut() {
                    if let Sym::T(b) = *s {
                        let id = *proxy.entry(b).or_insert_with(|| {
                            n += 1;
                            n - 1
                        });
                        *s = Sym::N(id);
                    }
                }
            }
        }
        for (&b, &id) in &proxy {
            rules.push((id, vec![Sym::T(b)]));
        }

        // Split long bodies into chains of pairs.
        let mut binary: Vec<(usize, Vec<Sym>)> = Vec::new();
        for (h, body) in rules {
            if body.len() <= 2 {
                binary.push((h, body));
                continue;
            }
            let mut head = h;
            for s in &body[..body.len() - 2] {
                let helper = n;
                n += 1;
                binary.push((head, vec![*s, Sym::N(helper)]));
                head = helper;
            }
            binary.push((head, body[body.len() - 2..].to_vec()));
        }

        // Remove ε by adding the variants that skip nullable symbols.
        let nullable = nullable_of(n, &binary);
        let mut unit: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut terminal: Vec<BTreeSet<u8>> = vec![BTreeSet::new(); n];
        let mut pairs: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n];
        for (h, body) in &binary {
            match body.as_slice() {
                [] => {}
                [Sym::T(b)] => {
                    terminal[*h].insert(*b);
                }
                [Sym::N(x)] => {
                    unit[*h].insert(*x);
                }
                [Sym::N(b), Sym::N(c)] => {
                    pairs[*h].insert((*b, *c));
                    if nullable[*b] {
                        unit[*h].insert(*c);
                    }
                    if nullable[*c] {
                        unit[*h].insert(*b);
                    }
                }
                other => unreachable!("non-binary body {other:?}"),
            }
        }

        // Remove unit rules through their reflexive-transitive closure.
        let mut by_byte = vec![Bits::new(n); 256];
        let mut binaries: Vec<(usize, usize, usize)> = Vec::new();
        for a in 0..n {
            let mut seen = vec![false; n];
            let mut stack = vec![a];
            seen[a] = true;
            while let Some(x) = stack.pop() {
                for &b in &terminal[x] {
                    by_byte[b as usize].set(a);
                }
                for &(b, c) in &pairs[x] {
                    binaries.push((a, b, c));
                }
                for &y in &unit[x] {
                    if !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }

        // Keep productive symbols only.
        let mut productive = vec![false; n];
        for bits in &by_byte {
            for a in bits.ones() {
                productive[a] = true;
            }
        }
        let mut changed = true;
        while changed {
            changed = false;
            for &(a, b, c) in &binaries {
                if !productive[a] && productive[b] && productive[c] {
                    productive[a] = true;
                    changed = true;
                }
            }
        }
        binaries.retain(|&(a, b, c)| productive[a] && productive[b] && productive[c]);
        binaries.sort_unstable();
        binaries.dedup();

        let mut by_left = vec![Vec::new(); n];
        let mut by_head = vec![Vec::new(); n];
        for &(a, b, c) in &binaries {
            by_left[b].push((c, a));
            by_head[a].push((b, c));
        }
        let mut left_closure = Vec::with_capacity(n);
        for b in 0..n {
            let mut bits = Bits::new(n);
            bits.set(b);
            let mut stack = vec![b];
            while let Some(x) = stack.pop() {
                for &(_, a) in &by_left[x] {
                    if !bits.has(a) {
                        bits.set(a);
                        stack.push(a);
                    }
                }
            }
            left_closure.push(bits);
        }
        let mut all = Bits::new(n);
        for (a, &p) in productive.iter().enumerate() {
            if p {
                all.set(a);
            }
        }
        Cnf {
            start,
            start_nullable: nullable[start],
            by_byte,
            by_left,
            by_head,
            left_closure,
            all,
        }
    }

    fn words(&self) -> usize {
        self.all.0.len()
    }

    fn combine(&self, left: &[u64], right: &[u64], out: &mut [u64]) {
        for b in ones(left) {
            for &(c, a) in &self.by_left[b] {
                if right[c / 64] >> (c % 64) & 1 == 1 {
                    out[a / 64] |= 1 << (a % 64);
                }
            }
        }
    }

    fn close_left(&self, bits: &[u64], out: &mut [u64]) {
        out.fill(0);
        for b in ones(bits) {
            for (o, x) in out.iter_mut().zip(&self.left_closure[b].0) {
                *o |= x;
            }
        }
    }
}

/// Membership and prefix oracle for one grammar.
#[derive(Debug, Clone)]
pub struct Oracle {
    cnf: Cnf,
    alphabet: Vec<u8>,
    bound: usize,
}

impl Oracle {
    pub fn new(g: &Cfg) -> Self {
        Self::with_bound(g, DEFAULT_BOUND)
    }

    pub fn with_bound(g: &Cfg, bound: usize) -> Self {
        Self {
            cnf: Cnf::new(g),
            alphabet: g.alphabet().iter().copied().collect(),
            bound,
        }
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn alphabet(&self) -> &[u8] {
        &self.alphabet
    }

    fn check(&self, w: &[u8]) -> Result<(), OracleError> {
        if w.len() > self.bound {
            return Err(OracleError::TooLong {
                len: w.len(),
                bound: self.bound,
            });
        }
        Ok(())
    }

    fn chart_of(&self, w: &[u8]) -> Chart<'_> {
        let mut c = self.chart();
        for &b in w {
            c.push(b);
        }
        c
    }

    /// `w ∈ L`.
    pub fn membership(&self, w: &[u8]) -> Result<bool, OracleError> {
        self.check(w)?;
        Ok(self.chart_of(w).accepts())
    }

    /// `w` is a prefix of some sentence.
    pub fn prefix(&self, w: &[u8]) -> Result<bool, OracleError> {
        self.check(w)?;
        Ok(self.chart_of(w).viable())
    }

    /// An empty incremental chart. Charts are not length-bounded.
    pub fn chart(&self) -> Chart<'_> {
        Chart {
            cnf: &self.cnf,
            bytes: Vec::new(),
            exact: Vec::new(),
            open: Vec::new(),
            scratch: Vec::new(),
        }
    }
}

/// Incremental CYK chart. Column `j` (1-based) holds one cell per start
/// `i < j`, stored flat.
#[derive(Debug, Clone)]
pub struct Chart<'a> {
    cnf: &'a Cnf,
    bytes: Vec<u8>,
    /// N[i][j].
    exact: Vec<u64>,
    /// P[i][j].
    open: Vec<u64>,
    scratch: Vec<u64>,
}

impl Chart<'_> {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Offset of column `j`.
    #[inline]
    fn base(&self, j: usize) -> usize {
        self.cnf.words() * j * (j - 1) / 2
    }

    /// Appends the exact column for `byte`, leaving `open` untouched.
    fn push_exact(&mut self, byte: u8) -> usize {
        let cnf = self.cnf;
        let w = cnf.words();
        let j = self.bytes.len() + 1;
        self.bytes.push(byte);
        let base = self.base(j);
        self.exact.resize(base + j * w, 0);
        let (old, col) = self.exact.split_at_mut(base);
        col[(j - 1) * w..].copy_from_slice(&cnf.by_byte[byte as usize].0);
        for i in (0..j - 1).rev() {
            let (lo, hi) = col.split_at_mut((i + 1) * w);
            let cell = &mut lo[i * w..];
            for k in i + 1..j {
                cnf.combine(&old[w * k * (k - 1) / 2 + i * w..][..w], &hi[(k - i - 1) * w..][..w], cell);
            }
        }
        base
    }

    /// The bytes `b` of `alphabet` for which the bytes so far followed by
    /// `b` form a sentence.
    ///
    /// `need[i]` collects the symbols that, spanning `i..n+1`, would complete
    /// the start symbol over the whole string:
    ///
    /// ```text
    /// need[0] = { S }
    /// need[k] ∪= { C | A ∈ need[i], A -> B C, B ∈ N[i][k] }   for i < k ≤ n
    /// ```
    pub fn accepting_bytes(&self, alphabet: &[u8]) -> Vec<u8> {
        let cnf = self.cnf;
        let w = cnf.words();
        let n = self.bytes.len();
        let mut need = vec![0u64; (n + 1) * w];
        need[cnf.start / 64] |= 1 << (cnf.start % 64);
        for i in 0..n {
            let (lo, hi) = need.split_at_mut((i + 1) * w);
            for a in ones(&lo[i * w..]) {
                for &(b, c) in &cnf.by_head[a] {
                    for k in i + 1..=n {
                        let cell = w * k * (k - 1) / 2 + i * w;
                        if self.exact[cell + b / 64] >> (b % 64) & 1 == 1 {
                            hi[(k - i - 1) * w + c / 64] |= 1 << (c % 64);
                        }
                    }
                }
            }
        }
        let last = &need[n * w..];
        alphabet
            .iter()
            .copied()
            .filter(|&b| cnf.by_byte[b as usize].0.iter().zip(last).any(|(x, y)| x & y != 0))
            .collect()
    }

    pub fn push(&mut self, byte: u8) {
        let cnf = self.cnf;
        let w = cnf.words();
        let base = self.push_exact(byte);
        let j = self.bytes.len();
        let cell_of = |k: usize, i: usize| w * k * (k - 1) / 2 + i * w;
        let (old, col) = self.exact.split_at(base);

        self.open.resize(base + j * w, 0);
        let open = &mut self.open[base..];
        self.scratch.resize(w, 0);
        let scratch = &mut self.scratch;
        for i in (0..j).rev() {
            scratch.copy_from_slice(&col[i * w..][..w]);
            for k in i + 1..j {
                cnf.combine(&old[cell_of(k, i)..][..w], &open[k * w..][..w], scratch);
            }
            cnf.close_left(scratch, &mut open[i * w..][..w]);
        }
    }

    pub fn pop(&mut self) -> Option<u8> {
        let j = self.bytes.len();
        if j > 0 {
            let base = self.base(j);
            self.exact.truncate(base);
            self.open.truncate(base);
        }
        self.bytes.pop()
    }

    fn top_cell_has(&self, cells: &[u64]) -> bool {
        let j = self.bytes.len();
        let s = self.cnf.start;
        cells[self.base(j) + s / 64] >> (s % 64) & 1 == 1
    }

    /// The bytes so far form a sentence.
    pub fn accepts(&self) -> bool {
        if self.bytes.is_empty() {
            self.cnf.start_nullable
        } else {
            self.top_cell_has(&self.exact)
        }
    }

    /// The bytes so far extend to a sentence.
    pub fn viable(&self) -> bool {
        if self.bytes.is_empty() {
            self.cnf.start_nullable || self.cnf.all.has(self.cnf.start)
        } else {
            self.top_cell_has(&self.open)
        }
    }
}

pub fn oracle_membership(g: &Cfg, w: &[u8]) -> Result<bool, OracleError> {
    Oracle::new(g).membership(w)
}

pub fn oracle_prefix(g: &Cfg, w: &[u8]) -> Result<bool, OracleError> {
    Oracle::new(g).prefix(w)
}

/// All `z` with `|z| ≤ bound` and `chart · z ∈ L`, in depth-first order.
pub fn completions(chart: &mut Chart<'_>, alphabet: &[u8], bound: usize) -> Vec<Vec<u8>> {
    fn go(chart: &mut Chart<'_>, alphabet: &[u8], left: usize, z: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if chart.accepts() {
            out.push(z.clone());
        }
        if left == 0 {
            return;
        }
        if left == 1 {
            for b in chart.accepting_bytes(alphabet) {
                z.push(b);
                out.push(z.clone());
                z.pop();
            }
            return;
        }
        for &b in alphabet {
            chart.push(b);
            if chart.viable() {
                z.push(b);
                go(chart, alphabet, left - 1, z, out);
                z.pop();
            }
            chart.pop();
        }
    }
    let mut out = Vec::new();
    if chart.viable() {
        go(chart, alphabet, bound, &mut Vec::new(), &mut out);
    }
    out
}

/// Depth-first walk over every viable `w` with `|w| ≤ bound`.
fn for_each_viable_prefix<'a>(oracle: &'a Oracle, bound: usize, mut f: impl FnMut(&mut Chart<'a>)) {
    fn go<'a>(chart: &mut Chart<'a>, alphabet: &[u8], left: usize, f: &mut dyn FnMut(&mut Chart<'a>)) {
        f(chart);
        if left == 0 {
            return;
        }
        for &b in alphabet {
            chart.push(b);
            if chart.viable() {
                go(chart, alphabet, left - 1, f);
            }
            chart.pop();
        }
    }
    let mut chart = oracle.chart();
    if chart.viable() {
        go(&mut chart, &oracle.alphabet, bound, &mut f);
    }
}

fn quotient(chart: &mut Chart<'_>, alphabet: &[u8], token: &[u8], bound: usize) -> Vec<Vec<u8>> {
    let mut pushed = 0;
    let mut viable = true;
    for &b in token {
        chart.push(b);
        pushed += 1;
        if !chart.viable() {
            viable = false;
            break;
        }
    }
    let out = if viable { completions(chart, alphabet, bound) } else { Vec::new() };
    for _ in 0..pushed {
        chart.pop();
    }
    out
}

/// A context separating two tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub w: Vec<u8>,
    pub z: Vec<u8>,
    /// Whether `w t z` is in the language (then `w u z` is not).
    pub first_accepted: bool,
}

fn separate(w: &[u8], zt: &[Vec<u8>], zu: &[Vec<u8>]) -> Option<Witness> {
    let a: BTreeSet<&Vec<u8>> = zt.iter().collect();
    let b: BTreeSet<&Vec<u8>> = zu.iter().collect();
    a.symmetric_difference(&b).next().map(|z| Witness {
        w: w.to_vec(),
        z: z.to_vec(),
        first_accepted: a.contains(z),
    })
}

/// A distinguishing context `(w, z)` with `|w|, |z| ≤ bound`, if any.
pub fn distinguishing_context(oracle: &Oracle, t: &[u8], u: &[u8], bound: usize) -> Option<Witness> {
    let mut found = None;
    let alphabet = oracle.alphabet.clone();
    for_each_viable_prefix(oracle, bound, |chart| {
        if found.is_some() {
            return;
        }
        let zt = quotient(chart, &alphabet, t, bound);
        let zu = quotient(chart, &alphabet, u, bound);
        found = separate(chart.bytes(), &zt, &zu);
    });
    found
}

/// `true` unless some context within the bound separates `t` and `u`.
pub fn oracle_congruence_sample(g: &Cfg, t: &[u8], u: &[u8], bound: usize) -> bool {
    let oracle = Oracle::with_bound(g, 2 * bound + t.len().max(u.len()));
    distinguishing_context(&oracle, t, u, bound).is_none()
}

/// A class member that behaves differently from its representative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refutation {
    pub class: u32,
    pub representative: u32,
    pub member: u32,
    pub witness: Witness,
}

#[derive(Default)]
struct Trie {
    children: BTreeMap<u8, usize>,
    tokens: Vec<u32>,
}

/// Checks every multi-member class against its representative over all
/// contexts within `bound`. Returns at most one refutation per member.
pub fn refute_classes(oracle: &Oracle, vocab: &Vocabulary, table: &ClassTable, bound: usize) -> Vec<Refutation> {
    let members = table.members();
    let mut interesting = vec![false; vocab.len()];
    for (k, m) in members.iter().enumerate() {
        let kind = table.kind(k as u32);
        if m.len() > 1 && matches!(kind, ClassKind::Grammar | ClassKind::Dead) {
            for &t in m {
                interesting[t as usize] = true;
            }
        }
    }
    let mut trie = vec![Trie::default()];
    for (t, _) in interesting.iter().enumerate().filter(|(_, &i)| i) {
        let mut node = 0;
        for &b in vocab.token(t as u32) {
            node = match trie[node].children.get(&b) {
                Some(&next) => next,
                None => {
                    trie.push(Trie::default());
                    let next = trie.len() - 1;
                    trie[node].children.insert(b, next);
                    next
                }
            };
        }
        trie[node].tokens.push(t as u32);
    }

    let alphabet = oracle.alphabet.clone();
    let mut refuted = vec![false; vocab.len()];
    let mut out = Vec::new();
    // Quotients depend only on `w t`, which many splits share; they are
    // remembered by digest and spelled out again only to build a witness.
    let mut memo: HashMap<Vec<u8>, Digest> = HashMap::new();
    let empty = quotient_digest(&[]);
    let mut quotients: Vec<Digest> = vec![empty; vocab.len()];
    let mut scratch = oracle.chart();
    for_each_viable_prefix(oracle, bound, |chart| {
        let w = chart.bytes().to_vec();
        struct Walk<'m> {
            trie: &'m [Trie],
            alphabet: &'m [u8],
            bound: usize,
            quotients: &'m mut [Digest],
            memo: &'m mut HashMap<Vec<u8>, Digest>,
        }
        fn walk(chart: &mut Chart<'_>, node: usize, st: &mut Walk<'_>) {
            for (&b, &child) in &st.trie[node].children {
                chart.push(b);
                if chart.viable() {
                    if !st.trie[child].tokens.is_empty() {
                        let d = match st.memo.get(chart.bytes()) {
                            Some(&d) => d,
                            None => {
                                let d = quotient_digest(&completions(chart, st.alphabet, st.bound));
                                st.memo.insert(chart.bytes().to_vec(), d);
                                d
                            }
                        };
                        for &t in &st.trie[child].tokens {
                            st.quotients[t as usize] = d;
                        }
                    }
                    walk(chart, child, st);
                }
                chart.pop();
            }
        }
        walk(
            chart,
            0,
            &mut Walk {
                trie: &trie,
                alphabet: &alphabet,
                bound,
                quotients: &mut quotients,
                memo: &mut memo,
            },
        );
        for (k, m) in members.iter().enumerate() {
            if m.len() < 2 {
                continue;
            }
            let rep = table.representative(k as u32);
            if !interesting[rep as usize] {
                continue;
            }
            for &t in m {
                if t == rep || refuted[t as usize] || quotients[t as usize] == quotients[rep as usize] {
                    continue;
                }
                for &b in &w {
                    scratch.push(b);
                }
                let zr = quotient(&mut scratch, &alphabet, vocab.token(rep), bound);
                let zt = quotient(&mut scratch, &alphabet, vocab.token(t), bound);
                while scratch.pop().is_some() {}
                if let Some(witness) = separate(&w, &zr, &zt) {
                    refuted[t as usize] = true;
                    out.push(Refutation {
                        class: k as u32,
                        representative: rep,
                        member: t,
                        witness,
                    });
                }
            }
        }
        quotients.iter_mut().for_each(|q| *q = empty);
    });
    out
}

type Digest = [u8; 16];

/// Collision-resistant summary of a completion set in enumeration order.
fn quotient_digest(zs: &[Vec<u8>]) -> Digest {
    let mut h = Sha256::new();
    for z in zs {
        h.update([z.len() as u8]);
        h.update(z);
    }
    h.finalize()[..16].try_into().expect("16 bytes")
}

/// Stack cell of a graph-structured stack. `below` lists every cell that can
/// sit under this one; `None` is the stack bottom.
#[derive(Debug)]
struct Cell {
    sym: NtId,
    below: Vec<Link>,
}

type Link = Option<Rc<Cell>>;

fn link_key(l: &Link) -> usize {
    l.as_ref().map_or(0, |c| Rc::as_ptr(c) as usize)
}

fn merge_links(into: &mut Vec<Link>, from: &[Link]) {
    into.extend(from.iter().cloned());
    into.sort_unstable_by_key(link_key);
    into.dedup_by_key(|l| link_key(l));
}

/// Simulation of the single-state automaton of a GNF grammar over a
/// graph-structured stack. The frontier maps each possible top symbol to the
/// cells that can lie under it, so the set of live stacks is represented
/// exactly without listing them.
#[derive(Debug, Clone)]
pub struct PdaRun<'a> {
    g: &'a GnfGrammar,
    tops: BTreeMap<NtId, Vec<Link>>,
    emptied: bool,
    consumed: usize,
}

impl<'a> PdaRun<'a> {
    pub fn new(g: &'a GnfGrammar) -> Self {
        Self {
            g,
            tops: BTreeMap::from([(g.start(), vec![None])]),
            emptied: false,
            consumed: 0,
        }
    }

    /// Reads one byte. Calls `on_pop(popped, tail_len, under)` for every
    /// transition taken and every symbol `under` that can lie below the
    /// popped one (`None` at the bottom).
    pub fn step_with(&self, byte: u8, mut on_pop: impl FnMut(NtId, usize, Option<NtId>)) -> Self {
        let mut tops: BTreeMap<NtId, Vec<Link>> = BTreeMap::new();
        let mut emptied = false;
        for (&top, below) in &self.tops {
            for &pi in self.g.transitions(byte, top) {
                let tail = &self.g.production(pi).tail;
                for l in below {
                    on_pop(top, tail.len(), l.as_ref().map(|c| c.sym));
                }
                match tail.split_first() {
                    None => {
                        for l in below {
                            match l {
                                None => emptied = true,
                                Some(c) => merge_links(tops.entry(c.sym).or_default(), &c.below),
                            }
                        }
                    }
                    Some((&first, rest)) => {
                        let mut under = below.clone();
                        for &sym in rest.iter().rev() {
                            under = vec![Some(Rc::new(Cell { sym, below: under }))];
                        }
                        merge_links(tops.entry(first).or_default(), &under);
                    }
                }
            }
        }
        Self {
            g: self.g,
            tops,
            emptied,
            consumed: self.consumed + 1,
        }
    }

    pub fn step(&self, byte: u8) -> Self {
        self.step_with(byte, |_, _, _| {})
    }

    pub fn viable(&self) -> bool {
        self.emptied || !self.tops.is_empty()
    }

    pub fn accepts(&self) -> bool {
        if self.consumed == 0 {
            self.g.start_derives_epsilon()
        } else {
            self.emptied
        }
    }

    /// Symbols that can be on top of a live stack.
    pub fn top_symbols(&self) -> impl Iterator<Item = NtId> + '_ {
        self.tops.keys().copied()
    }
}

pub fn pda_accepts(g: &GnfGrammar, w: &[u8]) -> bool {
    w.iter().fold(PdaRun::new(g), |run, &b| run.step(b)).accepts()
}

/// Pairs `(Y, Z)` seen while simulating every string up to `max_len`: `Y`
/// popped by a production with an empty tail, `Z` the symbol left on top.
pub fn observed_unary_pop_pairs(g: &GnfGrammar, max_len: usize) -> BTreeSet<(NtId, NtId)> {
    fn go(run: &PdaRun<'_>, left: usize, alphabet: &[u8], out: &mut BTreeSet<(NtId, NtId)>) {
        if left == 0 {
            return;
        }
        for &b in alphabet {
            let next = run.step_with(b, |y, tail, under| {
                if let (0, Some(z)) = (tail, under) {
                    out.insert((y, z));
                }
            });
            if next.viable() {
                go(&next, left - 1, alphabet, out);
            }
        }
    }
    let alphabet: Vec<u8> = g.alphabet().iter().copied().collect();
    let mut out = BTreeSet::new();
    go(&PdaRun::new(g), max_len, &alphabet, &mut out);
    out
}

/// One result of the unpruned displacement search together with the
/// `(previous symbol, guessed symbol)` link of every backtrack on its path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplacementPath {
    pub pair: StackPair,
    pub links: Vec<(Option<NtId>, NtId)>,
}

/// Every path of the displacement search with no pruning, by plain
/// recursion.
pub fn displacement_paths(g: &GnfGrammar, token: &[u8]) -> Vec<DisplacementPath> {
    struct Walk<'g> {
        g: &'g GnfGrammar,
        input: Vec<NtId>,
        links: Vec<(Option<NtId>, NtId)>,
        out: Vec<DisplacementPath>,
    }
    fn go(st: &mut Walk<'_>, rest: &[u8], stack: Vec<NtId>, prev: Option<NtId>) {
        let Some((&c, rest)) = rest.split_first() else {
            st.out.push(DisplacementPath {
                pair: (st.input.clone(), stack.iter().rev().copied().collect()),
                links: st.links.clone(),
            });
            return;
        };
        let g = st.g;
        match stack.last() {
            None => {
                for p in g.productions().iter().filter(|p| p.terminal == c) {
                    st.input.push(p.head);
                    st.links.push((prev, p.head));
                    go(st, rest, p.tail.iter().rev().copied().collect(), Some(p.head));
                    st.links.pop();
                    st.input.pop();
                }
            }
            Some(&top) => {
                for p in g.productions().iter().filter(|p| p.terminal == c && p.head == top) {
                    let mut next = stack[..stack.len() - 1].to_vec();
                    next.extend(p.tail.iter().rev());
                    go(st, rest, next, Some(top));
                }
            }
        }
    }
    let mut st = Walk {
        g,
        input: Vec::new(),
        links: Vec::new(),
        out: Vec::new(),
    };
    go(&mut st, token, Vec::new(), None);
    st.out
}

/// Unpruned results whose every backtrack link is allowed by `adj` (the
/// first link has no predecessor and is always allowed).
pub fn filtered_unpruned_displacement(g: &GnfGrammar, adj: &StackAdjacency, token: &[u8]) -> Displacement {
    Displacement::from_pairs(
        displacement_paths(g, token)
            .into_iter()
            .filter(|p| p.links.iter().all(|&(prev, a)| prev.is_none_or(|y| adj.contains(y, a))))
            .map(|p| p.pair),
    )
}

pub fn unpruned_displacement(g: &GnfGrammar, token: &[u8]) -> Displacement {
    Displacement::from_pairs(displacement_paths(g, token).into_iter().map(|p| p.pair))
}

/// A string on which the original grammar, the GNF grammar read back as a
/// CFG, and the automaton simulation disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageMismatch {
    pub string: Vec<u8>,
    pub original: bool,
    pub converted: bool,
    pub automaton: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LanguageComparison {
    /// Strings compared (every string up to the bound that is a viable prefix
    /// of either language; all others are rejected by both).
    pub checked: usize,
    pub mismatches: Vec<LanguageMismatch>,
}

/// Exhaustive membership comparison up to `max_len` bytes.
pub fn compare_languages(original: &Cfg, gnf: &GnfGrammar, max_len: usize) -> LanguageComparison {
    let left = Oracle::with_bound(original, max_len);
    let converted_cfg = gnf.to_cfg();
    let right = Oracle::with_bound(&converted_cfg, max_len);
    let alphabet: BTreeSet<u8> = original.alphabet().iter().chain(gnf.alphabet()).copied().collect();
    let alphabet: Vec<u8> = alphabet.into_iter().collect();
    let mut report = LanguageComparison::default();
    fn go(
        a: &mut Chart<'_>,
        b: &mut Chart<'_>,
        run: &PdaRun<'_>,
        alphabet: &[u8],
        left: usize,
        report: &mut LanguageComparison,
    ) {
        report.checked += 1;
        let (x, y, z) = (a.accepts(), b.accepts(), run.accepts());
        if x != y || y != z || a.viable() != run.viable() || b.viable() != run.viable() {
            report.mismatches.push(LanguageMismatch {
                string: a.bytes().to_vec(),
                original: x,
                converted: y,
                automaton: z,
            });
        }
        if left == 0 {
            return;
        }
        for &c in alphabet {
            a.push(c);
            b.push(c);
            let next = run.step(c);
            if a.viable() || b.viable() || next.viable() {
                go(a, b, &next, alphabet, left - 1, report);
            }
            a.pop();
            b.pop();
        }
    }
    let mut a = left.chart();
    let mut b = right.chart();
    go(&mut a, &mut b, &PdaRun::new(gnf), &alphabet, max_len, &mut report);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse_grammar, GrammarSource};
    use crate::suite;

    fn cfg(text: &str) -> Cfg {
        parse_grammar(&GrammarSource::literal("t", text)).unwrap().validate().unwrap()
    }

    #[test]
    fn dyck_membership() {
        let g = suite::grammar("dyck1");
        assert!(oracle_membership(&g, b"()").unwrap());
        assert!(!oracle_membership(&g, b")(").unwrap());
        assert!(oracle_membership(&g, b"").unwrap());
        assert!(oracle_membership(&g, b"(()())").unwrap());
    }

    #[test]
    fn arith_membership() {
        let g = suite::grammar("arith");
        assert!(oracle_membership(&g, b"n+n").unwrap());
        assert!(!oracle_membership(&g, b"n+").unwrap());
        assert!(oracle_prefix(&g, b"n+").unwrap());
        assert!(!oracle_prefix(&g, b"+").unwrap());
    }

    #[test]
    fn dyck_prefixes() {
        let g = suite::grammar("dyck1");
        assert!(oracle_prefix(&g, b"(((").unwrap());
        assert!(!oracle_prefix(&g, b"())").unwrap());
        assert!(oracle_prefix(&g, b"").unwrap());
    }

    #[test]
    fn bound_is_enforced() {
        let g = suite::grammar("dyck1");
        let o = Oracle::with_bound(&g, 2);
        assert_eq!(o.membership(b"(())"), Err(OracleError::TooLong { len: 4, bound: 2 }));
    }

    #[test]
    fn nullable_chain() {
        let g = cfg("a ::= b b\nb ::= \"\" | \"x\"");
        let o = Oracle::new(&g);
        for (w, m) in [(&b""[..], true), (b"x", true), (b"xx", true), (b"xxx", false)] {
            assert_eq!(o.membership(w).unwrap(), m, "{w:?}");
        }
    }

    #[test]
    fn prefix_needs_long_completion() {
        // Viable prefixes whose shortest completion is long.
        let g = cfg("s ::= \"a\" s \"b\" \"b\" \"b\" | \"c\"");
        let o = Oracle::new(&g);
        assert!(o.prefix(b"aaaa").unwrap());
        assert!(!o.prefix(b"ab").unwrap());
        assert!(o.membership(b"aacbbbbbb").unwrap());
    }

    #[test]
    fn chart_push_pop() {
        let g = suite::grammar("dyck2");
        let o = Oracle::new(&g);
        let mut c = o.chart();
        c.push(b'(');
        c.push(b'[');
        assert!(c.viable() && !c.accepts());
        c.push(b')');
        assert!(!c.viable());
        c.pop();
        c.push(b']');
        c.push(b')');
        assert!(c.accepts());
    }

    #[test]
    fn congruence_examples() {
        let g = suite::grammar("dyck1");
        assert!(oracle_congruence_sample(&g, b"(", b"(", 4));
        assert!(!oracle_congruence_sample(&g, b"(", b")", 4));
        let o = Oracle::new(&g);
        let w = distinguishing_context(&o, b"(", b")", 4).unwrap();
        assert!(w.w.is_empty());
        // "()" and "" behave alike in Dyck.
        assert!(oracle_congruence_sample(&g, b"()", b"(())", 4));
    }

    #[test]
    fn pda_on_backtrack_grammar() {
        let g = suite::stack_backtrack_grammar();
        assert!(pda_accepts(&g, b"sabcxyzjk"));
        assert!(!pda_accepts(&g, b"sabcxyzj"));
    }

    #[test]
    fn backtrack_paths_have_expected_links() {
        let g = suite::stack_backtrack_grammar();
        let paths = displacement_paths(&g, b"abcxyz");
        assert_eq!(paths.len(), 1);
        let id = |n| g.find(n).unwrap();
        assert_eq!(paths[0].links, vec![(None, id("A")), (Some(id("C")), id("X"))]);
    }

    #[test]
    fn accepting_bytes_matches_push() {
        for (name, len) in [("arith", 5), ("json", 4), ("minic", 3)] {
            let g = suite::grammar(name);
            let o = Oracle::new(&g);
            let alphabet = o.alphabet().to_vec();
            for_each_viable_prefix(&o, len, |chart| {
                let expected: Vec<u8> = alphabet
                    .iter()
                    .copied()
                    .filter(|&b| {
                        chart.push(b);
                        let yes = chart.accepts();
                        chart.pop();
                        yes
                    })
                    .collect();
                assert_eq!(chart.accepting_bytes(&alphabet), expected, "{name} {:?}", chart.bytes());
            });
        }
    }

    #[test]
    fn merged_class_is_refuted() {
        let g = suite::grammar("dyck1");
        let v = Vocabulary::from_tokens([&b"("[..], b")", b"()"]);
        let d = [0u8; 32];
        let t = ClassTable::from_parts(vec![0, 0, 1], vec![0, 2], vec![ClassKind::Grammar; 2], d, d).unwrap();
        let r = refute_classes(&Oracle::new(&g), &v, &t, 2);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].representative, r[0].member), (0, 1));
        let w = &r[0].witness;
        let with = |tok: &[u8]| [&w.w[..], tok, &w.z[..]].concat();
        assert_eq!(oracle_membership(&g, &with(b"(")).unwrap(), w.first_accepted);
        assert_eq!(oracle_membership(&g, &with(b")")).unwrap(), !w.first_accepted);
    }

    #[test]
    fn automaton_agrees_on_short_strings() {
        for name in ["dyck2", "arith"] {
            let g = suite::grammar(name);
            let gnf = crate::gnf::to_gnf(&g).unwrap();
            let report = compare_languages(&g, &gnf, 6);
            assert!(report.checked > 50);
            assert!(report.mismatches.is_empty(), "{name}: {:?}", report.mismatches);
        }
    }
}
