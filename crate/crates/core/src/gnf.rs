//! Conversion to Greibach Normal Form and the single-state PDA it defines.
//!
//! Every GNF production has the shape `A -> a B1 .. Bk` (one leading byte,
//! then nonterminals only), the start symbol never occurs in a tail, and the
//! only empty derivation allowed is `S -> ε`, kept as a flag.
//!
//! The pipeline is the textbook one: fresh start, ε-elimination, unit
//! elimination, useless-symbol removal, terminal proxies for non-leading
//! bytes, Paull's left-recursion elimination over the interned order, then
//! back-substitution until every body leads with a byte.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rustc_hash::FxHashMap;

use crate::error::GnfError;
use crate::grammar::{Cfg, NtId, Production, Symbol};

pub const DEFAULT_MAX_PRODUCTIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy)]
pub struct GnfOptions {
    /// Abort once any intermediate grammar has more productions than this.
    pub max_productions: usize,
}

impl Default for GnfOptions {
    fn default() -> Self {
        Self {
            max_productions: DEFAULT_MAX_PRODUCTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GnfProduction {
    pub head: NtId,
    pub terminal: u8,
    pub tail: Vec<NtId>,
}

/// A grammar in Greibach Normal Form, indexed for PDA simulation.
#[derive(Debug, Clone)]
pub struct GnfGrammar {
    names: Vec<String>,
    productions: Vec<GnfProduction>,
    start: NtId,
    start_derives_epsilon: bool,
    alphabet: BTreeSet<u8>,
    by_head_byte: FxHashMap<(NtId, u8), Vec<u32>>,
    by_byte: Vec<Vec<u32>>,
}

impl GnfGrammar {
    pub fn new(
        names: Vec<String>,
        productions: Vec<GnfProduction>,
        start: NtId,
        start_derives_epsilon: bool,
    ) -> Result<Self, GnfError> {
        let n = names.len();
        if start.index() >= n {
            return Err(GnfError::Internal("start symbol out of range".into()));
        }
        let mut by_head_byte: FxHashMap<(NtId, u8), Vec<u32>> = FxHashMap::default();
        let mut by_byte = vec![Vec::new(); 256];
        let mut alphabet = BTreeSet::new();
        for (i, p) in productions.iter().enumerate() {
            if p.head.index() >= n || p.tail.iter().any(|a| a.index() >= n) {
                return Err(GnfError::Internal(format!("production {i} references an unknown symbol")));
            }
            if p.tail.contains(&start) {
                return Err(GnfError::Internal(format!("production {i} has the start symbol in its tail")));
            }
            alphabet.insert(p.terminal);
            by_head_byte.entry((p.head, p.terminal)).or_default().push(i as u32);
            by_byte[p.terminal as usize].push(i as u32);
        }
        Ok(Self {
            names,
            productions,
            start,
            start_derives_epsilon,
            alphabet,
            by_head_byte,
            by_byte,
        })
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn start_derives_epsilon(&self) -> bool {
        self.start_derives_epsilon
    }

    pub fn nonterminal_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, nt: NtId) -> &str {
        &self.names[nt.index()]
    }

    pub fn find(&self, name: &str) -> Option<NtId> {
        self.names.iter().position(|n| n == name).map(|i| NtId(i as u32))
    }

    pub fn productions(&self) -> &[GnfProduction] {
        &self.productions
    }

    pub fn production(&self, index: u32) -> &GnfProduction {
        &self.productions[index as usize]
    }

    pub fn alphabet(&self) -> &BTreeSet<u8> {
        &self.alphabet
    }

    /// Indices of the productions `head -> byte β`.
    #[inline]
    pub fn transitions(&self, byte: u8, head: NtId) -> &[u32] {
        self.by_head_byte.get(&(head, byte)).map_or(&[], Vec::as_slice)
    }

    /// Indices of every production whose leading byte is `byte`.
    #[inline]
    pub fn productions_with_byte(&self, byte: u8) -> &[u32] {
        &self.by_byte[byte as usize]
    }

    pub fn max_tail_len(&self) -> usize {
        self.productions.iter().map(|p| p.tail.len()).max().unwrap_or(0)
    }

    /// Nonterminals with at least one production `Y -> y` (empty tail).
    pub fn unary_heads(&self) -> Vec<bool> {
        let mut unary = vec![false; self.names.len()];
        for p in &self.productions {
            if p.tail.is_empty() {
                unary[p.head.index()] = true;
            }
        }
        unary
    }

    /// The PDA transition function: `δ(a, A) = { β | A -> a β }`.
    pub fn transition_function(&self) -> TransitionFunction {
        let mut map: BTreeMap<(u8, NtId), Vec<Vec<NtId>>> = BTreeMap::new();
        for p in &self.productions {
            let tails = map.entry((p.terminal, p.head)).or_default();
            if !tails.contains(&p.tail) {
                tails.push(p.tail.clone());
            }
        }
        TransitionFunction { map }
    }

    /// The same grammar as a plain [`Cfg`] (with `S -> ε` when flagged).
    pub fn to_cfg(&self) -> Cfg {
        let mut productions: Vec<Production> = Vec::with_capacity(self.productions.len() + 1);
        if self.start_derives_epsilon {
            productions.push(Production {
                head: self.start,
                body: Vec::new(),
            });
        }
        productions.extend(self.productions.iter().map(|p| {
            let mut body = Vec::with_capacity(p.tail.len() + 1);
            body.push(Symbol::Terminal(p.terminal));
            body.extend(p.tail.iter().map(|&a| Symbol::Nonterminal(a)));
            Production { head: p.head, body }
        }));
        Cfg::new(self.names.clone(), productions, self.start).expect("GNF grammar is well-formed")
    }

    /// Debug dump in the grammar text format.
    pub fn render(&self) -> String {
        self.to_cfg().render()
    }
}

/// `δ_G` as an explicit map; absent keys mean the empty set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionFunction {
    map: BTreeMap<(u8, NtId), Vec<Vec<NtId>>>,
}

impl TransitionFunction {
    pub fn get(&self, byte: u8, nt: NtId) -> &[Vec<NtId>] {
        self.map.get(&(byte, nt)).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u8, NtId), &Vec<Vec<NtId>>)> {
        self.map.iter()
    }
}

pub fn to_gnf(g: &Cfg) -> Result<GnfGrammar, GnfError> {
    to_gnf_with(g, GnfOptions::default())
}

pub fn to_gnf_with(g: &Cfg, options: GnfOptions) -> Result<GnfGrammar, GnfError> {
    let g = g.clone().validate()?;
    let mut w = Work::from_cfg(&g, options.max_productions);
    w.fresh_start();
    let eps = w.eliminate_epsilon()?;
    w.eliminate_units()?;
    w.prune(eps)?;
    w.introduce_terminal_proxies();
    w.eliminate_left_recursion()?;
    w.lead_with_terminals()?;
    w.prune(eps)?;
    w.finish(eps)
}

type Body = Vec<Symbol>;

struct Work {
    names: Vec<String>,
    used: HashSet<String>,
    rules: Vec<Vec<Body>>,
    start: usize,
    cap: usize,
}

fn nt(i: usize) -> Symbol {
    Symbol::Nonterminal(NtId(i as u32))
}

fn push_unique(dst: &mut Vec<Body>, seen: &mut HashSet<Body>, body: Body) {
    if seen.insert(body.clone()) {
        dst.push(body);
    }
}

impl Work {
    fn from_cfg(g: &Cfg, cap: usize) -> Self {
        let mut rules = vec![Vec::new(); g.nonterminal_count()];
        for p in g.productions() {
            rules[p.head.index()].push(p.body.clone());
        }
        let names = g.names().to_vec();
        Self {
            used: names.iter().cloned().collect(),
            names,
            rules,
            start: g.start().index(),
            cap,
        }
    }

    fn fresh_name(&mut self, base: &str) -> String {
        let mut name = format!("{base}'");
        while self.used.contains(&name) {
            name.push('\'');
        }
        self.used.insert(name.clone());
        name
    }

    fn add_nonterminal(&mut self, name: String, bodies: Vec<Body>) -> usize {
        self.names.push(name);
        self.rules.push(bodies);
        self.rules.len() - 1
    }

    fn size(&self) -> usize {
        self.rules.iter().map(Vec::len).sum()
    }

    fn check(&self, stage: &'static str) -> Result<(), GnfError> {
        if self.size() > self.cap {
            return Err(GnfError::TooManyProductions { cap: self.cap, stage });
        }
        Ok(())
    }

    fn fresh_start(&mut self) {
        let start = nt(self.start);
        let in_body = self.rules.iter().flatten().any(|b| b.contains(&start));
        if in_body {
            let name = self.fresh_name(&self.names[self.start].clone());
            self.start = self.add_nonterminal(name, vec![vec![start]]);
        }
    }

    /// Removes ε-bodies; returns whether the start symbol was nullable.
    fn eliminate_epsilon(&mut self) -> Result<bool, GnfError> {
        let n = self.rules.len();
        let mut nullable = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for a in 0..n {
                if nullable[a] {
                    continue;
                }
                let hit = self.rules[a].iter().any(|b| {
                    b.iter().all(|s| matches!(s, Symbol::Nonterminal(x) if nullable[x.index()]))
                });
                if hit {
                    nullable[a] = true;
                    changed = true;
                }
            }
        }
        let mut total = 0usize;
        for a in 0..n {
            let mut out = Vec::new();
            let mut seen = HashSet::new();
            for body in &self.rules[a] {
                let mut variants: Vec<Body> = vec![Vec::new()];
                for &s in body {
                    let optional = matches!(s, Symbol::Nonterminal(x) if nullable[x.index()]);
                    if optional {
                        let with: Vec<Body> = variants
                            .iter()
                            .map(|v| {
                                let mut v = v.clone();
                                v.push(s);
                                v
                            })
                            .collect();
                        variants.extend(with);
                    } else {
                        for v in &mut variants {
                            v.push(s);
                        }
                    }
                    if variants.len() > self.cap {
                        return Err(GnfError::TooManyProductions {
                            cap: self.cap,
                            stage: "epsilon elimination",
                        });
                    }
                }
                for v in variants {
                    if !v.is_empty() {
                        push_unique(&mut out, &mut seen, v);
                    }
                }
            }
            total += out.len();
            if total > self.cap {
                return Err(GnfError::TooManyProductions {
                    cap: self.cap,
                    stage: "epsilon elimination",
                });
            }
            self.rules[a] = out;
        }
        Ok(nullable[self.start])
    }

    fn eliminate_units(&mut self) -> Result<(), GnfError> {
        let n = self.rules.len();
        let unit_target = |b: &Body| match b.as_slice() {
            [Symbol::Nonterminal(x)] => Some(x.index()),
            _ => None,
        };
        let mut new_rules = Vec::with_capacity(n);
        let mut total = 0usize;
        for a in 0..n {
            let mut order = vec![a];
            let mut seen_nt = vec![false; n];
            seen_nt[a] = true;
            let mut i = 0;
            while i < order.len() {
                for b in &self.rules[order[i]] {
                    if let Some(x) = unit_target(b) {
                        if !seen_nt[x] {
                            seen_nt[x] = true;
                            order.push(x);
                        }
                    }
                }
                i += 1;
            }
            let mut out = Vec::new();
            let mut seen = HashSet::new();
            for &b in &order {
                for body in &self.rules[b] {
                    if unit_target(body).is_none() {
                        push_unique(&mut out, &mut seen, body.clone());
                    }
                }
            }
            total += out.len();
            if total > self.cap {
                return Err(GnfError::TooManyProductions {
                    cap: self.cap,
                    stage: "unit elimination",
                });
            }
            new_rules.push(out);
        }
        self.rules = new_rules;
        Ok(())
    }

    /// Drops non-productive and unreachable nonterminals and compacts ids.
    fn prune(&mut self, start_nullable: bool) -> Result<(), GnfError> {
        let n = self.rules.len();
        let mut productive = vec![false; n];
        let mut changed = true;
        while changed {
            changed = false;
            for a in 0..n {
                if productive[a] {
                    continue;
                }
                let hit = self.rules[a].iter().any(|b| {
                    b.iter().all(|s| match s {
                        Symbol::Terminal(_) => true,
                        Symbol::Nonterminal(x) => productive[x.index()],
                    })
                });
                if hit {
                    productive[a] = true;
                    changed = true;
                }
            }
        }
        if !productive[self.start] && !start_nullable {
            return Err(GnfError::Internal("start symbol became non-productive".into()));
        }
        for bodies in &mut self.rules {
            bodies.retain(|b| {
                b.iter().all(|s| match s {
                    Symbol::Terminal(_) => true,
                    Symbol::Nonterminal(x) => productive[x.index()],
                })
            });
        }
        let mut reachable = vec![false; n];
        reachable[self.start] = true;
        let mut stack = vec![self.start];
        while let Some(a) = stack.pop() {
            for b in &self.rules[a] {
                for s in b {
                    if let Symbol::Nonterminal(x) = *s {
                        if !reachable[x.index()] {
                            reachable[x.index()] = true;
                            stack.push(x.index());
                        }
                    }
                }
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut names = Vec::new();
        let mut rules = Vec::new();
        for a in 0..n {
            if reachable[a] {
                remap[a] = names.len();
                names.push(std::mem::take(&mut self.names[a]));
                rules.push(std::mem::take(&mut self.rules[a]));
            }
        }
        for bodies in &mut rules {
            for b in bodies.iter_mut() {
                for s in b.iter_mut() {
                    if let Symbol::Nonterminal(x) = *s {
                        *s = nt(remap[x.index()]);
                    }
                }
            }
        }
        self.start = remap[self.start];
        self.names = names;
        self.rules = rules;
        Ok(())
    }

    /// Replaces bytes in non-leading positions by proxy nonterminals `P -> b`.
    fn introduce_terminal_proxies(&mut self) {
        let mut proxy: [Option<usize>; 256] = [None; 256];
        let n = self.rules.len();
        for a in 0..n {
            for bi in 0..self.rules[a].len() {
                for si in 1..self.rules[a][bi].len() {
                    if let Symbol::Terminal(byte) = self.rules[a][bi][si] {
                        let p = match proxy[byte as usize] {
                            Some(p) => p,
                            None => {
                                let name = self.fresh_name(&format!("byte_{byte:02x}"));
                                let p = self.add_nonterminal(name, vec![vec![Symbol::Terminal(byte)]]);
                                proxy[byte as usize] = Some(p);
                                p
                            }
                        };
                        self.rules[a][bi][si] = nt(p);
                    }
                }
            }
        }
    }

    fn eliminate_left_recursion(&mut self) -> Result<(), GnfError> {
        let n = self.rules.len();
        for i in 0..n {
            for j in 0..i {
                let leads_with_j = self.rules[i].iter().any(|b| b.first() == Some(&nt(j)));
                if !leads_with_j {
                    continue;
                }
                let mut out = Vec::new();
                let mut seen = HashSet::new();
                let old = std::mem::take(&mut self.rules[i]);
                for body in old {
                    if body.first() == Some(&nt(j)) {
                        for d in &self.rules[j] {
                            let mut nb = d.clone();
                            nb.extend_from_slice(&body[1..]);
                            push_unique(&mut out, &mut seen, nb);
                        }
                    } else {
                        push_unique(&mut out, &mut seen, body);
                    }
                }
                self.rules[i] = out;
                self.check("left-recursion substitution")?;
            }

            let me = nt(i);
            let (recursive, rest): (Vec<Body>, Vec<Body>) = std::mem::take(&mut self.rules[i])
                .into_iter()
                .filter(|b| b.as_slice() != [me])
                .partition(|b| b.first() == Some(&me));
            if recursive.is_empty() {
                self.rules[i] = rest;
                continue;
            }
            if rest.is_empty() {
                return Err(GnfError::Internal(format!(
                    "nonterminal `{}` is purely left-recursive",
                    self.names[i]
                )));
            }
            let name = self.fresh_name(&self.names[i].clone());
            let prime = self.rules.len();
            let mut head_bodies = rest.clone();
            head_bodies.extend(rest.into_iter().map(|mut b| {
                b.push(nt(prime));
                b
            }));
            let alphas: Vec<Body> = recursive.into_iter().map(|b| b[1..].to_vec()).collect();
            let mut prime_bodies = alphas.clone();
            prime_bodies.extend(alphas.into_iter().map(|mut b| {
                b.push(nt(prime));
                b
            }));
            self.rules[i] = head_bodies;
            self.add_nonterminal(name, prime_bodies);
            self.check("left-recursion elimination")?;
        }
        Ok(())
    }

    /// Substitutes leading nonterminals until every body starts with a byte.
    fn lead_with_terminals(&mut self) -> Result<(), GnfError> {
        let n = self.rules.len();
        let mut state = vec![0u8; n];
        for a in 0..n {
            if state[a] == 0 {
                self.resolve(a, &mut state)?;
            }
        }
        Ok(())
    }

    fn resolve(&mut self, a: usize, state: &mut [u8]) -> Result<(), GnfError> {
        state[a] = 1;
        let old = std::mem::take(&mut self.rules[a]);
        for body in &old {
            if let Some(Symbol::Nonterminal(b)) = body.first() {
                let b = b.index();
                match state[b] {
                    0 => self.resolve(b, state)?,
                    1 => {
                        return Err(GnfError::Internal(format!(
                            "left recursion survived elimination at `{}`",
                            self.names[b]
                        )))
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for body in old {
            match body.first() {
                Some(Symbol::Nonterminal(b)) => {
                    for d in &self.rules[b.index()] {
                        let mut nb = d.clone();
                        nb.extend_from_slice(&body[1..]);
                        push_unique(&mut out, &mut seen, nb);
                    }
                }
                _ => push_unique(&mut out, &mut seen, body),
            }
        }
        self.rules[a] = out;
        state[a] = 2;
        self.check("back-substitution")
    }

    fn finish(self, eps: bool) -> Result<GnfGrammar, GnfError> {
        let mut productions = Vec::with_capacity(self.size());
        for (a, bodies) in self.rules.iter().enumerate() {
            for body in bodies {
                let Some(&Symbol::Terminal(terminal)) = body.first() else {
                    return Err(GnfError::Internal(format!(
                        "body of `{}` does not lead with a byte",
                        self.names[a]
                    )));
                };
                let mut tail = Vec::with_capacity(body.len() - 1);
                for s in &body[1..] {
                    match *s {
                        Symbol::Nonterminal(x) => tail.push(x),
                        Symbol::Terminal(_) => {
                            return Err(GnfError::Internal(format!(
                                "body of `{}` has a byte in its tail",
                                self.names[a]
                            )))
                        }
                    }
                }
                productions.push(GnfProduction {
                    head: NtId(a as u32),
                    terminal,
                    tail,
                });
            }
        }
        GnfGrammar::new(self.names, productions, NtId(self.start as u32), eps)
    }
}
