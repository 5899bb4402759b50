//! Stack adjacency: which nonterminal can be popped immediately before which.
//!
//! Only the part of the relation that matters for pruning backtracks is
//! computed. A backtrack happens when the output stack runs empty, i.e. right
//! after some `Y -> y` with an empty tail was applied, so `Y` is restricted
//! to heads of such unary productions.
//!
//! `(Y, Z)` is included when some production `A -> a B1 .. Bn Z β` exists and
//! `Y` is reachable from `Bn` in the rightmost-symbol graph (zero-length
//! paths included).

use std::collections::{BTreeSet, VecDeque};

use crate::gnf::GnfGrammar;
use crate::grammar::NtId;

/// Edge `A -> B` for every production `A -> a β B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightmostGraph {
    succ: Vec<Vec<NtId>>,
}

impl RightmostGraph {
    pub fn vertex_count(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, a: NtId) -> &[NtId] {
        &self.succ[a.index()]
    }

    pub fn edges(&self) -> impl Iterator<Item = (NtId, NtId)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, bs)| bs.iter().map(move |&b| (NtId(a as u32), b)))
    }

    /// Vertices reachable from `from`, `from` itself included.
    pub fn reachable(&self, from: NtId) -> Vec<NtId> {
        let mut seen = vec![false; self.succ.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([from]);
        seen[from.index()] = true;
        while let Some(a) = queue.pop_front() {
            order.push(a);
            for &b in &self.succ[a.index()] {
                if !seen[b.index()] {
                    seen[b.index()] = true;
                    queue.push_back(b);
                }
            }
        }
        order
    }
}

pub fn build_rightmost_graph(g: &GnfGrammar) -> RightmostGraph {
    let mut sets = vec![BTreeSet::new(); g.nonterminal_count()];
    for p in g.productions() {
        if let Some(&last) = p.tail.last() {
            sets[p.head.index()].insert(last);
        }
    }
    RightmostGraph {
        succ: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}

/// The stack-adjacency sub-relation, indexed by its first component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackAdjacency {
    by_first: Vec<Vec<NtId>>,
}

impl StackAdjacency {
    #[inline]
    pub fn contains(&self, y: NtId, z: NtId) -> bool {
        self.by_first
            .get(y.index())
            .is_some_and(|zs| zs.binary_search(&z).is_ok())
    }

    pub fn successors(&self, y: NtId) -> &[NtId] {
        &self.by_first[y.index()]
    }

    pub fn len(&self) -> usize {
        self.by_first.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NtId, NtId)> + '_ {
        self.by_first
            .iter()
            .enumerate()
            .flat_map(|(y, zs)| zs.iter().map(move |&z| (NtId(y as u32), z)))
    }

    /// One `Y Z` pair per line, by name.
    pub fn dump(&self, g: &GnfGrammar) -> String {
        self.pairs()
            .map(|(y, z)| format!("{} {}\n", g.name(y), g.name(z)))
            .collect()
    }
}

pub fn build_stack_adjacency(g: &GnfGrammar, h: &RightmostGraph) -> StackAdjacency {
    let unary = g.unary_heads();
    let mut memo: Vec<Option<Vec<NtId>>> = vec![None; g.nonterminal_count()];
    let mut sets = vec![BTreeSet::new(); g.nonterminal_count()];
    for p in g.productions() {
        for w in p.tail.windows(2) {
            let (before, z) = (w[0], w[1]);
            let ys = memo[before.index()].get_or_insert_with(|| {
                h.reachable(before)
                    .into_iter()
                    .filter(|y| unary[y.index()])
                    .collect()
            });
            for &y in ys.iter() {
                sets[y.index()].insert(z);
            }
        }
    }
    StackAdjacency {
        by_first: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
    }
}

/// Convenience: rightmost graph and adjacency in one call.
pub fn stack_adjacency(g: &GnfGrammar) -> StackAdjacency {
    build_stack_adjacency(g, &build_rightmost_graph(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnf::to_gnf;
    use crate::grammar::{parse_grammar, GrammarSource};
    use crate::suite;

    fn gnf(text: &str) -> GnfGrammar {
        to_gnf(&parse_grammar(&GrammarSource::literal("t", text)).unwrap()).unwrap()
    }

    fn id(g: &GnfGrammar, name: &str) -> NtId {
        g.find(name).unwrap()
    }

    #[test]
    fn backtrack_grammar_rightmost_edges() {
        let g = suite::stack_backtrack_grammar();
        let h = build_rightmost_graph(&g);
        let edges: BTreeSet<(NtId, NtId)> = h.edges().collect();
        assert!(edges.contains(&(id(&g, "A"), id(&g, "C"))));
        assert!(edges.contains(&(id(&g, "X"), id(&g, "Y"))));
        assert!(edges.contains(&(id(&g, "Y"), id(&g, "K"))));
        assert_eq!(h.vertex_count(), g.nonterminal_count());
    }

    #[test]
    fn backtrack_grammar_adjacency_pairs() {
        let g = suite::stack_backtrack_grammar();
        let adj = stack_adjacency(&g);
        assert!(adj.contains(id(&g, "B"), id(&g, "C")));
        assert!(adj.contains(id(&g, "Z"), id(&g, "J")));
        assert!(adj.contains(id(&g, "C"), id(&g, "X")));
        // `A` has no unary production, so it never precedes anything.
        assert!(adj.successors(id(&g, "A")).is_empty());
    }

    #[test]
    fn unary_only_grammar_has_no_edges() {
        let g = gnf(r#"root ::= "a" | "b""#);
        let h = build_rightmost_graph(&g);
        assert_eq!(h.edges().count(), 0);
        assert!(stack_adjacency(&g).is_empty());
    }

    #[test]
    fn short_tails_give_empty_relation() {
        let g = gnf("root ::= \"a\" x\nx ::= \"b\" | \"b\" x");
        assert!(g.productions().iter().all(|p| p.tail.len() <= 1));
        assert!(stack_adjacency(&g).is_empty());
    }

    #[test]
    fn dyck_edges_are_nonterminals() {
        let g = gnf(r#"root ::= "(" root ")" root | """#);
        let h = build_rightmost_graph(&g);
        for (a, b) in h.edges() {
            assert!(a.index() < g.nonterminal_count() && b.index() < g.nonterminal_count());
        }
        let adj = stack_adjacency(&g);
        let unary = g.unary_heads();
        for (y, _) in adj.pairs() {
            assert!(unary[y.index()]);
        }
    }
}
