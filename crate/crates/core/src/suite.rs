//! Built-in test grammars and vocabulary generators.
//!
//! Every grammar here has a small alphabet so exhaustive oracles stay cheap.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gnf::{to_gnf, GnfGrammar};
use crate::grammar::{parse_grammar, Cfg, GrammarSource, Symbol};
use crate::vocab::Vocabulary;

/// Names of the built-in grammars, smallest first.
pub const NAMES: [&str; 5] = ["dyck1", "dyck2", "arith", "json", "minic"];

/// Bytes of the end-of-sequence special appended by [`test_vocabulary`].
pub const EOS: &[u8] = b"</s>";

pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "dyck1" => include_str!("../grammars/dyck1.cfg"),
        "dyck2" => include_str!("../grammars/dyck2.cfg"),
        "arith" => include_str!("../grammars/arith.cfg"),
        "json" => include_str!("../grammars/json.cfg"),
        "minic" => include_str!("../grammars/minic.cfg"),
        _ => return None,
    })
}

/// Parsed and validated built-in grammar.
///
/// # Panics
/// On an unknown name.
pub fn grammar(name: &str) -> Cfg {
    let text = source(name).unwrap_or_else(|| panic!("unknown built-in grammar `{name}`"));
    parse_grammar(&GrammarSource::literal(format!("builtin:{name}"), text))
        .and_then(Cfg::validate)
        .expect("built-in grammar is valid")
}

/// The stack-backtrack example: the toy productions embedded under a start
/// rule so that every symbol is reachable and `J`, `K` are defined.
pub fn stack_backtrack_grammar() -> GnfGrammar {
    const TEXT: &str = r#"
        root ::= "s" A X
        A ::= "a" B C
        B ::= "b"
        C ::= "c"
        X ::= "x" Y
        Y ::= "y" Z J K
        Z ::= "z"
        J ::= "j"
        K ::= "k"
    "#;
    let cfg = parse_grammar(&GrammarSource::literal("builtin:backtrack", TEXT)).expect("fixture parses");
    to_gnf(&cfg).expect("fixture converts")
}

/// All strings over `alphabet` of length at most `max_len`, shortest first.
pub fn all_strings(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for s in &layer {
            for &b in alphabet {
                let mut t = s.clone();
                t.push(b);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Minimum terminal length derivable from each nonterminal.
fn min_lengths(cfg: &Cfg) -> Vec<usize> {
    let mut len = vec![usize::MAX; cfg.nonterminal_count()];
    loop {
        let mut changed = false;
        for p in cfg.productions() {
            let mut total = 0usize;
            for s in &p.body {
                total = total.saturating_add(match *s {
                    Symbol::Terminal(_) => 1,
                    Symbol::Nonterminal(n) => len[n.index()],
                });
            }
            if total < len[p.head.index()] {
                len[p.head.index()] = total;
                changed = true;
            }
        }
        if !changed {
            return len;
        }
    }
}

/// A random sentence of `cfg`; beyond `depth` only shortest expansions are
/// chosen, so generation always terminates.
pub fn random_sentence<R: Rng>(cfg: &Cfg, rng: &mut R, depth: usize) -> Vec<u8> {
    let min = min_lengths(cfg);
    let cost = |body: &[Symbol]| -> usize {
        body.iter()
            .map(|s| match *s {
                Symbol::Terminal(_) => 1,
                Symbol::Nonterminal(n) => min[n.index()],
            })
            .fold(0usize, usize::saturating_add)
    };
    let mut out = Vec::new();
    // (symbol, depth) work stack, leftmost on top.
    let mut work = vec![(Symbol::Nonterminal(cfg.start()), 0usize)];
    while let Some((sym, d)) = work.pop() {
        match sym {
            Symbol::Terminal(b) => out.push(b),
            Symbol::Nonterminal(n) => {
                let prods: Vec<_> = cfg.productions_of(n).collect();
                let pick = if d >= depth {
                    let best = prods.iter().map(|p| cost(&p.body)).min().unwrap_or(0);
                    let shortest: Vec<_> = prods.iter().filter(|p| cost(&p.body) == best).collect();
                    **shortest.choose(rng).expect("productive")
                } else {
                    *prods.choose(rng).expect("productive")
                };
                for s in pick.body.iter().rev() {
                    work.push((*s, d + 1));
                }
            }
        }
    }
    out
}

/// The standard test vocabulary for a grammar:
///
/// - every string of length 1 to 3 over the alphabet;
/// - 50 seeded tokens of length 4 to 8, half uniform over the alphabet and
///   half cut from random sentences;
/// - 10 byte-identical duplicates of earlier tokens;
/// - one empty token;
/// - one end-of-sequence special (last id).
pub fn test_vocabulary(cfg: &Cfg, seed: u64) -> Vocabulary {
    let alphabet: Vec<u8> = cfg.alphabet().iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens: Vec<Vec<u8>> = all_strings(&alphabet, 3).into_iter().skip(1).collect();
    let mut extra = 0;
    let mut attempts = 0;
    while extra < 50 {
        attempts += 1;
        let len = rng.gen_range(4..=8);
        let token: Vec<u8> = if extra % 2 == 0 || attempts > 10_000 {
            (0..len).map(|_| *alphabet.choose(&mut rng).expect("non-empty alphabet")).collect()
        } else {
            let s = random_sentence(cfg, &mut rng, 12);
            if s.len() < len {
                continue;
            }
            let at = rng.gen_range(0..=s.len() - len);
            s[at..at + len].to_vec()
        };
        tokens.push(token);
        extra += 1;
    }
    for _ in 0..10 {
        let i = rng.gen_range(0..tokens.len());
        tokens.push(tokens[i].clone());
    }
    tokens.push(Vec::new());
    tokens.push(EOS.to_vec());
    let eos = (tokens.len() - 1) as u32;
    Vocabulary::new(tokens, [eos]).expect("special in range")
}
