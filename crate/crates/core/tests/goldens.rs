//! Frozen examples. Each golden is first re-derived from an independent
//! oracle in the test itself, then compared with the literal value.

use std::collections::BTreeMap;

use cfgzip::adjacency::stack_adjacency;
use cfgzip::displacement::{DisplacementSearch, SearchOptions};
use cfgzip::grammar::NtId;
use cfgzip::oracle::{oracle_membership, oracle_prefix, unpruned_displacement, Oracle};
use cfgzip::{compile, suite, ClassKind, CompileOptions, Engine, MaskDomain, Vocabulary};

fn dyck1_vocab() -> Vocabulary {
    Vocabulary::from_tokens(suite::all_strings(b"()", 3).into_iter().filter(|t| !t.is_empty()))
}

/// Token ids grouped into classes, each group sorted, groups by first id.
fn partition(classes: &[u32]) -> Vec<Vec<u32>> {
    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (t, &k) in classes.iter().enumerate() {
        groups.entry(k).or_default().push(t as u32);
    }
    let mut out: Vec<Vec<u32>> = groups.into_values().collect();
    out.sort();
    out
}

#[test]
fn dyck1_fourteen_token_classes() {
    let g = suite::grammar("dyck1");
    let v = dyck1_vocab();
    assert_eq!(v.len(), 14);
    let out = compile(&g, &v, &CompileOptions::default()).unwrap();

    // Independent route: group by the unpruned displacement sets.
    let mut by_set = BTreeMap::new();
    let derived: Vec<u32> = v
        .tokens()
        .iter()
        .map(|t| {
            let n = by_set.len() as u32;
            *by_set.entry(unpruned_displacement(&out.gnf, t)).or_insert(n)
        })
        .collect();
    assert_eq!(partition(out.table.classes()), partition(&derived));

    // Only "(()" joins "("; the other twelve tokens stand alone.
    let golden: Vec<Vec<u32>> = (0..14u32)
        .filter(|&t| t != 7)
        .map(|t| if t == 0 { vec![0, 7] } else { vec![t] })
        .collect();
    assert_eq!(partition(out.table.classes()), golden);
    assert_eq!(out.table.class_count(), 13);
    assert_eq!(v.token(7), b"(()");
    assert!(out.table.kinds().iter().all(|&k| k == ClassKind::Grammar));
}

#[test]
fn dyck1_displacements_of_open_tokens() {
    let gnf = cfgzip::to_gnf(&suite::grammar("dyck1")).unwrap();
    let adj = stack_adjacency(&gnf);
    let search = DisplacementSearch::new(&gnf, &adj, SearchOptions::default());
    let open = search.compute(b"(").unwrap();
    let open2 = search.compute(b"((").unwrap();
    let mixed = search.compute(b"()(").unwrap();
    assert_eq!(open, unpruned_displacement(&gnf, b"("));
    assert_ne!(open, open2);
    assert_ne!(open, mixed);
    assert_eq!((open.len(), open2.len()), (8, 16));
    // "()(" accepts a longer input stack that "(" does not.
    assert!(mixed.pairs().iter().any(|(i, _)| i.len() == 2));
    assert!(open.pairs().iter().all(|(i, _)| i.len() == 1));
}

#[test]
fn dyck1_prefix_goldens() {
    let g = suite::grammar("dyck1");
    assert!(!oracle_prefix(&g, b"())").unwrap());
    assert!(oracle_prefix(&g, b"(((").unwrap());
    assert!(oracle_prefix(&g, b"").unwrap());
    // The engine agrees.
    let e = Engine::new(&g).unwrap();
    assert!(e.try_advance(&e.new_state(), b"())").is_none());
    assert!(e.try_advance(&e.new_state(), b"()").is_some_and(|s| s.is_complete()));
}

#[test]
fn backtrack_grammar_trace() {
    let g = suite::stack_backtrack_grammar();
    let adj = stack_adjacency(&g);
    let search = DisplacementSearch::new(&g, &adj, SearchOptions::default());
    let id = |n: &str| g.find(n).unwrap();
    let names = |s: &[NtId]| s.iter().map(|&n| g.name(n).to_string()).collect::<Vec<_>>().join("");
    let paths = search.trace(b"abcxyz");
    assert_eq!(paths.len(), 1);
    let (pair, steps) = &paths[0];
    assert_eq!(pair, &(vec![id("A"), id("X")], vec![id("J"), id("K")]));
    let got: Vec<(String, String, String)> = steps
        .iter()
        .map(|s| {
            let p = g.production(s.production);
            let rule = format!("{}>{}{}", g.name(p.head), p.terminal as char, names(&p.tail));
            (rule, names(&s.input), names(&s.output))
        })
        .collect();
    let want = [
        ("A>aBC", "A", "BC"),
        ("B>b", "A", "C"),
        ("C>c", "A", ""),
        ("X>xY", "AX", "Y"),
        ("Y>yZJK", "AX", "ZJK"),
        ("Z>z", "AX", "JK"),
    ];
    let want: Vec<(String, String, String)> =
        want.iter().map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string())).collect();
    assert_eq!(got, want);
    assert_eq!(steps.iter().filter(|s| s.backtrack).count(), 2);
}

#[test]
fn naive_mask_at_start_of_dyck1() {
    let g = suite::grammar("dyck1");
    let v = Vocabulary::new(vec![b"(".to_vec(), b")".to_vec(), b"()".to_vec(), b"</s>".to_vec()], [3]).unwrap();
    let e = Engine::new(&g).unwrap();
    let m = e.compute_mask_naive(&e.new_state(), &v);
    assert_eq!(m.domain(), MaskDomain::Tokens);
    // Oracle route: prefix check per token, EOS iff the empty string is a sentence.
    let derived: Vec<usize> = (0..3)
        .filter(|&i| oracle_prefix(&g, v.token(i as u32)).unwrap())
        .chain(oracle_membership(&g, b"").unwrap().then_some(3))
        .collect();
    assert_eq!(m.ones().collect::<Vec<_>>(), derived);
    assert_eq!(derived, vec![0, 2, 3]);
}

#[test]
fn identifier_fragments_share_a_class() {
    let g = suite::grammar("minic");
    let v = Vocabulary::from_tokens([&b"xy"[..], b"yx", b"xx", b"yy", b"x", b"y", b"1"]);
    let out = compile(&g, &v, &CompileOptions::default()).unwrap();
    let t = &out.table;
    // Two-letter fragments are interchangeable.
    let reps: Vec<u32> = (0..4).map(|i| t.map_token(i).unwrap()).collect();
    assert!(reps.iter().all(|&r| r == reps[0]));
    assert_eq!(reps[0], 0);
    // Single letters are not: "x" also follows "0" in hex literals.
    assert_ne!(t.class_of(4), t.class_of(5));
    assert_ne!(t.class_of(6), t.class_of(4));
    let o = Oracle::new(&out.cfg);
    assert!(cfgzip::oracle::distinguishing_context(&o, b"xy", b"yx", 3).is_none());
    let w = cfgzip::oracle::distinguishing_context(&o, b"x", b"y", 3).unwrap();
    assert!(w.first_accepted);
    assert!(oracle_membership(&out.cfg, &[&w.w[..], b"x", &w.z].concat()).unwrap());
}

#[test]
fn single_byte_transitions() {
    let g = cfgzip::parse_grammar(&cfgzip::GrammarSource::literal("t", r#"root ::= "a""#)).unwrap();
    let gnf = cfgzip::to_gnf(&g).unwrap();
    let delta = gnf.transition_function();
    assert_eq!(delta.get(b'a', gnf.start()), &[Vec::<NtId>::new()]);
    assert!(delta.get(b'b', gnf.start()).is_empty());
}
