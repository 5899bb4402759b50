//! Semantic properties of the pipeline on the fixed grammar suite, each
//! checked against the CYK oracle or the PDA simulation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfgzip::adjacency::stack_adjacency;
use cfgzip::displacement::TokenDisplacement;
use cfgzip::oracle::{
    distinguishing_context, observed_unary_pop_pairs, oracle_congruence_sample, refute_classes,
    Chart, Oracle,
};
use cfgzip::{
    compile, suite, CompileOptions, CompileOutput, CompressedStream, Engine, EngineState, Mask,
    MaskDomain, Vocabulary,
};

fn build(name: &str, seed: u64) -> (Vocabulary, CompileOutput) {
    let g = suite::grammar(name);
    let v = suite::test_vocabulary(&g, seed);
    let out = compile(&g, &v, &CompileOptions::default()).unwrap();
    (v, out)
}

/// Walks every viable prefix up to `depth`, comparing the engine with the
/// oracle on each one-byte extension. Returns the number of strings checked.
fn walk(e: &Engine, state: &EngineState, chart: &mut Chart<'_>, alphabet: &[u8], depth: usize) -> usize {
    let mut checked = 0;
    for &b in alphabet {
        chart.push(b);
        let next = e.try_advance(state, &[b]);
        checked += 1;
        assert_eq!(next.is_some(), chart.viable(), "prefix {:?}", chart.bytes());
        if let Some(next) = next {
            assert_eq!(next.is_complete(), chart.accepts(), "member {:?}", chart.bytes());
            if depth > 1 {
                checked += walk(e, &next, chart, alphabet, depth - 1);
            }
        }
        chart.pop();
    }
    checked
}

#[test]
fn engine_agrees_with_oracle_on_suite() {
    for (name, depth) in [("dyck1", 8), ("dyck2", 8), ("arith", 7), ("json", 6), ("minic", 6)] {
        let g = suite::grammar(name);
        let e = Engine::new(&g).unwrap();
        let o = Oracle::new(&g);
        let mut chart = o.chart();
        assert_eq!(e.new_state().is_complete(), chart.accepts());
        let n = walk(&e, &e.new_state(), &mut chart, o.alphabet(), depth);
        assert!(n > 100, "{name}: {n}");
    }
}

#[test]
fn adjacency_covers_observed_pops_on_suite() {
    for (name, len) in [("dyck1", 8), ("dyck2", 8), ("arith", 6), ("json", 5), ("minic", 5)] {
        let gnf = cfgzip::to_gnf(&suite::grammar(name)).unwrap();
        let adj = stack_adjacency(&gnf);
        for (y, z) in observed_unary_pop_pairs(&gnf, len) {
            assert!(adj.contains(y, z), "{name}: ({}, {})", gnf.name(y), gnf.name(z));
        }
    }
}

#[test]
fn input_stacks_are_no_longer_than_tokens() {
    for name in suite::NAMES {
        let (v, out) = build(name, 1);
        for (i, d) in out.displacements.iter().enumerate() {
            if let TokenDisplacement::Computed(d) = d {
                let len = v.token(i as u32).len();
                assert!(d.pairs().iter().all(|(input, _)| input.len() <= len), "{name} token {i}");
            }
        }
    }
}

#[test]
fn classes_survive_left_quotients_at_bound_three() {
    for name in ["dyck1", "dyck2", "arith", "json"] {
        let (v, out) = build(name, 2);
        let o = Oracle::with_bound(&out.cfg, 32);
        let refuted = refute_classes(&o, &v, &out.table, 3);
        assert!(refuted.is_empty(), "{name}: {:?}", refuted.first());
    }
}

#[test]
fn oracle_separates_open_and_close() {
    let g = suite::grammar("dyck1");
    assert!(!oracle_congruence_sample(&g, b"(", b")", 4));
    assert!(oracle_congruence_sample(&g, b"()", b"()", 4));
    let w = distinguishing_context(&Oracle::new(&g), b"(", b")", 4).unwrap();
    assert_eq!(w.w, b"");
    let t = [&w.w[..], b"(", &w.z].concat();
    let u = [&w.w[..], b")", &w.z].concat();
    assert_eq!(o_member(&g, &t), w.first_accepted);
    assert_eq!(o_member(&g, &u), !w.first_accepted);
}

fn o_member(g: &cfgzip::Cfg, w: &[u8]) -> bool {
    cfgzip::oracle::oracle_membership(g, w).unwrap()
}

/// Congruent pairs compose: if `t ≡ u` and `t2 ≡ u2` then `t t2 ≡ u u2`.
#[test]
fn congruence_is_compositional() {
    const B: usize = 4;
    for name in ["dyck2", "arith"] {
        let (v, out) = build(name, 3);
        let short: Vec<u32> = (0..v.len() as u32)
            .filter(|&i| !v.is_special(i) && (1..=2).contains(&v.token(i).len()))
            .collect();
        let g = &out.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pairs = Vec::new();
        for _ in 0..400 {
            let t = *short.choose(&mut rng).unwrap();
            let u = *short.choose(&mut rng).unwrap();
            if oracle_congruence_sample(g, v.token(t), v.token(u), B) {
                pairs.push((t, u));
            }
        }
        assert!(pairs.iter().any(|(t, u)| t != u), "{name}: no non-trivial pairs");
        let o = Oracle::with_bound(g, 32);
        for _ in 0..60 {
            let &(t, u) = pairs.choose(&mut rng).unwrap();
            let &(t2, u2) = pairs.choose(&mut rng).unwrap();
            let a = [v.token(t), v.token(t2)].concat();
            let b = [v.token(u), v.token(u2)].concat();
            let w = distinguishing_context(&o, &a, &b, B - 2);
            assert!(w.is_none(), "{name}: {a:?} vs {b:?} split by {w:?}");
        }
    }
}

/// Decodes through the compressed wrapper and checks each step.
#[test]
fn compressed_stream_is_sound() {
    let mut completed = 0;
    for name in suite::NAMES {
        let (v, out) = build(name, 4);
        let e = Engine::new(&out.cfg).unwrap();
        let o = Oracle::with_bound(&out.cfg, 400);
        let t = &out.table;
        let members = t.members();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut steps = 0;
        while steps < 150 {
            let mut stream = CompressedStream::new(&e, t, &v).unwrap();
            for _ in 0..40 {
                // Naive state follows the sampled bytes, not the representatives.
                let naive = e.try_advance(&e.new_state(), stream.text()).expect("text stays viable");
                assert!(o.prefix(stream.text()).unwrap());
                let class_mask = stream.class_mask();
                let token_mask = t.expand(&class_mask).unwrap();
                assert_eq!(token_mask, e.compute_mask_naive(&naive, &v), "{name}");
                for k in class_mask.ones() {
                    // A lone class mask keeps exactly that class.
                    let lone = Mask::from_fn(MaskDomain::Classes, t.class_count(), |j| j == k);
                    assert_eq!(t.expand(&lone).unwrap().count_ones(), members[k].len());
                    for &m in &members[k] {
                        if !v.is_special(m) {
                            assert!(e.try_advance(&naive, v.token(m)).is_some());
                        }
                    }
                }
                steps += 1;
                let allowed: Vec<usize> = token_mask.ones().collect();
                let Some(&tok) = allowed.choose(&mut rng) else { break };
                if v.is_special(tok as u32) {
                    assert!(o.membership(stream.text()).unwrap(), "{name}: completed text not in L");
                    completed += 1;
                    break;
                }
                // Committing any member or the representative gives the same next mask.
                let rep = t.map_token(tok as u32).unwrap();
                let mut via_rep = stream.clone();
                via_rep.commit(rep).unwrap();
                stream.commit(tok as u32).unwrap();
                assert_eq!(stream.class_mask(), via_rep.class_mask());
            }
        }
        assert!(steps >= 150, "{name}");
    }
    assert!(completed > 0, "no run completed");
}

#[test]
fn duplicates_do_not_add_classes() {
    for name in suite::NAMES {
        let (v, out) = build(name, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut tokens = v.tokens().to_vec();
        let specials: Vec<u32> = v.specials().iter().copied().collect();
        for _ in 0..40 {
            let i = rng.gen_range(0..v.len() as u32);
            if !v.is_special(i) {
                tokens.push(v.token(i).to_vec());
            }
        }
        let bigger = Vocabulary::new(tokens, specials).unwrap();
        let again = compile(&out.cfg, &bigger, &CompileOptions::default()).unwrap();
        assert_eq!(again.table.class_count(), out.table.class_count(), "{name}");
        assert_eq!(again.table.representatives(), out.table.representatives());
    }
}
