//! Acceptance criteria. Each test writes one `PASS`/`FAIL`/`SKIP` line to
//! stderr directly, so the lines show up even when output is captured.

mod common;

use std::io::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfgzip::adjacency::stack_adjacency;
use cfgzip::classes::ClassTable;
use cfgzip::displacement::{DisplacementSearch, SearchOptions, TokenDisplacement};
use cfgzip::fuzz::{fuzz_run, RunOutcome};
use cfgzip::grammar::NtId;
use cfgzip::oracle::{compare_languages, filtered_unpruned_displacement, refute_classes, Oracle};
use cfgzip::{compile, suite, ClassKind, CompileOptions, CompileOutput, Engine, Vocabulary};

fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "{name}: {detail}");
}

fn skip(name: &str, detail: &str) {
    let line = format!("acceptance SKIP {name}: {detail}\n");
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn build(name: &str, opts: &CompileOptions) -> (Vocabulary, CompileOutput) {
    let g = suite::grammar(name);
    let v = suite::test_vocabulary(&g, 0);
    let out = compile(&g, &v, opts).unwrap();
    (v, out)
}

const SEEDS: u64 = 5;
const STEPS_PER_SEED: usize = 1000;

#[test]
fn losslessness() {
    let mut total = 0;
    let mut mismatches = 0;
    let mut diverged = 0;
    let mut unsound = 0;
    let mut per_grammar = Vec::new();
    for name in suite::NAMES {
        let (v, out) = build(name, &CompileOptions::default());
        let e = Engine::new(&out.cfg).unwrap();
        let o = Oracle::with_bound(&out.cfg, 4096);
        let mut steps = 0;
        for seed in 0..SEEDS {
            let mut seed_steps = 0;
            let mut run = 0;
            while seed_steps < STEPS_PER_SEED {
                let r = fuzz_run(&e, &v, Some(&out.table), seed, run, 200);
                seed_steps += r.steps.len();
                mismatches += r.mismatches();
                diverged += (r.outcome == RunOutcome::Diverged) as usize;
                if r.outcome == RunOutcome::Completed && !o.membership(&r.text).unwrap() {
                    unsound += 1;
                }
                run += 1;
            }
            steps += seed_steps;
        }
        total += steps;
        per_grammar.push(format!("{name} {steps}"));
    }
    let pass = mismatches == 0 && diverged == 0 && unsound == 0;
    report(
        "losslessness",
        pass,
        &format!(
            "{total} steps ({}), {mismatches} mask mismatches, {diverged} diverged runs, {unsound} completed texts outside L",
            per_grammar.join(", ")
        ),
    );
}

#[test]
fn refinement_at_bound_four() {
    let mut lines = Vec::new();
    let mut refuted = 0;
    for name in suite::NAMES {
        let (v, out) = build(name, &CompileOptions::default());
        let t0 = Instant::now();
        let o = Oracle::with_bound(&out.cfg, 32);
        let r = refute_classes(&o, &v, &out.table, 4);
        let multi = out.table.members().iter().filter(|m| m.len() > 1).count();
        refuted += r.len();
        lines.push(format!("{name} {} refuted of {multi} multi-member classes in {:.1}s", r.len(), t0.elapsed().as_secs_f64()));
    }
    report("refinement", refuted == 0, &lines.join("; "));
}

#[test]
fn same_class_substitution() {
    const SAMPLES: usize = 200;
    let mut disagreements = 0;
    let mut lines = Vec::new();
    for name in suite::NAMES {
        let (v, out) = build(name, &CompileOptions::default());
        let e = Engine::new(&out.cfg).unwrap();
        let o = Oracle::with_bound(&out.cfg, 64);
        let members = out.table.members();
        let ordinary: Vec<u32> = (0..v.len() as u32).filter(|&i| !v.is_special(i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut valid = 0;
        for i in 0..SAMPLES {
            let len = rng.gen_range(1..=5);
            // Half the sequences follow the grammar, half are arbitrary.
            let mut seq = Vec::new();
            let mut state = e.new_state();
            for _ in 0..len {
                let tok = if i % 2 == 0 {
                    let allowed: Vec<u32> = e
                        .compute_mask_naive(&state, &v)
                        .ones()
                        .map(|t| t as u32)
                        .filter(|&t| !v.is_special(t))
                        .collect();
                    match allowed.choose(&mut rng) {
                        Some(&t) => t,
                        None => break,
                    }
                } else {
                    *ordinary.choose(&mut rng).unwrap()
                };
                if let Some(s) = e.try_advance(&state, v.token(tok)) {
                    state = s;
                }
                seq.push(tok);
            }
            let swapped: Vec<u32> = seq
                .iter()
                .map(|&t| *members[out.table.class_of(t) as usize].choose(&mut rng).unwrap())
                .collect();
            let bytes = |s: &[u32]| s.iter().flat_map(|&t| v.token(t).to_vec()).collect::<Vec<u8>>();
            let a = o.prefix(&bytes(&seq)).unwrap();
            let b = o.prefix(&bytes(&swapped)).unwrap();
            valid += a as usize;
            disagreements += (a != b) as usize;
        }
        lines.push(format!("{name} {SAMPLES} ({valid} valid)"));
    }
    report(
        "same-class substitution",
        disagreements == 0,
        &format!("{disagreements} disagreements over {}", lines.join(", ")),
    );
}

#[test]
fn gnf_membership() {
    let mut lines = Vec::new();
    let mut bad = 0;
    for name in suite::NAMES {
        let g = suite::grammar(name);
        let gnf = cfgzip::to_gnf(&g).unwrap();
        let c = compare_languages(&g, &gnf, 8);
        bad += c.mismatches.len();
        lines.push(format!("{name} {} strings", c.checked));
    }
    report("gnf membership", bad == 0, &format!("{bad} mismatches at length <= 8 ({})", lines.join(", ")));
}

#[test]
fn adjacency_pruning() {
    let mut differing_runs = 0;
    let mut differing_sets = 0;
    let mut lines = Vec::new();
    let unpruned_opts = CompileOptions {
        use_adjacency: false,
        ..Default::default()
    };
    for name in suite::NAMES {
        let (v, pruned) = build(name, &CompileOptions::default());
        let (_, unpruned) = build(name, &unpruned_opts);
        let e = Engine::new(&pruned.cfg).unwrap();
        for run in 0..3 {
            let a = fuzz_run(&e, &v, Some(&pruned.table), 9, run, 150);
            let b = fuzz_run(&e, &v, Some(&unpruned.table), 9, run, 150);
            let strip = |r: &cfgzip::fuzz::RunReport| -> Vec<_> {
                r.steps
                    .iter()
                    .map(|s| (s.state_digest.clone(), s.naive_mask.clone(), s.compressed_mask.clone(), s.sampled))
                    .collect()
            };
            differing_runs += (strip(&a) != strip(&b) || a.outcome != b.outcome) as usize;
        }
        let o = Oracle::with_bound(&pruned.cfg, 32);
        let ra = refute_classes(&o, &v, &pruned.table, 2).len();
        let rb = refute_classes(&o, &v, &unpruned.table, 2).len();
        differing_runs += (ra != rb) as usize;

        let adj = stack_adjacency(&pruned.gnf);
        let mut checked = 0;
        for (i, d) in pruned.displacements.iter().enumerate() {
            if let TokenDisplacement::Computed(d) = d {
                checked += 1;
                if *d != filtered_unpruned_displacement(&pruned.gnf, &adj, v.token(i as u32)) {
                    differing_sets += 1;
                }
            }
        }
        lines.push(format!(
            "{name} {checked} tokens, classes {} pruned vs {} unpruned",
            pruned.table.class_count(),
            unpruned.table.class_count()
        ));
    }
    report(
        "adjacency pruning",
        differing_runs == 0 && differing_sets == 0,
        &format!("{differing_runs} differing verify results, {differing_sets} differing sets ({})", lines.join("; ")),
    );
}

#[test]
fn backtrack_trace() {
    let g = suite::stack_backtrack_grammar();
    let adj = stack_adjacency(&g);
    let search = DisplacementSearch::new(&g, &adj, SearchOptions::default());
    let id = |n: &str| g.find(n).unwrap();
    let names = |s: &[NtId]| s.iter().map(|&n| g.name(n).to_string()).collect::<String>();
    let delta = search.compute(b"abcxyz").unwrap();
    let expected_pair = (vec![id("A"), id("X")], vec![id("J"), id("K")]);
    let set_ok = delta.len() == 1 && delta.pairs().iter().next() == Some(&expected_pair);
    let paths = search.trace(b"abcxyz");
    let got: Vec<(String, String)> = paths
        .first()
        .map(|(_, steps)| steps.iter().map(|s| (names(&s.input), names(&s.output))).collect())
        .unwrap_or_default();
    let want: Vec<(String, String)> = [("A", "BC"), ("A", "C"), ("A", ""), ("AX", "Y"), ("AX", "ZJK"), ("AX", "JK")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let trace_ok = paths.len() == 1 && got == want;
    let shown: Vec<String> = got.iter().map(|(i, o)| format!("({i},{o})")).collect();
    report("backtrack trace", set_ok && trace_ok, &format!("{} pair(s); steps {}", delta.len(), shown.join(" ")));
}

#[test]
fn speedup_at_one_tenth() {
    let g = suite::grammar("arith");
    let base = common::distinct_tokens(&g);
    let v = common::with_duplicates(&base, 10, 3);
    let r = common::measure(&g, &v, 200, 3);
    let ratio = r.classes as f64 / r.tokens as f64;
    report(
        "speedup",
        r.time_ratio <= 0.25 && (0.08..=0.12).contains(&ratio),
        &format!(
            "|T| {} |E| {} (|E|/|T| {ratio:.3}), compressed/naive time {:.3}, speedup {:.2}x",
            r.tokens, r.classes, r.time_ratio, r.speedup
        ),
    );
}

#[test]
fn cache_size() {
    const T: usize = 128_256;
    const MIB: u64 = 1 << 20;
    let dir = tempfile::tempdir().unwrap();
    // Synthetic tokens over the JSON alphabet plus one special.
    let g = suite::grammar("json");
    let alphabet: Vec<u8> = g.alphabet().iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut tokens: Vec<Vec<u8>> = (0..T - 1)
        .map(|_| {
            let len = rng.gen_range(1..=6);
            (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
        })
        .collect();
    tokens.push(suite::EOS.to_vec());
    let v = Vocabulary::new(tokens, [(T - 1) as u32]).unwrap();
    let out = compile(&g, &v, &CompileOptions::default()).unwrap();
    let built = dir.path().join("built.cfgz");
    out.table.save(&built).unwrap();
    let built_size = std::fs::metadata(&built).unwrap().len();

    // A table shaped like a real 128k vocabulary with 3095 classes.
    const E: usize = 3095;
    let c: Vec<u32> = (0..T).map(|i| if i < E { i as u32 } else { (i % E) as u32 }).collect();
    let r: Vec<u32> = (0..E as u32).collect();
    let kinds = vec![ClassKind::Grammar; E];
    let shaped = ClassTable::from_parts(c, r, kinds, [1; 32], [2; 32]).unwrap();
    let shaped_path = dir.path().join("shaped.cfgz");
    shaped.save(&shaped_path).unwrap();
    let shaped_size = std::fs::metadata(&shaped_path).unwrap().len();
    assert_eq!(ClassTable::read(&shaped_path).unwrap(), shaped);

    report(
        "cache size",
        built_size <= MIB && shaped_size <= MIB,
        &format!(
            "{built_size} bytes for {T} tokens / {} classes, {shaped_size} bytes for {E} classes (limit {MIB})",
            out.table.class_count()
        ),
    );
}

/// Runs only when `CFGZIP_REAL_VOCAB` names a vocabulary file; the grammar
/// comes from `CFGZIP_REAL_GRAMMAR` or defaults to the built-in JSON subset.
#[test]
fn real_vocabulary_ratio() {
    let Some(path) = std::env::var_os("CFGZIP_REAL_VOCAB") else {
        skip("real vocabulary ratio", "CFGZIP_REAL_VOCAB not set");
        return;
    };
    let v = Vocabulary::load(&path).unwrap();
    let g = match std::env::var_os("CFGZIP_REAL_GRAMMAR") {
        Some(p) => cfgzip::parse_grammar(&cfgzip::GrammarSource::from_file(p).unwrap())
            .unwrap()
            .validate()
            .unwrap(),
        None => suite::grammar("json"),
    };
    let opts = CompileOptions {
        threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..Default::default()
    };
    let out = compile(&g, &v, &opts).unwrap();
    let ratio = out.stats.ratio();
    report("real vocabulary ratio", ratio > 40.0, &format!("{} tokens, {} classes, ratio {ratio:.1}:1", v.len(), out.table.class_count()));
}
