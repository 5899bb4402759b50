//! `cfgzip` command line: compile, verify, bench, inspect.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cfgzip::bench::bench;
use cfgzip::classes::grammar_digest;
use cfgzip::displacement::DEFAULT_NODE_BUDGET;
use cfgzip::error::Error;
use cfgzip::fuzz::{fuzz_decode, FuzzConfig, RunOutcome};
use cfgzip::oracle::{refute_classes, Oracle};
use cfgzip::vocab::escape_bytes;
use cfgzip::{compile, suite, ClassKind, ClassTable, CompileOptions, Engine, GrammarSource, Vocabulary};

#[derive(Parser)]
#[command(name = "cfgzip", version, about = "Grammar-relative token vocabulary compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the class table and write the cache.
    Compile(CompileArgs),
    /// Fuzz naive against compressed masks and check class congruence.
    Verify(VerifyArgs),
    /// Measure naive and compressed mask latency.
    Bench(BenchArgs),
    /// Print classes, query tokens, dump the GNF grammar or adjacency.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct Inputs {
    /// Grammar file, or `suite:NAME` for a built-in grammar.
    #[arg(long)]
    grammar: String,
    /// Vocabulary file (hex lines), or `suite:SEED` for the seeded test
    /// vocabulary of the grammar.
    #[arg(long)]
    vocab: String,
    /// Cache file. Defaults to `$CFGZIP_CACHE_DIR/<grammar>-<vocab>.cfgz`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct BuildArgs {
    /// Search node cap per token.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Disable adjacency pruning of stack backtracks.
    #[arg(long)]
    no_adjacency: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum tokens per run.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
}

#[derive(Args)]
struct CompileArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    build: BuildArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    build: BuildArgs,
    #[command(flatten)]
    fuzz: FuzzArgs,
    /// Context length bound for the congruence check; 0 skips it.
    #[arg(long, default_value_t = 4)]
    bound: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    fuzz: FuzzArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Show the class of one token id.
    #[arg(long)]
    token: Option<u32>,
    /// Members listed per class.
    #[arg(long, default_value_t = 5)]
    samples: usize,
    /// Classes listed; all by default.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    dump_gnf: bool,
    #[arg(long)]
    dump_adjacency: bool,
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

struct Loaded {
    cfg: cfgzip::Cfg,
    vocab: Vocabulary,
    cache: PathBuf,
}

fn load_inputs(inputs: &Inputs) -> Result<Loaded, Error> {
    let cfg = match inputs.grammar.strip_prefix("suite:") {
        Some(name) => {
            let text = suite::source(name).ok_or_else(|| Error::Config(format!("unknown built-in grammar `{name}`")))?;
            cfgzip::parse_grammar(&GrammarSource::literal(format!("builtin:{name}"), text))?
        }
        None => cfgzip::parse_grammar(&GrammarSource::from_file(&inputs.grammar)?)?,
    }
    .validate()?;
    let vocab = match inputs.vocab.strip_prefix("suite:") {
        Some(seed) => {
            let seed = seed
                .parse()
                .map_err(|_| Error::Config(format!("bad vocabulary seed `{seed}`")))?;
            suite::test_vocabulary(&cfg, seed)
        }
        None => Vocabulary::load(&inputs.vocab)?,
    };
    if vocab.is_empty() {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    let cache = match &inputs.cache {
        Some(p) => p.clone(),
        None => {
            let dir = std::env::var_os("CFGZIP_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| ".".into());
            let name = format!(
                "{}-{}.cfgz",
                hex::encode(&grammar_digest(&cfg)[..4]),
                hex::encode(&vocab.digest()[..4])
            );
            dir.join(name)
        }
    };
    Ok(Loaded { cfg, vocab, cache })
}

fn load_table(l: &Loaded) -> Result<ClassTable, Error> {
    Ok(ClassTable::load(&l.cache, &grammar_digest(&l.cfg), &l.vocab.digest())?)
}

fn compile_options(b: &BuildArgs) -> CompileOptions {
    CompileOptions {
        budget: b.budget,
        use_adjacency: !b.no_adjacency,
        threads: b.threads as usize,
        ..Default::default()
    }
}

fn cmd_compile(a: CompileArgs) -> Result<Status, Error> {
    let l = load_inputs(&a.inputs)?;
    let out = compile(&l.cfg, &l.vocab, &compile_options(&a.build))?;
    if let Some(dir) = l.cache.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    out.table.save(&l.cache)?;
    let s = &out.stats;
    match a.inputs.format {
        Format::Text => println!(
            "tokens {}\nclasses {}\nratio {:.2}\nseconds {:.3}\nfallback tokens {}\ndead tokens {}\ncache {}",
            s.tokens,
            s.classes,
            s.ratio(),
            s.seconds,
            s.fallback_tokens,
            s.dead_tokens,
            l.cache.display()
        ),
        Format::Json => println!(
            "{}",
            json!({
                "tokens": s.tokens,
                "classes": s.classes,
                "ratio": s.ratio(),
                "seconds": s.seconds,
                "fallback_tokens": s.fallback_tokens,
                "dead_tokens": s.dead_tokens,
                "gnf_productions": s.gnf_productions,
                "adjacency_pairs": s.adjacency_pairs,
                "cache": l.cache.display().to_string(),
            })
        ),
    }
    Ok(Status::Ok)
}

fn cmd_verify(a: VerifyArgs) -> Result<Status, Error> {
    let l = load_inputs(&a.inputs)?;
    let config = FuzzConfig::new(a.fuzz.seed, a.fuzz.steps, a.fuzz.runs)?;
    // Without pruning the table is rebuilt in memory rather than read.
    let table = if a.build.no_adjacency {
        compile(&l.cfg, &l.vocab, &compile_options(&a.build))?.table
    } else {
        load_table(&l)?
    };
    let engine = Engine::new(&l.cfg)?;
    let threads = a.build.threads as usize;
    let report = fuzz_decode(&engine, &l.vocab, Some(&table), &config, threads);
    let diverged = report.count(RunOutcome::Diverged);
    let refutations = if a.bound > 0 {
        refute_classes(&Oracle::new(&l.cfg), &l.vocab, &table, a.bound)
    } else {
        Vec::new()
    };
    let mismatches = report.mismatches();
    let failed = mismatches > 0 || diverged > 0 || !refutations.is_empty();
    let first = report.first_mismatch();
    match a.inputs.format {
        Format::Json => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.json_lines().as_bytes())?;
            for r in &refutations {
                writeln!(
                    out,
                    "{}",
                    json!({
                        "kind": "refutation",
                        "class": r.class,
                        "representative": r.representative,
                        "member": r.member,
                        "w": escape_bytes(&r.witness.w),
                        "z": escape_bytes(&r.witness.z),
                    })
                )?;
            }
            writeln!(
                out,
                "{}",
                json!({
                    "kind": "summary",
                    "steps": report.total_steps(),
                    "mismatches": mismatches,
                    "diverged": diverged,
                    "stuck": report.count(RunOutcome::Stuck),
                    "bound": a.bound,
                    "refuted": refutations.len(),
                    "classes": table.class_count(),
                    "first_mismatch": first.as_ref().map(|m| json!({
                        "run": m.run, "step": m.step, "state": m.state_digest, "token": m.token,
                    })),
                    "pass": !failed,
                })
            )?;
        }
        Format::Text => {
            println!("steps {}", report.total_steps());
            println!("mismatches {mismatches}");
            println!("diverged {diverged}");
            println!("stuck {}", report.count(RunOutcome::Stuck));
            println!("classes {}", table.class_count());
            if a.bound > 0 {
                println!("refuted {} (bound {})", refutations.len(), a.bound);
            }
            if let Some(m) = &first {
                println!(
                    "first mismatch: run {} step {} state {} token {} ({:?})",
                    m.run,
                    m.step,
                    m.state_digest,
                    m.token,
                    escape_bytes(l.vocab.token(m.token as u32))
                );
            }
            if let Some(r) = refutations.first() {
                println!(
                    "first refutation: class {} token {} ({:?}) vs representative {} ({:?}) in context {:?} _ {:?}",
                    r.class,
                    r.member,
                    escape_bytes(l.vocab.token(r.member)),
                    r.representative,
                    escape_bytes(l.vocab.token(r.representative)),
                    escape_bytes(&r.witness.w),
                    escape_bytes(&r.witness.z),
                );
            }
            println!("{}", if failed { "FAIL" } else { "PASS" });
        }
    }
    Ok(if failed { Status::Failed } else { Status::Ok })
}

fn cmd_bench(a: BenchArgs) -> Result<Status, Error> {
    let l = load_inputs(&a.inputs)?;
    let config = FuzzConfig::new(a.fuzz.seed, a.fuzz.steps, a.fuzz.runs)?;
    let table = load_table(&l)?;
    let engine = Engine::new(&l.cfg)?;
    let started = Instant::now();
    let report = bench(&engine, &l.vocab, &table, &config, a.threads as usize);
    match a.inputs.format {
        Format::Json => print!("{}", report.json_lines()),
        Format::Text => {
            print!("{}", report.text());
            println!("wall {:.3} s", started.elapsed().as_secs_f64());
        }
    }
    Ok(Status::Ok)
}

fn cmd_inspect(a: InspectArgs) -> Result<Status, Error> {
    let l = load_inputs(&a.inputs)?;
    let table = load_table(&l)?;
    let json = a.inputs.format == Format::Json;
    if a.dump_gnf || a.dump_adjacency {
        let gnf = cfgzip::to_gnf(&l.cfg)?;
        if a.dump_gnf {
            print!("{}", gnf.render());
        }
        if a.dump_adjacency {
            print!("{}", cfgzip::adjacency::stack_adjacency(&gnf).dump(&gnf));
        }
        return Ok(Status::Ok);
    }
    if let Some(id) = a.token {
        if id as usize >= l.vocab.len() {
            return Err(Error::Config(format!("unknown token id {id} ({} tokens)", l.vocab.len())));
        }
        let k = table.class_of(id);
        let rep = table.representative(k);
        if json {
            println!(
                "{}",
                json!({
                    "token": id,
                    "bytes": escape_bytes(l.vocab.token(id)),
                    "class": k,
                    "kind": table.kind(k).as_str(),
                    "representative": rep,
                    "representative_bytes": escape_bytes(l.vocab.token(rep)),
                    "class_size": table.members()[k as usize].len(),
                })
            );
        } else {
            println!(
                "token {id} {:?} class {k} ({}) representative {rep} {:?}",
                escape_bytes(l.vocab.token(id)),
                table.kind(k).as_str(),
                escape_bytes(l.vocab.token(rep))
            );
        }
        return Ok(Status::Ok);
    }

    let members = table.members();
    let mut order: Vec<usize> = (0..table.class_count())
        .filter(|&k| table.kind(k as u32) != ClassKind::Special)
        .collect();
    order.sort_by_key(|&k| (std::cmp::Reverse(members[k].len()), k));
    let specials = l.vocab.specials().len();
    if !json {
        println!(
            "tokens {} classes {} ratio {:.2} specials {}",
            table.token_count(),
            table.class_count(),
            table.compression_ratio(),
            specials
        );
    }
    for &k in order.iter().take(a.limit.unwrap_or(usize::MAX)) {
        let kind = table.kind(k as u32);
        let rep = table.representative(k as u32);
        let sample: Vec<String> = members[k]
            .iter()
            .take(a.samples)
            .map(|&t| escape_bytes(l.vocab.token(t)))
            .collect();
        if json {
            println!(
                "{}",
                json!({
                    "class": k,
                    "kind": kind.as_str(),
                    "size": members[k].len(),
                    "representative": rep,
                    "representative_bytes": escape_bytes(l.vocab.token(rep)),
                    "never_valid": kind == ClassKind::Dead,
                    "sample": sample,
                })
            );
        } else {
            let tag = match kind {
                ClassKind::Dead => " [never valid]",
                ClassKind::Empty => " [empty]",
                ClassKind::Fallback => " [fallback]",
                _ => "",
            };
            println!(
                "class {k:>5} size {:>6} rep {:?}{tag}  {}",
                members[k].len(),
                escape_bytes(l.vocab.token(rep)),
                sample.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" ")
            );
        }
    }
    Ok(Status::Ok)
}
