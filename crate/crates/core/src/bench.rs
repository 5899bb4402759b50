//! Naive vs compressed mask latency.

use serde::Serialize;

use crate::classes::ClassTable;
use crate::engine::Engine;
use crate::fuzz::{fuzz_decode, FuzzConfig, RunOutcome};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return Self {
                samples: 0,
                mean_ns: 0.0,
                p50_ns: 0,
                p99_ns: 0,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let rank = |p: f64| sorted[((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Self {
            samples: sorted.len(),
            mean_ns: sorted.iter().map(|&x| x as f64).sum::<f64>() / sorted.len() as f64,
            p50_ns: rank(0.50),
            p99_ns: rank(0.99),
        }
    }
}

/// Totals for one decoding run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleTotals {
    pub run: usize,
    pub steps: usize,
    pub naive_ns: u64,
    pub compressed_ns: u64,
    pub outcome: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub tokens: usize,
    pub classes: usize,
    pub naive: LatencyStats,
    pub compressed: LatencyStats,
    /// Compressed mean over naive mean.
    pub time_ratio: f64,
    /// Naive mean over compressed mean.
    pub speedup: f64,
    pub examples: Vec<ExampleTotals>,
    /// Runs that got stuck; excluded from the latency figures.
    pub stuck_runs: usize,
}

impl BenchReport {
    pub fn json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let mut v = serde_json::to_value(e).expect("serializable");
            v["kind"] = "example".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "kind": "summary",
            "tokens": self.tokens,
            "classes": self.classes,
            "naive": self.naive,
            "compressed": self.compressed,
            "time_ratio": self.time_ratio,
            "speedup": self.speedup,
            "stuck_runs": self.stuck_runs,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn text(&self) -> String {
        let ms = |ns: f64| ns / 1e6;
        format!(
            "tokens {} classes {}\n\
             naive      mean {:.4} ms  p50 {:.4} ms  p99 {:.4} ms  ({} steps)\n\
             compressed mean {:.4} ms  p50 {:.4} ms  p99 {:.4} ms\n\
             time ratio {:.4}  speedup {:.2}x  examples {}  stuck {}\n",
            self.tokens,
            self.classes,
            ms(self.naive.mean_ns),
            ms(self.naive.p50_ns as f64),
            ms(self.naive.p99_ns as f64),
            self.naive.samples,
            ms(self.compressed.mean_ns),
            ms(self.compressed.p50_ns as f64),
            ms(self.compressed.p99_ns as f64),
            self.time_ratio,
            self.speedup,
            self.examples.len(),
            self.stuck_runs,
        )
    }
}

/// Per-step mask latency over fuzz runs; stuck runs are left out.
pub fn bench(engine: &Engine, vocab: &Vocabulary, table: &ClassTable, config: &FuzzConfig, threads: usize) -> BenchReport {
    let report = fuzz_decode(engine, vocab, Some(table), config, threads);
    let mut naive = Vec::new();
    let mut compressed = Vec::new();
    let mut examples = Vec::new();
    for r in &report.runs {
        if r.outcome == RunOutcome::Stuck {
            continue;
        }
        let n: Vec<u64> = r.steps.iter().map(|s| s.naive_ns).collect();
        let c: Vec<u64> = r.steps.iter().filter_map(|s| s.compressed_ns).collect();
        examples.push(ExampleTotals {
            run: r.run,
            steps: r.steps.len(),
            naive_ns: n.iter().sum(),
            compressed_ns: c.iter().sum(),
            outcome: r.outcome.as_str(),
        });
        naive.extend(n);
        compressed.extend(c);
    }
    let naive = LatencyStats::from_samples(&naive);
    let compressed = LatencyStats::from_samples(&compressed);
    let time_ratio = if naive.mean_ns > 0.0 { compressed.mean_ns / naive.mean_ns } else { 0.0 };
    BenchReport {
        tokens: vocab.len(),
        classes: table.class_count(),
        naive,
        compressed,
        time_ratio,
        speedup: if time_ratio > 0.0 { 1.0 / time_ratio } else { 0.0 },
        examples,
        stuck_runs: report.count(RunOutcome::Stuck),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s: Vec<u64> = (1..=100).collect();
        let st = LatencyStats::from_samples(&s);
        assert_eq!(st.p50_ns, 50);
        assert_eq!(st.p99_ns, 99);
        assert!((st.mean_ns - 50.5).abs() < 1e-9);
        assert_eq!(LatencyStats::from_samples(&[7]).p99_ns, 7);
        assert_eq!(LatencyStats::from_samples(&[]).samples, 0);
    }
}
