//! Benchmark harness: layer and batch sweeps with per-step timings and
//! counters, plus a hash-versus-heap merge comparison.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gen::{gen_er, gen_rmat, GenError, RMAT_DEFAULT};
use crate::kernels::{hash_merge_unsorted, heap_merge_sorted, Kernel, KernelError, PartialPile};
use crate::matrix::SparseMat;
use crate::report::REPORT_SCHEMA;
use crate::runtime::{CommStats, Phase};
use crate::semiring::PlusTimes;
use crate::summa::{multiply, BatchAxis, BatchLog, Batches, StepTimes, SummaConfig, SummaError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Summa(#[from] SummaError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("bad bench config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatrixSpec {
    Er { n: usize, density: f64 },
    Rmat {
        scale: u32,
        edge_factor: usize,
        #[serde(default = "default_probs")]
        probs: [f64; 4],
    },
}

fn default_probs() -> [f64; 4] {
    RMAT_DEFAULT
}

impl MatrixSpec {
    pub fn generate(&self, seed: u64) -> Result<SparseMat<f64>, GenError> {
        match *self {
            MatrixSpec::Er { n, density } => gen_er(n, density, seed),
            MatrixSpec::Rmat {
                scale,
                edge_factor,
                probs,
            } => gen_rmat(scale, edge_factor, probs, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub scale: u32,
    pub edge_factor: usize,
    pub parts: usize,
    #[serde(default = "one")]
    pub reps: usize,
}

fn one() -> usize {
    1
}

/// Squares one generated matrix over every `(l, b)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub seed: u64,
    pub procs: usize,
    pub layers: Vec<usize>,
    pub batches: Vec<usize>,
    #[serde(default)]
    pub kernels: Vec<Kernel>,
    #[serde(default)]
    pub merge: Option<MergeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    pub layers: usize,
    pub batches: usize,
    pub kernel: Kernel,
    pub seconds: f64,
    pub times: StepTimes,
    pub comm: CommStats,
    pub peak_words: u64,
    pub nnz_c: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeTiming {
    pub parts: usize,
    pub input_nnz: u64,
    pub output_nnz: u64,
    pub hash_seconds: f64,
    pub heap_seconds: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema: &'static str,
    pub config: BenchConfig,
    pub nnz_a: u64,
    pub runs: Vec<BenchRun>,
    pub merge: Option<MergeTiming>,
}

/// Runs every configuration in order.
pub fn bench(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    if config.layers.is_empty() || config.batches.is_empty() {
        return Err(BenchError::Config("layers and batches must be nonempty".into()));
    }
    let a = config.matrix.generate(config.seed)?;
    let kernels = if config.kernels.is_empty() {
        vec![Kernel::Hash]
    } else {
        config.kernels.clone()
    };
    let sr = PlusTimes::<f64>::new();
    let mut runs = Vec::new();
    for &kernel in &kernels {
        for &l in &config.layers {
            for &b in &config.batches {
                let cfg = SummaConfig {
                    kernel,
                    retain: false,
                    ..SummaConfig::default()
                };
                let mut log = BatchLog::default();
                let t0 = Instant::now();
                let out = multiply(&a, &a, config.procs, l, sr, Batches::Fixed(b), BatchAxis::Columns, Some(&mut log), &cfg)?;
                let seconds = t0.elapsed().as_secs_f64();
                let run = out.run;
                runs.push(BenchRun {
                    layers: l,
                    batches: b,
                    kernel,
                    seconds,
                    times: run.times.clone(),
                    comm: run.stats.clone(),
                    peak_words: run.peak_words(),
                    nnz_c: log.nnz.iter().sum(),
                });
            }
        }
    }
    let merge = config
        .merge
        .as_ref()
        .map(|m| merge_benchmark(m.scale, m.edge_factor, m.parts, config.seed, m.reps))
        .transpose()?;
    Ok(BenchReport {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        nnz_a: a.nnz() as u64,
        runs,
        merge,
    })
}

/// Times hash and heap merges of `parts` RMAT matrices, best of `reps`.
pub fn merge_benchmark(scale: u32, edge_factor: usize, parts: usize, seed: u64, reps: usize) -> Result<MergeTiming, BenchError> {
    if parts == 0 {
        return Err(BenchError::Config("merge needs at least one part".into()));
    }
    let mats = (0..parts as u64)
        .map(|s| gen_rmat::<f64>(scale, edge_factor, RMAT_DEFAULT, seed.wrapping_add(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let pile = PartialPile::new(mats)?;
    let sr = PlusTimes::<f64>::new();
    let mut hash_seconds = f64::INFINITY;
    let mut heap_seconds = f64::INFINITY;
    let mut output_nnz = 0;
    for _ in 0..reps.max(1) {
        let t0 = Instant::now();
        let h = hash_merge_unsorted(&pile, sr);
        hash_seconds = hash_seconds.min(t0.elapsed().as_secs_f64());
        let t0 = Instant::now();
        let k = heap_merge_sorted(&pile, sr)?;
        heap_seconds = heap_seconds.min(t0.elapsed().as_secs_f64());
        output_nnz = k.nnz() as u64;
        debug_assert_eq!(h.nnz(), k.nnz());
    }
    Ok(MergeTiming {
        parts,
        input_nnz: pile.nnz() as u64,
        output_nnz,
        hash_seconds,
        heap_seconds,
        speedup: heap_seconds / hash_seconds,
    })
}

/// One CSV line per run.
pub fn to_csv(report: &BenchReport) -> String {
    use crate::summa::Step;
    let steps = [
        Step::ABroadcast,
        Step::BBroadcast,
        Step::LocalMultiply,
        Step::MergeLayer,
        Step::AllToAllFiber,
        Step::MergeFiber,
    ];
    let mut out = String::from(
        "kernel,layers,batches,seconds,a_bcast_s,b_bcast_s,local_multiply_s,merge_layer_s,alltoall_s,merge_fiber_s,a_bcast_words,b_bcast_words,alltoall_words,peak_words,nnz_c\n",
    );
    for r in &report.runs {
        let kernel = match r.kernel {
            Kernel::Hash => "hash",
            Kernel::Heap => "heap",
        };
        let times: Vec<String> = steps.iter().map(|&s| format!("{:.6}", r.times.get(s))).collect();
        out.push_str(&format!(
            "{kernel},{},{},{:.6},{},{},{},{},{},{}\n",
            r.layers,
            r.batches,
            r.seconds,
            times.join(","),
            r.comm.get(Phase::ABroadcast).words,
            r.comm.get(Phase::BBroadcast).words,
            r.comm.get(Phase::AllToAllFiber).words,
            r.peak_words,
            r.nnz_c
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> BenchConfig {
        serde_json::from_str(
            r#"{"matrix":{"kind":"er","n":64,"density":0.1},"seed":3,"procs":4,
                "layers":[1,4],"batches":[1,2,4],"kernels":["hash","heap"],
                "merge":{"scale":6,"edge_factor":4,"parts":4}}"#,
        )
        .unwrap()
    }

    #[test]
    fn batch_sweep_counters() {
        let report = bench(&config()).unwrap();
        assert_eq!(report.runs.len(), 12);
        for l in [1, 4] {
            let rows: Vec<&BenchRun> = report.runs.iter().filter(|r| r.layers == l && r.kernel == Kernel::Hash).collect();
            let a1 = rows[0].comm.get(Phase::ABroadcast).words;
            for r in &rows {
                assert_eq!(r.comm.get(Phase::ABroadcast).words, a1 * r.batches as u64);
                assert_eq!(r.comm.get(Phase::BBroadcast).words, rows[0].comm.get(Phase::BBroadcast).words);
            }
        }
        let m = report.merge.unwrap();
        assert_eq!(m.parts, 4);
        assert!(m.output_nnz <= m.input_nnz);
    }

    #[test]
    fn csv_has_a_row_per_run() {
        let report = bench(&config()).unwrap();
        let csv = to_csv(&report);
        assert_eq!(csv.lines().count(), 1 + report.runs.len());
        let cols = csv.lines().next().unwrap().split(',').count();
        assert!(csv.lines().all(|l| l.split(',').count() == cols));
    }

    #[test]
    fn rmat_config_parses_with_default_probs() {
        let c: BenchConfig = serde_json::from_str(
            r#"{"matrix":{"kind":"rmat","scale":5,"edge_factor":2},"procs":1,"layers":[1],"batches":[1]}"#,
        )
        .unwrap();
        assert_eq!(
            c.matrix,
            MatrixSpec::Rmat {
                scale: 5,
                edge_factor: 2,
                probs: RMAT_DEFAULT
            }
        );
        assert!(bench(&c).is_ok());
    }
}
