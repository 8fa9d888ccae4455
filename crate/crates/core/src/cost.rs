//! Closed-form latency, bandwidth and computation predictions per phase,
//! the aggregate lower bound on batches and a layer sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::make_grid;
use crate::matrix::MatStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("inputs need {inputs} B but only {memory} B are available")]
    InsufficientAggregateMemory { memory: u64, inputs: u64 },
    #[error("bad machine parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    /// Seconds per message.
    pub alpha: f64,
    /// Seconds per word.
    pub beta: f64,
    /// Seconds per unit of local work.
    pub gamma: f64,
    pub p: usize,
    /// Aggregate memory in bytes.
    pub memory: u64,
    pub record_bytes: u64,
}

impl MachineParams {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(CostError::BadParams("alpha, beta and gamma must be nonnegative".into()));
        }
        if self.p == 0 || self.memory == 0 || self.record_bytes == 0 {
            return Err(CostError::BadParams("p, memory and record size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CostPhase {
    #[serde(rename = "A-Bcast")]
    ABcast,
    #[serde(rename = "B-Bcast")]
    BBcast,
    #[serde(rename = "AllToAll-Fiber")]
    AllToAllFiber,
    #[serde(rename = "Local-Multiply")]
    LocalMultiply,
    #[serde(rename = "Merge-Layer")]
    MergeLayer,
    #[serde(rename = "Merge-Fiber")]
    MergeFiber,
}

/// Latency and bandwidth in seconds; computation in operations per process.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub latency: f64,
    pub bandwidth: f64,
    pub computation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub phases: BTreeMap<CostPhase, CostTerms>,
    /// `β · Σ_k nnz(D_k) / p`, when the per-layer sums are known.
    pub alltoall_tight_bandwidth: Option<f64>,
    pub gamma: f64,
}

impl CostEstimate {
    pub fn get(&self, phase: CostPhase) -> CostTerms {
        self.phases.get(&phase).copied().unwrap_or_default()
    }

    pub fn latency(&self) -> f64 {
        self.phases.values().map(|t| t.latency).sum()
    }

    pub fn bandwidth(&self) -> f64 {
        self.phases.values().map(|t| t.bandwidth).sum()
    }

    pub fn computation(&self) -> f64 {
        self.phases.values().map(|t| t.computation).sum()
    }

    /// Seconds: latency + bandwidth + γ · computation, with the tighter
    /// AllToAll bandwidth substituted when available.
    pub fn total(&self) -> f64 {
        let mut bw = self.bandwidth();
        if let Some(tight) = self.alltoall_tight_bandwidth {
            bw += tight - self.get(CostPhase::AllToAllFiber).bandwidth;
        }
        self.latency() + bw + self.gamma * self.computation()
    }
}

/// Sizes a prediction needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInput {
    pub nnz_a: u64,
    pub nnz_b: u64,
    pub flops: u64,
    /// `Σ_k nnz(D_k)` for the layer count being predicted.
    pub layer_nnz: Option<u64>,
}

impl CostInput {
    pub fn from_stats(stats: &MatStats, nnz_a: u64, nnz_b: u64) -> Self {
        CostInput {
            nnz_a,
            nnz_b,
            flops: stats.flops,
            layer_nnz: None,
        }
    }
}

/// Per-phase totals over all batches, per process.
pub fn predict(input: &CostInput, l: usize, b: usize, m: &MachineParams) -> Result<CostEstimate, CostError> {
    m.validate()?;
    make_grid(m.p, l).map_err(|e| CostError::InvalidGrid(e.to_string()))?;
    if b == 0 {
        return Err(CostError::InvalidGrid("batch count must be at least 1".into()));
    }
    let (p, l, b) = (m.p as f64, l as f64, b as f64);
    let side = (p / l).sqrt();
    let lg = (p / l).log2();
    let sqrt_pl = (p * l).sqrt();
    let flops_p = input.flops as f64 / p;
    let mut phases = BTreeMap::new();
    phases.insert(
        CostPhase::ABcast,
        CostTerms {
            latency: m.alpha * b * side * lg,
            bandwidth: m.beta * b * input.nnz_a as f64 / sqrt_pl,
            computation: 0.0,
        },
    );
    phases.insert(
        CostPhase::BBcast,
        CostTerms {
            latency: m.alpha * b * side * lg,
            bandwidth: m.beta * input.nnz_b as f64 / sqrt_pl,
            computation: 0.0,
        },
    );
    phases.insert(
        CostPhase::AllToAllFiber,
        CostTerms {
            latency: m.alpha * b * l,
            bandwidth: m.beta * flops_p,
            computation: 0.0,
        },
    );
    phases.insert(
        CostPhase::LocalMultiply,
        CostTerms {
            computation: flops_p,
            ..CostTerms::default()
        },
    );
    phases.insert(
        CostPhase::MergeLayer,
        CostTerms {
            computation: flops_p * lg,
            ..CostTerms::default()
        },
    );
    phases.insert(
        CostPhase::MergeFiber,
        CostTerms {
            computation: flops_p * l.log2(),
            ..CostTerms::default()
        },
    );
    Ok(CostEstimate {
        phases,
        alltoall_tight_bandwidth: input.layer_nnz.map(|d| m.beta * d as f64 / p),
        gamma: m.gamma,
    })
}

/// Fewest batches any schedule can use: `ceil(memC / (M − r(nnzA + nnzB)))`.
pub fn lower_bound_batches(mem_c: u64, memory: u64, nnz_a: u64, nnz_b: u64, record_bytes: u64) -> Result<u64, CostError> {
    let inputs = record_bytes as u128 * (nnz_a as u128 + nnz_b as u128);
    if memory as u128 <= inputs {
        return Err(CostError::InsufficientAggregateMemory {
            memory,
            inputs: inputs.min(u64::MAX as u128) as u64,
        });
    }
    let b = (mem_c as u128).div_ceil(memory as u128 - inputs);
    Ok(b.max(1) as u64)
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub l: usize,
    pub b: usize,
    pub total: f64,
    pub estimate: CostEstimate,
}

/// Signs of the layer effects across the candidates, in increasing `l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Directions {
    /// A-Bcast bandwidth falls as `l` grows (with `b` held fixed).
    pub a_bcast_falls_with_l: bool,
    /// AllToAll-Fiber latency and Merge-Fiber work never fall as `l` grows.
    pub fiber_rises_with_l: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    /// Cheapest first; ties keep increasing `l`.
    pub ranked: Vec<SweepEntry>,
    pub directions: Directions,
}

/// Inputs for a sweep: aggregate sizes plus optional `Σ_k nnz(D_k)` per
/// layer count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub nnz_a: u64,
    pub nnz_b: u64,
    pub flops: u64,
    #[serde(default)]
    pub layer_nnz: BTreeMap<usize, u64>,
}

/// Predicts every candidate layer count with `b` from the budget formula
/// on aggregate sizes, and ranks them by total cost.
pub fn sweep_plan(stats: &SweepStats, m: &MachineParams, l_candidates: &[usize]) -> Result<Sweep, CostError> {
    m.validate()?;
    let mut cands: Vec<usize> = l_candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let mut rows = Vec::with_capacity(cands.len());
    for &l in &cands {
        let layer_nnz = stats.layer_nnz.get(&l).copied();
        let mem_c = m.record_bytes as u128 * layer_nnz.unwrap_or(stats.flops) as u128;
        let b = lower_bound_batches(
            mem_c.min(u64::MAX as u128) as u64,
            m.memory,
            stats.nnz_a,
            stats.nnz_b,
            m.record_bytes,
        )? as usize;
        let input = CostInput {
            nnz_a: stats.nnz_a,
            nnz_b: stats.nnz_b,
            flops: stats.flops,
            layer_nnz,
        };
        let estimate = predict(&input, l, b, m)?;
        rows.push(SweepEntry {
            l,
            b,
            total: estimate.total(),
            estimate,
        });
    }
    let fixed_b: Vec<CostEstimate> = cands
        .iter()
        .map(|&l| predict(&CostInput { nnz_a: stats.nnz_a, nnz_b: stats.nnz_b, flops: stats.flops, layer_nnz: None }, l, 1, m))
        .collect::<Result<_, _>>()?;
    let pairs = || fixed_b.windows(2);
    let directions = Directions {
        a_bcast_falls_with_l: pairs().all(|w| {
            w[1].get(CostPhase::ABcast).bandwidth <= w[0].get(CostPhase::ABcast).bandwidth
        }),
        fiber_rises_with_l: pairs().all(|w| {
            w[1].get(CostPhase::AllToAllFiber).latency >= w[0].get(CostPhase::AllToAllFiber).latency
                && w[1].get(CostPhase::MergeFiber).computation >= w[0].get(CostPhase::MergeFiber).computation
        }),
    };
    rows.sort_by(|x, y| x.total.total_cmp(&y.total).then(x.l.cmp(&y.l)));
    Ok(Sweep { ranked: rows, directions })
}
