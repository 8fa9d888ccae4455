use serde::Serialize;

use super::SummaError;

/// Result of the symbolic step: how many batches to run and why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchPlan {
    /// Batch count to run.
    pub b: usize,
    /// Batch count straight from the budget formula, before verification.
    pub b_formula: usize,
    /// Max over ranks of unmerged output nonzeros summed over all stages.
    pub max_nnz_c: u64,
    pub max_nnz_a: u64,
    pub max_nnz_b: u64,
    /// `M / p` in bytes; `None` means unlimited.
    pub per_rank_budget: Option<u64>,
    pub record_bytes: u64,
    pub headroom: f64,
    pub feasible: bool,
    /// Whether `b` was checked against exact per-batch requirements.
    pub verified: bool,
    /// Largest per-rank live-word requirement over batches at the chosen `b`,
    /// when verified.
    pub required_words: Option<u64>,
    /// Unmerged output nonzeros summed over each layer's ranks.
    pub per_layer_nnz: Vec<u64>,
}

impl BatchPlan {
    pub fn budget_words(&self) -> Option<u64> {
        self.per_rank_budget.map(|b| b / self.record_bytes)
    }
}

/// Batches needed so that `headroom · r · max_c / b` fits in what is left of
/// the per-rank budget after the inputs. Always at least one.
pub fn batches_from_formula(
    record_bytes: u64,
    max_nnz_c: u64,
    max_nnz_a: u64,
    max_nnz_b: u64,
    per_rank_budget: u64,
    headroom: f64,
) -> Result<usize, SummaError> {
    let r = record_bytes as u128;
    let inputs = r * (max_nnz_a as u128 + max_nnz_b as u128);
    let budget = per_rank_budget as u128;
    if budget <= inputs {
        return Err(SummaError::InsufficientMemory {
            per_rank_budget,
            required: inputs.min(u64::MAX as u128) as u64,
            reason: "inputs alone exceed the per-rank budget",
        });
    }
    let denom = budget - inputs;
    let numer = r * max_nnz_c as u128;
    let b = if headroom == 1.0 {
        numer.div_ceil(denom)
    } else {
        (headroom * numer as f64 / denom as f64).ceil() as u128
    };
    Ok(b.max(1).min(usize::MAX as u128) as usize)
}

/// Bytes to hold every layer's unmerged output: `r · Σ_k nnz(D_k)`.
///
/// Panics unless `flops ≥ Σ_k nnz(D_k) ≥ nnz(C)`.
pub fn mem_estimate(per_layer_nnz: &[u64], flops: u64, nnz_c: u64, record_bytes: u64) -> u64 {
    assert!(
        sandwich_holds(flops, per_layer_nnz, nnz_c),
        "flops >= sum of layer outputs >= nnz(C) violated"
    );
    record_bytes * per_layer_nnz.iter().sum::<u64>()
}

pub fn sandwich_holds(flops: u64, per_layer_nnz: &[u64], nnz_c: u64) -> bool {
    let sum: u64 = per_layer_nnz.iter().sum();
    flops >= sum && sum >= nnz_c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_arithmetic() {
        assert_eq!(batches_from_formula(24, 1000, 250, 250, 48_000, 1.0).unwrap(), 1);
        assert_eq!(batches_from_formula(24, 1000, 250, 250, 24_000, 1.0).unwrap(), 2);
        assert_eq!(batches_from_formula(24, 1000, 250, 250, u64::MAX, 1.0).unwrap(), 1);
        assert_eq!(batches_from_formula(24, 0, 0, 0, 1, 1.0).unwrap(), 1);
        assert!(matches!(
            batches_from_formula(24, 1000, 250, 250, 12_000, 1.0),
            Err(SummaError::InsufficientMemory { .. })
        ));
        // headroom scales the requirement
        assert_eq!(batches_from_formula(24, 1000, 250, 250, 48_000, 2.0).unwrap(), 2);
    }

    #[test]
    fn shrinking_budget_never_lowers_b() {
        let mut last = 0;
        for budget in (13_000..200_000u64).rev().step_by(997) {
            let b = batches_from_formula(24, 5000, 250, 250, budget, 1.0).unwrap();
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn metaclust_memory_figures() {
        assert_eq!(mem_estimate(&[1_000_000_000_000], 92_000_000_000_000, 1_000_000_000_000, 24), 24_000_000_000_000);
        assert_eq!(
            mem_estimate(&[92_000_000_000_000], 92_000_000_000_000, 1_000_000_000_000, 24),
            2_208_000_000_000_000
        );
    }

    #[test]
    fn single_layer_no_compression() {
        assert_eq!(mem_estimate(&[500], 500, 500, 24), 24 * 500);
    }

    #[test]
    #[should_panic]
    fn sandwich_violation_panics() {
        mem_estimate(&[10, 10], 15, 5, 24);
    }
}
