//! What each rank runs inside the world.

use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::Instant;

use super::plan::{batches_from_formula, BatchPlan};
use super::{BatchPiece, Step, StepTimes, SummaError};
use crate::grid::{BatchSplit, IndexMap, LocalBlock, RankCoord};
use crate::kernels::{finalize_sort, local_symbolic_per_col, Kernel, PartialPile};
use crate::matrix::{block_range, SparseMat};
use crate::runtime::{Phase, RankCtx};
use crate::semiring::Semiring;

/// Live-word accounting for one rank.
pub(crate) struct Tracker {
    rank: usize,
    base: u64,
    budget: Option<u64>,
    pub(crate) peak: u64,
}

impl Tracker {
    pub(crate) fn new(rank: usize, base: u64, budget: Option<u64>) -> Self {
        Tracker { rank, base, budget, peak: base }
    }

    pub(crate) fn observe(&mut self, extra: u64) -> Result<(), SummaError> {
        let live = self.base + extra;
        self.peak = self.peak.max(live);
        match self.budget {
            Some(budget) if live > budget => Err(SummaError::MemoryBudgetExceeded {
                rank: self.rank,
                live_words: live,
                budget_words: budget,
            }),
            _ => Ok(()),
        }
    }
}

fn timed<R>(times: &mut StepTimes, step: Step, f: impl FnOnce() -> R) -> R {
    let t0 = Instant::now();
    let r = f();
    times.add(step, t0.elapsed().as_secs_f64());
    r
}

/// Stages of one layer's 2D SUMMA followed by Merge-Layer.
/// Returns the merged `D̃` and the unmerged pile size.
pub(crate) fn layer_product<S: Semiring>(
    ctx: &mut RankCtx<S::Elem>,
    a: &Arc<SparseMat<S::Elem>>,
    b: &Arc<SparseMat<S::Elem>>,
    sr: S,
    kernel: Kernel,
    tracker: &mut Tracker,
    times: &mut StepTimes,
) -> Result<(SparseMat<S::Elem>, u64), SummaError> {
    let row = ctx.row_comm();
    let col = ctx.col_comm();
    let q = ctx.grid().q();
    let mut pile = Vec::with_capacity(q);
    let mut pile_nnz = 0u64;
    for s in 0..q {
        let a_payload = (row.me == s).then(|| Arc::clone(a));
        let a_recv = timed(times, Step::ABroadcast, || ctx.bcast(&row, s, a_payload, Phase::ABroadcast))?;
        let b_payload = (col.me == s).then(|| Arc::clone(b));
        let b_recv = timed(times, Step::BBroadcast, || ctx.bcast(&col, s, b_payload, Phase::BBroadcast))?;
        let part = timed(times, Step::LocalMultiply, || kernel.multiply(&a_recv, &b_recv, sr))?;
        pile_nnz += part.nnz() as u64;
        pile.push(part);
        tracker.observe(pile_nnz)?;
    }
    let pile = PartialPile::new(pile)?;
    let d = timed(times, Step::MergeLayer, || kernel.merge(&pile, sr))?;
    tracker.observe(pile_nnz + d.nnz() as u64)?;
    Ok((d, pile_nnz))
}

/// Output of the fiber step for one batch.
pub(crate) struct FiberOut<T> {
    pub c: SparseMat<T>,
    pub pile_nnz: u64,
    pub d_nnz: u64,
}

/// Layer product, ColSplit into `l` parts, AllToAll over the fiber and
/// Merge-Fiber. The result is sorted.
pub(crate) fn summa3d_rank<S: Semiring>(
    ctx: &mut RankCtx<S::Elem>,
    a: &Arc<SparseMat<S::Elem>>,
    b: &Arc<SparseMat<S::Elem>>,
    sr: S,
    kernel: Kernel,
    tracker: &mut Tracker,
    times: &mut StepTimes,
) -> Result<FiberOut<S::Elem>, SummaError> {
    let (d, pile_nnz) = layer_product(ctx, a, b, sr, kernel, tracker, times)?;
    let d_nnz = d.nnz() as u64;
    let fiber = ctx.fiber_comm();
    let pieces = d.col_split(fiber.size())?;
    drop(d);
    let recv = timed(times, Step::AllToAllFiber, || {
        ctx.all_to_all(&fiber, pieces, Phase::AllToAllFiber)
    })?;
    let recv_nnz: u64 = recv.iter().map(|m| m.nnz() as u64).sum();
    tracker.observe(recv_nnz)?;
    let c = if recv.len() == 1 {
        recv.into_iter().next().expect("one piece")
    } else {
        let pile = PartialPile::new(recv)?;
        timed(times, Step::MergeFiber, || kernel.merge(&pile, sr))?
    };
    let c = timed(times, Step::MergeFiber, || finalize_sort(&c))?;
    tracker.observe(recv_nnz + c.nnz() as u64)?;
    Ok(FiberOut { c, pile_nnz, d_nnz })
}

/// Per-rank summary of a numeric run.
#[derive(Debug, Clone)]
pub(crate) struct RankRun<T> {
    pub coord: RankCoord,
    pub retained: Option<LocalBlock<T>>,
    pub pile_per_batch: Vec<u64>,
    pub d_per_batch: Vec<u64>,
    pub peak_words: u64,
    pub input_words: u64,
    pub times: StepTimes,
}

pub(crate) struct RankJob<'a, S: Semiring> {
    pub a: &'a LocalBlock<S::Elem>,
    pub b: &'a LocalBlock<S::Elem>,
    pub sr: S,
    pub kernel: Kernel,
    pub batches: usize,
    pub budget_words: Option<u64>,
    pub retain: bool,
    pub sink: Option<Sender<BatchPiece<S::Elem>>>,
}

/// Batched 3D SUMMA on one rank: cut the local B̃ block-cyclically and run
/// the 3D product once per batch.
pub(crate) fn batched_rank<S: Semiring>(
    ctx: &mut RankCtx<S::Elem>,
    job: RankJob<'_, S>,
) -> Result<RankRun<S::Elem>, SummaError> {
    let coord = ctx.coord();
    let l = ctx.grid().layers();
    let input_words = (job.a.mat.nnz() + job.b.mat.nnz()) as u64;
    let mut tracker = Tracker::new(ctx.rank(), input_words, job.budget_words);
    let mut times = StepTimes::default();
    let split = BatchSplit::new(job.b.mat.ncols(), job.batches, l)?;
    let a = Arc::new(job.a.mat.clone());
    let mut kept = Vec::new();
    let mut pile_per_batch = Vec::with_capacity(job.batches);
    let mut d_per_batch = Vec::with_capacity(job.batches);
    for t in 0..job.batches {
        let local = split.piece(t);
        let b = Arc::new(job.b.mat.select_cols(local.iter()));
        let out = summa3d_rank(ctx, &a, &b, job.sr, job.kernel, &mut tracker, &mut times)?;
        pile_per_batch.push(out.pile_nnz);
        d_per_batch.push(out.d_nnz);
        let batch_cols = job.b.cols.compose(&local);
        let (off, len) = block_range(batch_cols.len(), l, coord.k);
        let piece = LocalBlock {
            mat: out.c,
            rows: job.a.rows.clone(),
            cols: batch_cols.compose(&IndexMap::contiguous(off, len)),
        };
        if job.retain {
            kept.push(piece.clone());
        }
        if let Some(sink) = &job.sink {
            // The collector only disappears if the driver is unwinding.
            let _ = sink.send(BatchPiece {
                batch: t,
                rank: ctx.rank(),
                coord,
                block: piece,
            });
        }
    }
    let retained = if job.retain {
        Some(reassemble(kept, job.a.rows.clone(), job.a.mat.nrows())?)
    } else {
        None
    };
    Ok(RankRun {
        coord,
        retained,
        pile_per_batch,
        d_per_batch,
        peak_words: tracker.peak,
        input_words,
        times,
    })
}

/// Concatenates per-batch pieces and reorders columns by global index.
fn reassemble<T: Copy>(pieces: Vec<LocalBlock<T>>, rows: IndexMap, nrows: usize) -> Result<LocalBlock<T>, SummaError> {
    if pieces.is_empty() {
        return Ok(LocalBlock {
            mat: SparseMat::empty(nrows, 0),
            rows,
            cols: IndexMap::from_runs([]),
        });
    }
    let maps: Vec<IndexMap> = pieces.iter().map(|p| p.cols.clone()).collect();
    let mats: Vec<SparseMat<T>> = pieces.into_iter().map(|p| p.mat).collect();
    let mat = SparseMat::col_concat(&mats)?;
    let cols = IndexMap::concat(&maps);
    let globals: Vec<usize> = cols.iter().collect();
    let mut order: Vec<usize> = (0..globals.len()).collect();
    order.sort_by_key(|&c| globals[c]);
    let mat = mat.select_cols(order.iter().copied());
    let cols = IndexMap::from_runs(order.iter().map(|&c| (globals[c], 1)));
    Ok(LocalBlock { mat, rows, cols })
}

/// Inputs to the symbolic step on one rank.
pub(crate) struct SymbolicJob<'a, T> {
    pub a: &'a LocalBlock<T>,
    pub b: &'a LocalBlock<T>,
    pub per_rank_budget: Option<u64>,
    pub record_bytes: u64,
    pub headroom: f64,
    pub verify: bool,
}

pub(crate) struct RankSymbolic {
    pub plan: BatchPlan,
    pub local_nnz_c: u64,
    pub time: f64,
}

/// Value-free pass over the same broadcast stages, then the reductions and
/// the batch-count choice. Every rank reaches the same plan.
pub(crate) fn symbolic_rank<T: Copy + Send + Sync>(
    ctx: &mut RankCtx<T>,
    job: SymbolicJob<'_, T>,
) -> Result<RankSymbolic, SummaError> {
    let t0 = Instant::now();
    let row = ctx.row_comm();
    let col = ctx.col_comm();
    let world = ctx.world_comm();
    let a = Arc::new(job.a.mat.clone());
    let b = Arc::new(job.b.mat.clone());
    let mut per_col = vec![0u64; b.ncols()];
    for s in 0..ctx.grid().q() {
        let a_recv = ctx.bcast(&row, s, (row.me == s).then(|| Arc::clone(&a)), Phase::SymbolicABcast)?;
        let b_recv = ctx.bcast(&col, s, (col.me == s).then(|| Arc::clone(&b)), Phase::SymbolicBBcast)?;
        for (acc, n) in per_col.iter_mut().zip(local_symbolic_per_col(&a_recv, &b_recv)?) {
            *acc += n as u64;
        }
    }
    let local_nnz_c: u64 = per_col.iter().sum();
    let max_nnz_c = ctx.allreduce_max(&world, local_nnz_c, Phase::AllReduce)?;
    let max_nnz_a = ctx.allreduce_max(&world, a.nnz() as u64, Phase::AllReduce)?;
    let max_nnz_b = ctx.allreduce_max(&world, b.nnz() as u64, Phase::AllReduce)?;

    let mut plan = BatchPlan {
        b: 1,
        b_formula: 1,
        max_nnz_c,
        max_nnz_a,
        max_nnz_b,
        per_rank_budget: job.per_rank_budget,
        record_bytes: job.record_bytes,
        headroom: job.headroom,
        feasible: true,
        verified: false,
        required_words: None,
        per_layer_nnz: Vec::new(),
    };
    let Some(budget) = job.per_rank_budget else {
        return Ok(RankSymbolic { plan, local_nnz_c, time: t0.elapsed().as_secs_f64() });
    };
    plan.b_formula = batches_from_formula(job.record_bytes, max_nnz_c, max_nnz_a, max_nnz_b, budget, job.headroom)?;
    plan.b = plan.b_formula;
    if job.verify {
        let budget_words = budget / job.record_bytes;
        let base = (a.nnz() + b.nnz()) as u64;
        let max_cols = ctx.allreduce_max(&world, per_col.len() as u64, Phase::AllReduce)? as usize;
        let mut b_try = plan.b_formula;
        loop {
            let need = batch_requirement(ctx, &per_col, b_try)? + base;
            let need = ctx.allreduce_max(&world, need, Phase::AllReduce)?;
            if need <= budget_words {
                plan.b = b_try;
                plan.verified = true;
                plan.required_words = Some(need);
                break;
            }
            if b_try >= max_cols.max(1) {
                return Err(SummaError::InsufficientMemory {
                    per_rank_budget: budget,
                    required: need.saturating_mul(job.record_bytes),
                    reason: "no batch count fits the budget at single-column granularity",
                });
            }
            b_try += 1;
        }
    }
    Ok(RankSymbolic { plan, local_nnz_c, time: t0.elapsed().as_secs_f64() })
}

/// Upper bound on the largest non-input live words of any batch when the
/// local columns are cut into `b` batches. Merged structures are bounded by
/// what they merge, so each merge point costs at most twice its input.
fn batch_requirement<T: Clone + Send + Sync>(ctx: &mut RankCtx<T>, per_col: &[u64], b: usize) -> Result<u64, SummaError> {
    let fiber = ctx.fiber_comm();
    let l = fiber.size();
    let split = BatchSplit::new(per_col.len(), b, l)?;
    let mut pile = vec![0u64; b];
    let mut send = vec![vec![0u64; b]; l];
    for t in 0..b {
        let cols: Vec<usize> = split.piece(t).iter().collect();
        pile[t] = cols.iter().map(|&c| per_col[c]).sum();
        for (u, out) in send.iter_mut().enumerate() {
            let (off, len) = block_range(cols.len(), l, u);
            out[t] = cols[off..off + len].iter().map(|&c| per_col[c]).sum();
        }
    }
    let recv = ctx.all_to_all_counts(&fiber, send, Phase::AllReduce)?;
    Ok((0..b)
        .map(|t| {
            let fiber_in: u64 = recv.iter().map(|r| r[t]).sum();
            2 * pile[t].max(fiber_in)
        })
        .max()
        .unwrap_or(0))
}
