//! Distributed SUMMA drivers: 2D stages, 3D layering, the symbolic batch
//! planner and batched 3D SUMMA with memory enforcement.

mod consumer;
mod plan;
mod rank;

pub use consumer::{BatchConsumer, BatchLog, BatchPiece, TopKPruner};
pub use plan::{batches_from_formula, mem_estimate, sandwich_holds, BatchPlan};

use std::collections::BTreeMap;
use std::sync::mpsc::channel;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{gather_global, make_grid, DistMatrix, GridError, GridShape3D, LocalBlock, RankCoord, Role};
use crate::grid::{distribute_a, distribute_b};
use crate::kernels::{Kernel, KernelError};
use crate::matrix::{MatrixError, SparseMat};
use crate::runtime::{spawn_ranks, CommError, CommStats, WorldConfig, WorldError};
use crate::semiring::Semiring;
use rank::{batched_rank, layer_product, symbolic_rank, RankJob, SymbolicJob, Tracker};

#[derive(Debug, Error)]
pub enum SummaError {
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("insufficient memory: {reason} (budget {per_rank_budget} B per rank, need {required} B)")]
    InsufficientMemory {
        per_rank_budget: u64,
        required: u64,
        reason: &'static str,
    },
    #[error("rank {rank} holds {live_words} live words, budget is {budget_words}")]
    MemoryBudgetExceeded {
        rank: usize,
        live_words: u64,
        budget_words: u64,
    },
    #[error("inputs do not fit together: {0}")]
    Mismatch(String),
    #[error("rank {rank} panicked: {message}")]
    RankPanic { rank: usize, message: String },
}

impl From<WorldError<SummaError>> for SummaError {
    fn from(e: WorldError<SummaError>) -> Self {
        match e {
            WorldError::Rank { error, .. } => error,
            WorldError::RankPanic { rank, message } => SummaError::RankPanic { rank, message },
        }
    }
}

/// Timed steps of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Step {
    Symbolic,
    #[serde(rename = "A-Broadcast")]
    ABroadcast,
    #[serde(rename = "B-Broadcast")]
    BBroadcast,
    #[serde(rename = "Local-Multiply")]
    LocalMultiply,
    #[serde(rename = "Merge-Layer")]
    MergeLayer,
    #[serde(rename = "AllToAll-Fiber")]
    AllToAllFiber,
    #[serde(rename = "Merge-Fiber")]
    MergeFiber,
}

/// Wall seconds per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StepTimes(BTreeMap<Step, f64>);

impl StepTimes {
    pub fn add(&mut self, step: Step, secs: f64) {
        *self.0.entry(step).or_default() += secs;
    }

    pub fn get(&self, step: Step) -> f64 {
        self.0.get(&step).copied().unwrap_or(0.0)
    }

    /// Keeps the slower rank's time for every step.
    pub fn max_with(&mut self, other: &StepTimes) {
        for (&s, &t) in &other.0 {
            let e = self.0.entry(s).or_default();
            *e = e.max(t);
        }
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }
}

/// How many batches to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Batches {
    /// Run the symbolic step and take its plan.
    #[default]
    Auto,
    Fixed(usize),
}

/// Whether batches cut the output by columns or by rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BatchAxis {
    #[default]
    Columns,
    /// Runs `Bᵀ·Aᵀ` column-batched and transposes the result; consumers see
    /// pieces of `Cᵀ`.
    Rows,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaConfig {
    pub kernel: Kernel,
    pub world: WorldConfig,
    /// Aggregate memory `M` in bytes. `None` means unlimited.
    pub memory: Option<u64>,
    /// Multiplier on the output term of the batch formula.
    pub headroom: f64,
    /// Check the formula's `b` against per-batch requirements and raise it
    /// until every rank fits.
    pub verify_plan: bool,
    /// Keep each rank's output for gathering after the run.
    pub retain: bool,
}

impl Default for SummaConfig {
    fn default() -> Self {
        SummaConfig {
            kernel: Kernel::Hash,
            world: WorldConfig::default(),
            memory: None,
            headroom: 1.0,
            verify_plan: true,
            retain: true,
        }
    }
}

impl SummaConfig {
    fn per_rank_budget(&self, p: usize) -> Option<u64> {
        self.memory.map(|m| m / p as u64)
    }
}

/// What one rank did during a numeric run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub coord: RankCoord,
    pub input_words: u64,
    pub peak_words: u64,
    /// Unmerged partial-product nonzeros summed over stages and batches.
    pub pile_nnz: u64,
    pub pile_per_batch: Vec<u64>,
    /// Nonzeros of the merged layer product, summed over batches.
    pub layer_nnz: u64,
}

/// Result of the symbolic step.
#[derive(Debug, Clone)]
pub struct SymbolicRun {
    pub plan: BatchPlan,
    pub stats: CommStats,
    /// Unmerged symbolic nonzeros per rank, in rank order.
    pub per_rank_nnz_c: Vec<u64>,
    pub seconds: f64,
}

/// Result of a numeric run.
#[derive(Debug, Clone)]
pub struct SummaRun<T> {
    pub grid: GridShape3D,
    pub plan: Option<BatchPlan>,
    pub batches: usize,
    pub budget_words: Option<u64>,
    /// Retained output, laid out by rank.
    pub c: Option<DistMatrix<T>>,
    /// Counters of every phase, symbolic ones included when it ran.
    pub stats: CommStats,
    pub ranks: Vec<RankReport>,
    pub times: StepTimes,
    pub batches_consumed: usize,
}

impl<T: Copy> SummaRun<T> {
    /// Assembles the retained output into one sorted matrix.
    pub fn gather(&self) -> Result<SparseMat<T>, SummaError> {
        let c = self
            .c
            .as_ref()
            .ok_or_else(|| SummaError::Mismatch("output was not retained".into()))?;
        Ok(gather_global(c)?)
    }

    pub fn max_pile_nnz(&self) -> u64 {
        self.ranks.iter().map(|r| r.pile_nnz).max().unwrap_or(0)
    }

    pub fn peak_words(&self) -> u64 {
        self.ranks.iter().map(|r| r.peak_words).max().unwrap_or(0)
    }

    /// Merged layer-product nonzeros summed per layer.
    pub fn per_layer_nnz(&self) -> Vec<u64> {
        let mut v = vec![0; self.grid.layers()];
        for r in &self.ranks {
            v[r.coord.k] += r.layer_nnz;
        }
        v
    }
}

fn check_pair<T>(da: &DistMatrix<T>, db: &DistMatrix<T>) -> Result<(), SummaError> {
    if da.grid != db.grid {
        return Err(SummaError::Mismatch("A and B live on different grids".into()));
    }
    if da.role != Role::A || db.role != Role::B {
        return Err(SummaError::Mismatch("expected an A-distributed and a B-distributed operand".into()));
    }
    if da.ncols != db.nrows {
        return Err(MatrixError::DimMismatch {
            a_rows: da.nrows,
            a_cols: da.ncols,
            b_rows: db.nrows,
            b_cols: db.ncols,
        }
        .into());
    }
    Ok(())
}

/// 2D SUMMA on a single-layer grid. Each rank ends with its merged block of
/// the product, laid out like A.
pub fn summa2d<S: Semiring>(
    da: &DistMatrix<S::Elem>,
    db: &DistMatrix<S::Elem>,
    sr: S,
    cfg: &SummaConfig,
) -> Result<SummaRun<S::Elem>, SummaError> {
    check_pair(da, db)?;
    let grid = da.grid;
    if grid.layers() != 1 {
        return Err(SummaError::Mismatch(format!("2D SUMMA needs one layer, grid has {}", grid.layers())));
    }
    let budget_words = cfg.per_rank_budget(grid.ranks()).map(|b| b / cfg.world.record_bytes);
    let out = spawn_ranks(grid, cfg.world, |ctx| {
        let c = ctx.coord();
        let (a, b) = (da.block(c), db.block(c));
        let input_words = (a.mat.nnz() + b.mat.nnz()) as u64;
        let mut tracker = Tracker::new(ctx.rank(), input_words, budget_words);
        let mut times = StepTimes::default();
        let (d, pile) = layer_product(
            ctx,
            &Arc::new(a.mat.clone()),
            &Arc::new(b.mat.clone()),
            sr,
            cfg.kernel,
            &mut tracker,
            &mut times,
        )?;
        let d = crate::kernels::finalize_sort(&d)?;
        let report = RankReport {
            rank: ctx.rank(),
            coord: c,
            input_words,
            peak_words: tracker.peak,
            pile_nnz: pile,
            pile_per_batch: vec![pile],
            layer_nnz: d.nnz() as u64,
        };
        let block = LocalBlock {
            mat: d,
            rows: a.rows.clone(),
            cols: b.cols.clone(),
        };
        Ok::<_, SummaError>((report, block, times))
    })?;
    let mut times = StepTimes::default();
    let mut ranks = Vec::new();
    let mut blocks = Vec::new();
    for (r, blk, t) in out.results {
        times.max_with(&t);
        ranks.push(r);
        blocks.push(blk);
    }
    Ok(SummaRun {
        grid,
        plan: None,
        batches: 1,
        budget_words,
        c: Some(DistMatrix {
            grid,
            role: Role::C,
            nrows: da.nrows,
            ncols: db.ncols,
            blocks,
        }),
        stats: out.stats,
        ranks,
        times,
        batches_consumed: 0,
    })
}

/// Unbatched 3D SUMMA.
pub fn summa3d<S: Semiring>(
    da: &DistMatrix<S::Elem>,
    db: &DistMatrix<S::Elem>,
    sr: S,
    cfg: &SummaConfig,
) -> Result<SummaRun<S::Elem>, SummaError> {
    batched_summa3d(da, db, sr, Batches::Fixed(1), None, cfg)
}

/// Symbolic step: counts the unmerged output every rank would hold, reduces
/// the maxima and picks the batch count for `cfg.memory`.
pub fn symbolic3d<T: Copy + Send + Sync>(
    da: &DistMatrix<T>,
    db: &DistMatrix<T>,
    cfg: &SummaConfig,
) -> Result<SymbolicRun, SummaError> {
    check_pair(da, db)?;
    let grid = da.grid;
    let per_rank_budget = cfg.per_rank_budget(grid.ranks());
    let out = spawn_ranks(grid, cfg.world, |ctx| {
        let c = ctx.coord();
        symbolic_rank(
            ctx,
            SymbolicJob {
                a: da.block(c),
                b: db.block(c),
                per_rank_budget,
                record_bytes: cfg.world.record_bytes,
                headroom: cfg.headroom,
                verify: cfg.verify_plan,
            },
        )
    })?;
    let per_rank_nnz_c: Vec<u64> = out.results.iter().map(|r| r.local_nnz_c).collect();
    let seconds = out.results.iter().map(|r| r.time).fold(0.0, f64::max);
    let mut plan = out.results.into_iter().next().expect("at least one rank").plan;
    let mut per_layer = vec![0u64; grid.layers()];
    for (rank, n) in per_rank_nnz_c.iter().enumerate() {
        per_layer[grid.coord_of(rank).k] += n;
    }
    plan.per_layer_nnz = per_layer;
    Ok(SymbolicRun {
        plan,
        stats: out.stats,
        per_rank_nnz_c,
        seconds,
    })
}

/// Batched 3D SUMMA. With [`Batches::Auto`] the symbolic step runs first.
/// Every rank's live words are checked against `cfg.memory / p / r` when a
/// memory size is given.
pub fn batched_summa3d<S: Semiring>(
    da: &DistMatrix<S::Elem>,
    db: &DistMatrix<S::Elem>,
    sr: S,
    batches: Batches,
    consumer: Option<&mut dyn BatchConsumer<S::Elem>>,
    cfg: &SummaConfig,
) -> Result<SummaRun<S::Elem>, SummaError> {
    check_pair(da, db)?;
    let grid = da.grid;
    let p = grid.ranks();
    let mut stats = CommStats::default();
    let mut times = StepTimes::default();
    let (b, plan) = match batches {
        Batches::Fixed(0) => return Err(GridError::ZeroBatches.into()),
        Batches::Fixed(b) => (b, None),
        Batches::Auto => {
            let sym = symbolic3d(da, db, cfg)?;
            stats.merge(&sym.stats);
            times.add(Step::Symbolic, sym.seconds);
            (sym.plan.b, Some(sym.plan))
        }
    };
    let budget_words = cfg.per_rank_budget(p).map(|m| m / cfg.world.record_bytes);

    let (tx, rx) = channel::<BatchPiece<S::Elem>>();
    let sink = consumer.is_some().then_some(tx);
    let (world, consumed) = std::thread::scope(|scope| {
        let collector = consumer.map(|c| scope.spawn(move || consumer::drain_batches(rx, p, c)));
        let world = spawn_ranks(grid, cfg.world, |ctx| {
            let c = ctx.coord();
            batched_rank(
                ctx,
                RankJob {
                    a: da.block(c),
                    b: db.block(c),
                    sr,
                    kernel: cfg.kernel,
                    batches: b,
                    budget_words,
                    retain: cfg.retain,
                    sink: sink.clone(),
                },
            )
        });
        drop(sink);
        let consumed = collector.map_or(0, |h| h.join().expect("consumer panicked"));
        (world, consumed)
    });
    let out = world?;
    stats.merge(&out.stats);

    let mut ranks = Vec::with_capacity(p);
    let mut blocks = Vec::with_capacity(p);
    for (rank, run) in out.results.into_iter().enumerate() {
        times.max_with(&run.times);
        ranks.push(RankReport {
            rank,
            coord: run.coord,
            input_words: run.input_words,
            peak_words: run.peak_words,
            pile_nnz: run.pile_per_batch.iter().sum(),
            pile_per_batch: run.pile_per_batch,
            layer_nnz: run.d_per_batch.iter().sum(),
        });
        if let Some(blk) = run.retained {
            blocks.push(blk);
        }
    }
    let c = cfg.retain.then_some(DistMatrix {
        grid,
        role: Role::C,
        nrows: da.nrows,
        ncols: db.ncols,
        blocks,
    });
    Ok(SummaRun {
        grid,
        plan,
        batches: b,
        budget_words,
        c,
        stats,
        ranks,
        times,
        batches_consumed: consumed,
    })
}

/// Output of [`multiply`].
#[derive(Debug, Clone)]
pub struct Product<T> {
    pub c: Option<SparseMat<T>>,
    pub run: SummaRun<T>,
}

/// Distributes `a` and `b` over a `p`-rank grid with `l` layers, runs
/// batched 3D SUMMA and gathers the result when retained.
#[allow(clippy::too_many_arguments)]
pub fn multiply<S: Semiring>(
    a: &SparseMat<S::Elem>,
    b: &SparseMat<S::Elem>,
    p: usize,
    l: usize,
    sr: S,
    batches: Batches,
    axis: BatchAxis,
    consumer: Option<&mut dyn BatchConsumer<S::Elem>>,
    cfg: &SummaConfig,
) -> Result<Product<S::Elem>, SummaError> {
    if a.ncols() != b.nrows() {
        return Err(MatrixError::DimMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
        }
        .into());
    }
    let grid = make_grid(p, l)?;
    let (left, right) = match axis {
        BatchAxis::Columns => (a.clone(), b.clone()),
        BatchAxis::Rows => (b.transpose(), a.transpose()),
    };
    let da = distribute_a(&left, grid);
    let db = distribute_b(&right, grid);
    let run = batched_summa3d(&da, &db, sr, batches, consumer, cfg)?;
    let c = if cfg.retain {
        let g = run.gather()?;
        Some(match axis {
            BatchAxis::Columns => g,
            BatchAxis::Rows => g.transpose(),
        })
    } else {
        None
    };
    Ok(Product { c, run })
}
