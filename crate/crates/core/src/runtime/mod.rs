//! In-process stand-in for the message-passing layer.
//!
//! [`spawn_ranks`] runs one thread per grid rank. Ranks talk only through
//! the collectives on [`RankCtx`], which move data between per-rank
//! mailboxes and count every send. Broadcasts use a flat tree: the root sends
//! one message to each other member. Delivery is reliable and FIFO per
//! (sender, receiver, communicator).

mod stats;

pub use stats::{CommStats, Phase, PhaseCounters};

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridShape3D, RankCoord};
use crate::matrix::SparseMat;

/// Bytes per stored nonzero: two 8-byte indices and an 8-byte value.
pub const DEFAULT_RECORD_BYTES: u64 = 24;
/// Per-message envelope overhead added to byte counts.
pub const DEFAULT_HEADER_BYTES: u64 = 16;

const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommError {
    #[error("root {root} is not a member of a communicator of size {size}")]
    InvalidRoot { root: usize, size: usize },
    #[error("broadcast root supplied no payload")]
    MissingPayload,
    #[error("expected {expected} pieces, got {found}")]
    PieceCountMismatch { expected: usize, found: usize },
    #[error("world aborted by another rank")]
    Aborted,
    #[error("unexpected payload kind from rank {from}")]
    Protocol { from: usize },
}

#[derive(Debug, Error)]
pub enum WorldError<E> {
    #[error("rank {rank} failed: {error}")]
    Rank { rank: usize, error: E },
    #[error("rank {rank} panicked: {message}")]
    RankPanic { rank: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorldConfig {
    pub record_bytes: u64,
    pub header_bytes: u64,
    /// When set, ranks insert seeded random yields and reorder their sends.
    pub schedule_seed: Option<u64>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            record_bytes: DEFAULT_RECORD_BYTES,
            header_bytes: DEFAULT_HEADER_BYTES,
            schedule_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CommKind {
    Row { i: usize, k: usize },
    Col { j: usize, k: usize },
    Fiber { i: usize, j: usize },
    World,
}

impl CommKind {
    fn tag(&self) -> u8 {
        match self {
            CommKind::Row { .. } => 0,
            CommKind::Col { .. } => 1,
            CommKind::Fiber { .. } => 2,
            CommKind::World => 3,
        }
    }
}

/// An ordered group of ranks, seen from one member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Communicator {
    pub kind: CommKind,
    pub members: Vec<usize>,
    pub me: usize,
}

impl Communicator {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

enum Payload<T> {
    Matrix(Arc<SparseMat<T>>),
    Counts(Vec<u64>),
}

struct Envelope<T> {
    src: usize,
    tag: u8,
    control: bool,
    payload: Payload<T>,
}

/// Output of a finished world.
#[derive(Debug)]
pub struct WorldOutput<R> {
    pub results: Vec<R>,
    pub stats: CommStats,
    pub per_rank: Vec<CommStats>,
}

/// A rank's handle on the world.
pub struct RankCtx<T> {
    rank: usize,
    grid: GridShape3D,
    config: WorldConfig,
    outboxes: Vec<Sender<Envelope<T>>>,
    inbox: Receiver<Envelope<T>>,
    pending: HashMap<(usize, u8, bool), VecDeque<Payload<T>>>,
    abort: Arc<AtomicBool>,
    saw_abort: bool,
    rng: Option<ChaCha8Rng>,
    stats: CommStats,
}

impl<T: Send + Sync + Clone> RankCtx<T> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn coord(&self) -> RankCoord {
        self.grid.coord_of(self.rank)
    }

    pub fn grid(&self) -> GridShape3D {
        self.grid
    }

    pub fn config(&self) -> WorldConfig {
        self.config
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    /// `P(i, :, k)`, ordered by column.
    pub fn row_comm(&self) -> Communicator {
        let c = self.coord();
        let members = (0..self.grid.q())
            .map(|j| self.grid.rank_of(RankCoord::new(c.i, j, c.k)))
            .collect();
        Communicator {
            kind: CommKind::Row { i: c.i, k: c.k },
            members,
            me: c.j,
        }
    }

    /// `P(:, j, k)`, ordered by row.
    pub fn col_comm(&self) -> Communicator {
        let c = self.coord();
        let members = (0..self.grid.q())
            .map(|i| self.grid.rank_of(RankCoord::new(i, c.j, c.k)))
            .collect();
        Communicator {
            kind: CommKind::Col { j: c.j, k: c.k },
            members,
            me: c.i,
        }
    }

    /// `P(i, j, :)`, ordered by layer.
    pub fn fiber_comm(&self) -> Communicator {
        let c = self.coord();
        let members = (0..self.grid.layers())
            .map(|k| self.grid.rank_of(RankCoord::new(c.i, c.j, k)))
            .collect();
        Communicator {
            kind: CommKind::Fiber { i: c.i, j: c.j },
            members,
            me: c.k,
        }
    }

    pub fn world_comm(&self) -> Communicator {
        Communicator {
            kind: CommKind::World,
            members: (0..self.grid.ranks()).collect(),
            me: self.rank,
        }
    }

    fn jitter(&mut self) {
        if let Some(rng) = self.rng.as_mut() {
            for _ in 0..rng.gen_range(0..3) {
                std::thread::yield_now();
            }
        }
    }

    fn send_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(rng) = self.rng.as_mut() {
            order.shuffle(rng);
        }
        order
    }

    fn send(&mut self, comm: &Communicator, to: usize, payload: Payload<T>, count: Option<(Phase, u64)>) {
        self.jitter();
        if let Some((phase, words)) = count {
            self.stats
                .record(phase, words, self.config.record_bytes, self.config.header_bytes);
        }
        let env = Envelope {
            src: self.rank,
            tag: comm.kind.tag(),
            control: count.is_none(),
            payload,
        };
        // A closed inbox means the receiver already exited after an abort.
        let _ = self.outboxes[comm.members[to]].send(env);
    }

    fn recv(&mut self, comm: &Communicator, from: usize, control: bool) -> Result<Payload<T>, CommError> {
        let key = (comm.members[from], comm.kind.tag(), control);
        if let Some(p) = self.pending.get_mut(&key).and_then(|q| q.pop_front()) {
            return Ok(p);
        }
        loop {
            match self.inbox.recv_timeout(POLL) {
                Ok(env) => {
                    let k = (env.src, env.tag, env.control);
                    if k == key {
                        return Ok(env.payload);
                    }
                    self.pending.entry(k).or_default().push_back(env.payload);
                }
                Err(RecvTimeoutError::Timeout) => {
                    if self.abort.load(Ordering::SeqCst) {
                        self.saw_abort = true;
                        return Err(CommError::Aborted);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.saw_abort = true;
                    return Err(CommError::Aborted);
                }
            }
        }
    }

    fn recv_matrix(&mut self, comm: &Communicator, from: usize) -> Result<Arc<SparseMat<T>>, CommError> {
        match self.recv(comm, from, false)? {
            Payload::Matrix(m) => Ok(m),
            Payload::Counts(_) => Err(CommError::Protocol { from: comm.members[from] }),
        }
    }

    fn recv_counts(&mut self, comm: &Communicator, from: usize, control: bool) -> Result<Vec<u64>, CommError> {
        match self.recv(comm, from, control)? {
            Payload::Counts(c) => Ok(c),
            Payload::Matrix(_) => Err(CommError::Protocol { from: comm.members[from] }),
        }
    }

    /// Flat-tree broadcast from member `root`. The root passes `Some`.
    /// Counts `size − 1` messages of `nnz` words each, at the root.
    pub fn bcast(
        &mut self,
        comm: &Communicator,
        root: usize,
        payload: Option<Arc<SparseMat<T>>>,
        phase: Phase,
    ) -> Result<Arc<SparseMat<T>>, CommError> {
        if root >= comm.size() {
            return Err(CommError::InvalidRoot { root, size: comm.size() });
        }
        if comm.me != root {
            return self.recv_matrix(comm, root);
        }
        let m = payload.ok_or(CommError::MissingPayload)?;
        let words = m.nnz() as u64;
        for to in self.send_order(comm.size()) {
            if to != root {
                self.send(comm, to, Payload::Matrix(Arc::clone(&m)), Some((phase, words)));
            }
        }
        Ok(m)
    }

    /// Member `t` receives `pieces[t]` from every member. The result is
    /// indexed by source member; the own piece stays local and is not counted.
    pub fn all_to_all(
        &mut self,
        comm: &Communicator,
        pieces: Vec<SparseMat<T>>,
        phase: Phase,
    ) -> Result<Vec<SparseMat<T>>, CommError> {
        if pieces.len() != comm.size() {
            return Err(CommError::PieceCountMismatch {
                expected: comm.size(),
                found: pieces.len(),
            });
        }
        let mut slots: Vec<Option<SparseMat<T>>> = pieces.into_iter().map(Some).collect();
        let own = slots[comm.me].take().expect("own piece present");
        for to in self.send_order(comm.size()) {
            if to != comm.me {
                let piece = slots[to].take().expect("each piece sent once");
                let words = piece.nnz() as u64;
                self.send(comm, to, Payload::Matrix(Arc::new(piece)), Some((phase, words)));
            }
        }
        let mut received = Vec::with_capacity(comm.size());
        for from in 0..comm.size() {
            if from == comm.me {
                received.push(own.clone());
            } else {
                let m = self.recv_matrix(comm, from)?;
                received.push(Arc::try_unwrap(m).unwrap_or_else(|shared| (*shared).clone()));
            }
        }
        Ok(received)
    }

    /// Like [`all_to_all`](Self::all_to_all) for integer vectors.
    pub fn all_to_all_counts(
        &mut self,
        comm: &Communicator,
        pieces: Vec<Vec<u64>>,
        phase: Phase,
    ) -> Result<Vec<Vec<u64>>, CommError> {
        if pieces.len() != comm.size() {
            return Err(CommError::PieceCountMismatch {
                expected: comm.size(),
                found: pieces.len(),
            });
        }
        let mut slots: Vec<Option<Vec<u64>>> = pieces.into_iter().map(Some).collect();
        for to in self.send_order(comm.size()) {
            if to != comm.me {
                let piece = slots[to].take().expect("each piece sent once");
                let words = piece.len() as u64;
                self.send(comm, to, Payload::Counts(piece), Some((phase, words)));
            }
        }
        let mut own = slots[comm.me].take();
        let mut received = Vec::with_capacity(comm.size());
        for from in 0..comm.size() {
            if from == comm.me {
                received.push(own.take().expect("own piece present"));
            } else {
                received.push(self.recv_counts(comm, from, false)?);
            }
        }
        Ok(received)
    }

    /// Element-wise maximum over all members, delivered to every member.
    /// Gathers to member 0 and sends the result back, one word per entry.
    pub fn allreduce_max_vec(
        &mut self,
        comm: &Communicator,
        values: Vec<u64>,
        phase: Phase,
    ) -> Result<Vec<u64>, CommError> {
        self.reduce_max(comm, values, Some(phase))
    }

    pub fn allreduce_max(&mut self, comm: &Communicator, value: u64, phase: Phase) -> Result<u64, CommError> {
        Ok(self.allreduce_max_vec(comm, vec![value], phase)?[0])
    }

    /// Synchronizes all members. Control traffic, not counted.
    pub fn barrier(&mut self, comm: &Communicator) -> Result<(), CommError> {
        self.reduce_max(comm, Vec::new(), None).map(|_| ())
    }

    fn reduce_max(&mut self, comm: &Communicator, values: Vec<u64>, phase: Option<Phase>) -> Result<Vec<u64>, CommError> {
        let control = phase.is_none();
        let words = values.len() as u64;
        let count = phase.map(|p| (p, words));
        if comm.size() == 1 {
            return Ok(values);
        }
        if comm.me != 0 {
            self.send(comm, 0, Payload::Counts(values), count);
            return self.recv_counts(comm, 0, control);
        }
        let mut acc = values;
        for from in 1..comm.size() {
            let other = self.recv_counts(comm, from, control)?;
            for (a, b) in acc.iter_mut().zip(other) {
                *a = (*a).max(b);
            }
        }
        for to in self.send_order(comm.size()) {
            if to != 0 {
                self.send(comm, to, Payload::Counts(acc.clone()), count);
            }
        }
        Ok(acc)
    }
}

/// Runs `program` on every rank of `grid` and waits for all of them.
///
/// If any rank returns an error or panics the world is aborted: ranks blocked
/// in a collective get [`CommError::Aborted`]. The reported error is the
/// first failure that was not itself caused by the abort.
pub fn spawn_ranks<T, R, E, F>(
    grid: GridShape3D,
    config: WorldConfig,
    program: F,
) -> Result<WorldOutput<R>, WorldError<E>>
where
    T: Send + Sync + Clone,
    R: Send,
    E: Send,
    F: Fn(&mut RankCtx<T>) -> Result<R, E> + Sync,
{
    let p = grid.ranks();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..p).map(|_| channel::<Envelope<T>>()).unzip();
    let abort = Arc::new(AtomicBool::new(false));

    enum Outcome<R, E> {
        Done(R, CommStats),
        Failed(E, bool),
        Panicked(String),
    }

    let outcomes: Vec<Outcome<R, E>> = std::thread::scope(|scope| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| {
                let outboxes = senders.clone();
                let abort = Arc::clone(&abort);
                let program = &program;
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(scope, move || {
                        let mut ctx = RankCtx {
                            rank,
                            grid,
                            config,
                            outboxes,
                            inbox,
                            pending: HashMap::new(),
                            abort: Arc::clone(&abort),
                            saw_abort: false,
                            rng: config
                                .schedule_seed
                                .map(|s| ChaCha8Rng::seed_from_u64(s ^ (rank as u64).wrapping_mul(0x9E37_79B9))),
                            stats: CommStats::default(),
                        };
                        match catch_unwind(AssertUnwindSafe(|| program(&mut ctx))) {
                            Ok(Ok(r)) => Outcome::Done(r, ctx.stats),
                            Ok(Err(e)) => {
                                abort.store(true, Ordering::SeqCst);
                                Outcome::Failed(e, ctx.saw_abort)
                            }
                            Err(panic) => {
                                abort.store(true, Ordering::SeqCst);
                                Outcome::Panicked(panic_message(panic))
                            }
                        }
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| Outcome::Panicked(panic_message(p))))
            .collect()
    });

    let mut secondary = None;
    let mut results = Vec::with_capacity(p);
    let mut per_rank = Vec::with_capacity(p);
    let mut outcomes = outcomes.into_iter().enumerate().collect::<Vec<_>>();
    // primary failures first: errors not caused by the abort, then panics
    if let Some(pos) = outcomes
        .iter()
        .position(|(_, o)| matches!(o, Outcome::Failed(_, false)))
        .or_else(|| outcomes.iter().position(|(_, o)| matches!(o, Outcome::Panicked(_))))
    {
        let (rank, o) = outcomes.swap_remove(pos);
        return Err(match o {
            Outcome::Failed(error, _) => WorldError::Rank { rank, error },
            Outcome::Panicked(message) => WorldError::RankPanic { rank, message },
            Outcome::Done(..) => unreachable!(),
        });
    }
    for (rank, o) in outcomes {
        match o {
            Outcome::Done(r, s) => {
                results.push(r);
                per_rank.push(s);
            }
            Outcome::Failed(error, _) => {
                secondary.get_or_insert(WorldError::Rank { rank, error });
            }
            Outcome::Panicked(message) => {
                secondary.get_or_insert(WorldError::RankPanic { rank, message });
            }
        }
    }
    if let Some(e) = secondary {
        return Err(e);
    }
    let mut stats = CommStats::default();
    for s in &per_rank {
        stats.merge(s);
    }
    Ok(WorldOutput { results, stats, per_rank })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

#[cfg(test)]
mod tests;
