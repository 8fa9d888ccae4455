use super::*;
use crate::grid::make_grid;
use crate::matrix::Triple;
use crate::semiring::PlusTimes;

type Ctx = RankCtx<i64>;

fn diag(n: usize, v: i64) -> SparseMat<i64> {
    let t: Vec<_> = (0..n).map(|i| Triple::new(i, i, v)).collect();
    SparseMat::from_triples(&t, n.max(1), n.max(1), PlusTimes::new()).unwrap()
}

fn random_mat(seed: u64) -> SparseMat<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (rng.gen_range(1..12), rng.gen_range(1..12));
    let t: Vec<_> = (0..rng.gen_range(0..30))
        .map(|_| Triple::new(rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(1..50)))
        .collect();
    SparseMat::from_triples(&t, m, n, PlusTimes::new()).unwrap()
}

#[test]
fn single_rank_world() {
    let out = spawn_ranks(make_grid(1, 1).unwrap(), WorldConfig::default(), |_: &mut Ctx| {
        Ok::<_, CommError>(42)
    })
    .unwrap();
    assert_eq!(out.results, vec![42]);
}

#[test]
fn barrier_then_coords() {
    let g = make_grid(4, 1).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let w = ctx.world_comm();
        ctx.barrier(&w)?;
        Ok::<_, CommError>(ctx.coord())
    })
    .unwrap();
    assert_eq!(out.results, g.coords().collect::<Vec<_>>());
    assert_eq!(out.stats, CommStats::default());
}

#[test]
fn communicator_membership() {
    let g = make_grid(18, 2).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        Ok::<_, CommError>((ctx.row_comm(), ctx.col_comm(), ctx.fiber_comm()))
    })
    .unwrap();
    for (rank, (row, col, fiber)) in out.results.iter().enumerate() {
        assert_eq!(row.size(), 3);
        assert_eq!(col.size(), 3);
        assert_eq!(fiber.size(), 2);
        for c in [row, col, fiber] {
            assert_eq!(c.members[c.me], rank);
        }
    }
}

#[test]
fn bcast_counts_flat_tree() {
    let g = make_grid(16, 1).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let row = ctx.row_comm();
        let payload = (row.me == 0).then(|| Arc::new(diag(10, 1)));
        let got = ctx.bcast(&row, 0, payload, Phase::ABroadcast)?;
        Ok::<_, CommError>(got.nnz())
    })
    .unwrap();
    assert!(out.results.iter().all(|&n| n == 10));
    // each of the 4 rows: root sends 3 copies of 10 words
    assert_eq!(out.stats.words(Phase::ABroadcast), 4 * 30);
    assert_eq!(out.stats.messages(Phase::ABroadcast), 4 * 3);
    assert_eq!(out.per_rank[0].words(Phase::ABroadcast), 30);
    assert_eq!(out.stats.get(Phase::ABroadcast).bytes, 4 * (30 * 24 + 3 * 16));
}

#[test]
fn singleton_bcast_is_free() {
    let g = make_grid(2, 2).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let row = ctx.row_comm();
        ctx.bcast(&row, 0, Some(Arc::new(diag(5, 1))), Phase::BBroadcast)?;
        Ok::<_, CommError>(())
    })
    .unwrap();
    assert_eq!(out.stats.get(Phase::BBroadcast), PhaseCounters::default());
}

#[test]
fn bcast_content_is_identical_everywhere() {
    let g = make_grid(4, 1).unwrap();
    for seed in 0..100u64 {
        let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
            let w = ctx.world_comm();
            let root = (seed % 4) as usize;
            let payload = (w.me == root).then(|| Arc::new(random_mat(seed)));
            Ok::<_, CommError>((*ctx.bcast(&w, root, payload, Phase::ABroadcast)?).clone())
        })
        .unwrap();
        let expect = random_mat(seed);
        assert!(out.results.iter().all(|m| *m == expect));
    }
}

#[test]
fn invalid_root_and_piece_count() {
    let g = make_grid(1, 1).unwrap();
    let err = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let w = ctx.world_comm();
        ctx.bcast(&w, 3, None, Phase::ABroadcast).map(|_| ())
    })
    .unwrap_err();
    assert!(matches!(
        err,
        WorldError::Rank { rank: 0, error: CommError::InvalidRoot { root: 3, size: 1 } }
    ));
    let err = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let f = ctx.fiber_comm();
        ctx.all_to_all(&f, vec![], Phase::AllToAllFiber).map(|_| ())
    })
    .unwrap_err();
    assert!(matches!(
        err,
        WorldError::Rank { error: CommError::PieceCountMismatch { expected: 1, found: 0 }, .. }
    ));
}

#[test]
fn all_to_all_single_layer_is_identity() {
    let g = make_grid(4, 1).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let f = ctx.fiber_comm();
        ctx.all_to_all(&f, vec![diag(3, ctx.rank() as i64 + 1)], Phase::AllToAllFiber)
    })
    .unwrap();
    for (r, got) in out.results.iter().enumerate() {
        assert_eq!(got, &vec![diag(3, r as i64 + 1)]);
    }
    assert_eq!(out.stats.words(Phase::AllToAllFiber), 0);
}

#[test]
fn all_to_all_routes_and_counts() {
    let g = make_grid(2, 2).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let f = ctx.fiber_comm();
        let pieces = (0..2).map(|_| diag(5, 1)).collect();
        ctx.all_to_all(&f, pieces, Phase::AllToAllFiber)
    })
    .unwrap();
    assert_eq!(out.stats.words(Phase::AllToAllFiber), 10);
    assert_eq!(out.stats.messages(Phase::AllToAllFiber), 2);
    assert!(out.results.iter().all(|r| r.len() == 2));
}

#[test]
fn all_to_all_routing_oracle() {
    let g = make_grid(16, 4).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let f = ctx.fiber_comm();
        let base = random_mat(ctx.rank() as u64);
        let pieces = base.col_split(f.size()).unwrap();
        ctx.all_to_all(&f, pieces, Phase::AllToAllFiber)
    })
    .unwrap();
    for (rank, received) in out.results.iter().enumerate() {
        let c = g.coord_of(rank);
        for (src_k, piece) in received.iter().enumerate() {
            let src = g.rank_of(RankCoord::new(c.i, c.j, src_k));
            assert_eq!(*piece, random_mat(src as u64).col_split(4).unwrap()[c.k]);
        }
    }
}

#[test]
fn allreduce_max_cases() {
    let g = make_grid(8, 2).unwrap();
    let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        let w = ctx.world_comm();
        let same = ctx.allreduce_max(&w, 7, Phase::AllReduce)?;
        let top = ctx.allreduce_max(&w, ctx.rank() as u64, Phase::AllReduce)?;
        Ok::<_, CommError>((same, top))
    })
    .unwrap();
    assert!(out.results.iter().all(|&r| r == (7, 7)));
    // gather + release, two reductions
    assert_eq!(out.stats.messages(Phase::AllReduce), 2 * 2 * 7);

    for seed in 0..20u64 {
        let vals: Vec<u64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..8).map(|_| rng.gen_range(0..1000)).collect()
        };
        let vals_ref = &vals;
        let out = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
            let w = ctx.world_comm();
            ctx.allreduce_max(&w, vals_ref[ctx.rank()], Phase::AllReduce)
        })
        .unwrap();
        let expect = *vals.iter().max().unwrap();
        assert!(out.results.iter().all(|&r| r == expect));
    }
}

fn mixed_program(ctx: &mut Ctx) -> Result<u64, CommError> {
    let row = ctx.row_comm();
    let col = ctx.col_comm();
    let fiber = ctx.fiber_comm();
    let mut total = 0u64;
    for s in 0..row.size() {
        let mine = Arc::new(diag(ctx.rank() + 1, 1));
        let a = ctx.bcast(&row, s, (row.me == s).then(|| Arc::clone(&mine)), Phase::ABroadcast)?;
        let b = ctx.bcast(&col, s, (col.me == s).then_some(mine), Phase::BBroadcast)?;
        total += (a.nnz() + b.nnz()) as u64;
    }
    let pieces = (0..fiber.size()).map(|t| diag(t + 1, 1)).collect();
    let got = ctx.all_to_all(&fiber, pieces, Phase::AllToAllFiber)?;
    total += got.iter().map(|m| m.nnz() as u64).sum::<u64>();
    let w = ctx.world_comm();
    Ok(ctx.allreduce_max(&w, total, Phase::AllReduce)? + total)
}

#[test]
fn randomized_schedules_complete_identically() {
    let g = make_grid(8, 2).unwrap();
    let reference = spawn_ranks(g, WorldConfig::default(), mixed_program).unwrap();
    for seed in 0..100 {
        let cfg = WorldConfig {
            schedule_seed: Some(seed),
            ..WorldConfig::default()
        };
        let out = spawn_ranks(g, cfg, mixed_program).unwrap();
        assert_eq!(out.results, reference.results);
        assert_eq!(out.stats, reference.stats);
    }
}

#[test]
fn panic_aborts_world() {
    let g = make_grid(4, 1).unwrap();
    let err = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        if ctx.rank() == 2 {
            panic!("boom");
        }
        let w = ctx.world_comm();
        ctx.barrier(&w)?;
        Ok::<_, CommError>(())
    })
    .unwrap_err();
    match err {
        WorldError::RankPanic { rank, message } => {
            assert_eq!(rank, 2);
            assert_eq!(message, "boom");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn rank_error_wins_over_aborted_peers() {
    #[derive(Debug, PartialEq)]
    enum E {
        Mine,
        Comm(CommError),
    }
    impl From<CommError> for E {
        fn from(e: CommError) -> Self {
            E::Comm(e)
        }
    }
    let g = make_grid(4, 1).unwrap();
    let err = spawn_ranks(g, WorldConfig::default(), |ctx: &mut Ctx| {
        if ctx.rank() == 3 {
            return Err(E::Mine);
        }
        let w = ctx.world_comm();
        ctx.barrier(&w)?;
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, WorldError::Rank { rank: 3, error: E::Mine }));
}
