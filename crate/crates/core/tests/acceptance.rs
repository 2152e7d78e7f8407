//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines appear in ordinary
//! `cargo test` output. A criterion that fails as stated but whose failure
//! is understood and pinned is reported as `FAIL` without failing the
//! target; any other failure exits nonzero.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use mwd_core::engine::{run, RunConfig, ThreadGroupShape, WavefrontVariant};
use mwd_core::geometry::build_tessellation;
use mwd_core::models::{
    cache_block_size, cache_block_size_r1, code_balance, code_balance_r1, ecm_multicore, ecm_single, machines,
    published_tables, roofline, CacheModelInput, EcmModel, MemLevel, Rational,
};
use mwd_core::scheduler::{Scheduler, TileGraph};
use mwd_core::tuner::{enumerate_shapes, hill_climb};
use mwd_core::{init_state, naive_sweep, GridSpec, StencilKind};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

enum Verdict {
    Pass(String),
    /// Fails as stated, for a pinned and explained reason.
    KnownFail(String),
}

type Criterion = fn() -> Verdict;

fn ratio(n: i128) -> Rational {
    Rational::from_integer(n)
}

fn oracle_equivalence() -> Verdict {
    let shapes = [(1, 1, 1), (2, 1, 1), (1, 2, 1), (2, 1, 2), (1, 2, 3)];
    let variants = [WavefrontVariant::RelaxedPipelined, WavefrontVariant::FixedExecutionToData];
    let (n, steps) = (48, 16);
    let mut runs = 0;
    for kind in StencilKind::ALL {
        let d_w = if kind.radius() == 1 { 8 } else { 16 };
        let initial = init_state(kind, GridSpec::cube(n), 2024).unwrap();
        let mut reference = initial.clone();
        naive_sweep(&mut reference, steps);
        for (tx, ty, tz) in shapes {
            for variant in variants {
                for groups in [1, 2] {
                    let mut cfg = RunConfig::new(d_w, 2, ThreadGroupShape::new(tx, ty, tz), variant, groups);
                    cfg.track_updates = true;
                    let mut state = initial.clone();
                    let report = run(&mut state, steps, &cfg).unwrap();
                    assert_eq!(report.lups, (n * n * n) as u64 * steps);
                    let diff = state.first_difference(&reference);
                    assert!(diff.is_none(), "{kind} {tx}x{ty}x{tz} {variant} groups={groups}: {diff:?}");
                    runs += 1;
                }
            }
        }
    }
    Verdict::Pass(format!("{runs} blocked runs on 48^3, T=16 bitwise equal to the naive sweep"))
}

fn worked_cache_block() -> Verdict {
    for n_xb in (1..=4096).chain([7680, 7744, 1 << 20]) {
        let cs = cache_block_size(&CacheModelInput::new(n_xb, 8, 1, 1, 2));
        assert_eq!(cs, ratio(94 * n_xb as i128));
    }
    Verdict::Pass("C_S(N_xb, 8, 1, 1, 2) = 94·N_xb exactly".into())
}

fn table_predictions() -> Verdict {
    let mut off = Vec::new();
    for row in published_tables() {
        let m = machines().get(row.machine).unwrap();
        let p = ecm_multicore(&row.model, m, m.cores).unwrap();
        if (p.glups - row.published).abs() > 0.1 {
            off.push((row.machine, row.kind, p.glups, row.published));
        }
    }
    // min(18·8·2.3/30.3, 8·2.3/1.8) = 10.22 for the Haswell 7pt-const tuple;
    // the tables print it as "10" (two significant figures)
    match off.as_slice() {
        [] => Verdict::Pass("all eight predictions within ±0.1 GLUP/s".into()),
        [(machine, StencilKind::Const7pt, got, published)] if *machine == "haswell-e5-2699v3" && (got - 10.2222).abs() < 1e-3 => {
            Verdict::KnownFail(format!(
                "7 of 8 within ±0.1 GLUP/s; {machine} 7pt-const tuple gives {got:.3} vs printed {published} (bandwidth cap 8·f/T_L3Mem)"
            ))
        }
        other => panic!("unexpected deviations: {other:?}"),
    }
}

fn ecm_worked_example() -> Verdict {
    let m = EcmModel::new(4.0, 4.0, 2.0, 4.0, 9.0);
    let p = ecm_single(&m, MemLevel::L3);
    assert_eq!(p.cycles, 10.0);
    assert_eq!(p.chain_string(), "{4⌉6⌉10⌉19} cy");
    Verdict::Pass("{4‖4|2|4|9} → L3 10 cy, chain {4⌉6⌉10⌉19} cy".into())
}

fn roofline_examples() -> Verdict {
    let a = roofline(1.0 / 24.0, 41e9) / 1e9;
    let b = roofline(1.0 / 16.0, 41e9) / 1e9;
    assert!((a - 1.71).abs() <= 0.05, "{a}");
    assert!((b - 2.56).abs() <= 0.05, "{b}");
    Verdict::Pass(format!("41/24 = {a:.3}, 41/16 = {b:.3} GLUP/s"))
}

fn algebraic_identities() -> Verdict {
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..1000 {
        let n_xb = rng.gen_range(1..100_000);
        let d_w = 2 * rng.gen_range(1..500);
        let n_f = rng.gen_range(1..64);
        let nd = rng.gen_range(1..32);
        assert_eq!(
            cache_block_size(&CacheModelInput::new(n_xb, d_w, n_f, 1, nd)),
            cache_block_size_r1(n_xb, d_w, n_f, nd)
        );
        assert_eq!(code_balance(d_w, nd, 1), code_balance_r1(d_w, nd));
    }
    Verdict::Pass("general cache-block and code-balance forms equal their R=1 forms on 1000 inputs".into())
}

fn tessellation_properties() -> Verdict {
    let mut checked = 0;
    for radius in [1, 4] {
        for ny in 1..=64 {
            for d_w in (1..=ny / (2 * radius)).map(|m| 2 * radius * m) {
                for steps in 0..=32 {
                    let Ok(tess) = build_tessellation(ny, steps, d_w, radius) else {
                        continue;
                    };
                    check_tessellation(&tess, ny, steps, radius);
                    checked += 1;
                }
            }
        }
    }
    Verdict::Pass(format!("exact cover and dependency soundness on {checked} tessellations"))
}

fn check_tessellation(tess: &mwd_core::geometry::DiamondTessellation, ny: usize, steps: usize, radius: usize) {
    let n = tess.len();
    let mut owner = vec![usize::MAX; ny * steps];
    for tile in &tess.tiles {
        for t in tile.t_begin..tile.t_end {
            let (a, b) = tile.y_bounds(t).unwrap();
            for y in a..b {
                let slot = &mut owner[t * ny + y];
                assert_eq!(*slot, usize::MAX, "({y},{t}) covered twice, Ny={ny} T={steps}");
                *slot = tile.id;
            }
        }
    }
    assert!(owner.iter().all(|&o| o != usize::MAX), "cover has holes, Ny={ny} T={steps}");

    // transitive ancestors; dependencies always point to earlier ids
    let words = n.div_ceil(64);
    let mut anc = vec![0u64; n * words];
    for id in 0..n {
        for &d in &tess.deps[id] {
            assert!(d < id);
            anc[id * words + d / 64] |= 1 << (d % 64);
            for w in 0..words {
                anc[id * words + w] |= anc[d * words + w];
            }
        }
    }
    let before = |a: usize, b: usize| a == b || anc[b * words + a / 64] & (1 << (a % 64)) != 0;

    // step t at y reads level t at y±R (written by step t−1) and
    // overwrites level t−1, read by the same steps t−1 at y±R
    for t in 1..steps {
        for y in 0..ny {
            let me = owner[t * ny + y];
            for yy in y.saturating_sub(radius)..(y + radius + 1).min(ny) {
                let src = owner[(t - 1) * ny + yy];
                assert!(before(src, me), "({y},{t}) in tile {me} needs tile {src}, Ny={ny} T={steps}");
            }
        }
    }
}

fn scheduler_stress() -> Verdict {
    let tess = build_tessellation(8 * 4, 10, 4, 1).unwrap();
    assert_eq!(tess.rows(), 6);
    assert_eq!(tess.tiles.iter().filter(|t| t.row == 1).count(), 8);
    let graph = TileGraph::from_tessellation(&tess);

    let (tx, rx) = mpsc::channel();
    let worker_graph = graph.clone();
    thread::spawn(move || {
        let result = panic::catch_unwind(AssertUnwindSafe(|| {
            for run_id in 0..1000u64 {
                stress_once(&worker_graph, run_id);
            }
        }));
        let _ = tx.send(result.is_ok());
    });
    let start = Instant::now();
    match rx.recv_timeout(Duration::from_secs(30)) {
        Ok(true) => Verdict::Pass(format!(
            "1000 randomized runs over {} tiles: topological, exactly once, {:.1}s",
            graph.len(),
            start.elapsed().as_secs_f64()
        )),
        Ok(false) => panic!("a stress run violated an invariant"),
        Err(_) => panic!("watchdog: stress test did not finish within 30 s"),
    }
}

fn stress_once(graph: &TileGraph, run_id: u64) {
    let sched = Scheduler::new(graph.clone());
    sched.seed_ready();
    let done: Vec<AtomicBool> = (0..graph.len()).map(|_| AtomicBool::new(false)).collect();
    let log = Mutex::new(Vec::new());
    thread::scope(|s| {
        for w in 0..4u64 {
            let (sched, done, log) = (&sched, &done, &log);
            s.spawn(move || {
                let mut rng = StdRng::seed_from_u64(run_id * 8 + w);
                while let Some(id) = sched.pop_blocking() {
                    for &d in &graph.deps[id] {
                        assert!(done[d].load(Ordering::Acquire), "tile {id} started before {d} finished");
                    }
                    log.lock().unwrap().push(id);
                    match rng.gen_range(0..4) {
                        0 => thread::sleep(Duration::from_micros(rng.gen_range(1..40))),
                        1 => thread::yield_now(),
                        _ => {}
                    }
                    assert!(!done[id].swap(true, Ordering::AcqRel), "tile {id} ran twice");
                    sched.complete(id).unwrap();
                }
            });
        }
    });
    let log = log.into_inner().unwrap();
    assert!(graph.is_topological(&log));
    assert!(done.iter().all(|d| d.load(Ordering::Relaxed)));
}

fn tuner_optimality() -> Verdict {
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..20 {
        let radius = if rng.gen_bool(0.5) { 1 } else { 4 };
        let d_ws: Vec<usize> = (1..=rng.gen_range(4..24)).map(|m| 2 * radius * m).collect();
        let n_fs: Vec<usize> = (1..=rng.gen_range(2..12)).collect();
        let (px, py) = (rng.gen_range(0..d_ws.len()), rng.gen_range(0..n_fs.len()));
        let (a, b) = (rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0));
        let cost = |&(i, j): &(usize, usize)| {
            let (di, dj) = (i as f64 - px as f64, j as f64 - py as f64);
            Ok(10.0 - a * di * di - b * dj * dj)
        };
        let neighbors = |&(i, j): &(usize, usize)| {
            let mut v = Vec::new();
            if i + 1 < d_ws.len() {
                v.push((i + 1, j));
            }
            if i > 0 {
                v.push((i - 1, j));
            }
            if j + 1 < n_fs.len() {
                v.push((i, j + 1));
            }
            if j > 0 {
                v.push((i, j - 1));
            }
            v
        };
        let brute = (0..d_ws.len())
            .flat_map(|i| (0..n_fs.len()).map(move |j| (i, j)))
            .max_by(|p, q| cost(p).unwrap().total_cmp(&cost(q).unwrap()))
            .unwrap();
        let start = (rng.gen_range(0..d_ws.len()), rng.gen_range(0..n_fs.len()));
        let (found, _) = hill_climb(start, neighbors, cost).unwrap();
        assert_eq!(found, brute);
        assert_eq!((d_ws[found.0], n_fs[found.1]), (d_ws[px], n_fs[py]));
    }
    let six: Vec<_> = enumerate_shapes(6, 1).iter().map(|s| (s.tx, s.ty, s.tz)).collect();
    assert_eq!(six, [(6, 1, 1), (3, 2, 1), (3, 1, 2), (2, 1, 3), (1, 2, 3), (1, 1, 6)]);
    Verdict::Pass("hill climbing hit the brute-force optimum on 20 instances; 6 shapes for 6 threads".into())
}

fn monotonicity() -> Verdict {
    let mut rng = StdRng::seed_from_u64(10);
    for _ in 0..2000 {
        let radius = rng.gen_range(1..=4);
        let nd = rng.gen_range(1..=16);
        let d_w = 2 * radius * rng.gen_range(1..=32);
        let n_f = rng.gen_range(1..=16);
        let n_xb = rng.gen_range(1..=10_000);
        assert!(code_balance(d_w + 2 * radius, nd, radius) < code_balance(d_w, nd, radius));
        let cs = |n_xb, d_w, n_f, nd| cache_block_size(&CacheModelInput::new(n_xb, d_w, n_f, radius, nd));
        let base = cs(n_xb, d_w, n_f, nd);
        assert!(cs(n_xb + 1, d_w, n_f, nd) > base);
        assert!(cs(n_xb, d_w + 2 * radius, n_f, nd) > base);
        assert!(cs(n_xb, d_w, n_f + 1, nd) > base);
        assert!(cs(n_xb, d_w, n_f, nd + 1) > base);
    }
    // the radius is also an input, and C_S is not monotone in it
    let at = |radius| cache_block_size(&CacheModelInput::new(1, 8, 1, radius, 2));
    assert_eq!((at(1), at(2), at(4)), (ratio(94), ratio(100), ratio(88)));
    Verdict::KnownFail(
        "B_C decreasing in D_w and C_S increasing in N_xb, D_w, N_F, N_D on 2000 inputs; \
         not increasing in R: C_S(1, 8, 1, R, 2) = 94, 100, 88 for R = 1, 2, 4"
            .into(),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("worked cache-block example", worked_cache_block),
        ("table predictions", table_predictions),
        ("ECM worked example", ecm_worked_example),
        ("Roofline worked examples", roofline_examples),
        ("algebraic identities", algebraic_identities),
        ("tessellation properties", tessellation_properties),
        ("scheduler safety and liveness", scheduler_stress),
        ("tuner determinism and optimality", tuner_optimality),
        ("monotonicity properties", monotonicity),
    ];
    let mut unexpected = 0;
    let mut passed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let verdict = panic::catch_unwind(check);
        let secs = t0.elapsed().as_secs_f64();
        match verdict {
            Ok(Verdict::Pass(detail)) => {
                passed += 1;
                println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", n + 1);
            }
            Ok(Verdict::KnownFail(detail)) => {
                println!("criterion {:>2} FAIL  {name} (known, as stated): {detail} [{secs:.2}s]", n + 1);
            }
            Err(e) => {
                unexpected += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.2}s]", n + 1);
            }
        }
    }
    println!("acceptance: {passed} of {} criteria pass", criteria.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
