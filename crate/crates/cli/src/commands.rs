use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use mwd_core::models::{
    cache_block_size, cache_block_size_r1, code_balance, code_balance_r1, ecm_multicore, ecm_single, machines,
    published_tables, roofline, spatial_balance, to_f64, CacheModelInput, EcmModel, MachineSpec, MemLevel,
    Saturation,
};
use mwd_core::tuner::{self, EngineBenchmark, TuneConfig, TuneKey, TuneStore};
use mwd_core::{init_state, naive_sweep, run as run_engine, GridSpec, RunConfig, StencilKind, ThreadGroupShape};

use crate::args::{default_dw, thread_budget, ModelArgs, RunArgs, TuneArgs, VerifyArgs};
use crate::record::{emit, RunRecord};

/// Shapes exercised by `verify --all`.
pub const VERIFY_SHAPES: [(usize, usize, usize); 6] = [(1, 1, 1), (2, 1, 1), (1, 2, 1), (2, 1, 2), (1, 2, 3), (2, 2, 2)];

fn load_machine(name: &str, file: Option<&std::path::Path>) -> Result<MachineSpec> {
    match file {
        Some(p) => MachineSpec::load(p).with_context(|| format!("reading machine file {}", p.display())),
        None => Ok(machines().get(name)?.clone()),
    }
}

fn grid_of(p: &crate::args::ProblemArgs) -> GridSpec {
    GridSpec::new(p.nx, p.ny, p.nz)
}

fn describe(kind: StencilKind, grid: &GridSpec, nt: u64, cfg: &RunConfig) -> String {
    format!(
        "{kind} {}x{}x{} T={nt} D_w={} N_F={} tgs={} {} groups={}",
        grid.nx, grid.ny, grid.nz, cfg.d_w, cfg.n_f, cfg.shape, cfg.variant, cfg.groups
    )
}

/// Returns true when every case matched.
pub fn verify(args: &VerifyArgs) -> Result<bool> {
    let p = &args.problem;
    let b = &args.blocking;
    let grid = grid_of(p);
    let cases: Vec<(StencilKind, ThreadGroupShape)> = if args.all {
        StencilKind::ALL
            .iter()
            .flat_map(|&k| VERIFY_SHAPES.iter().map(move |&(x, y, z)| (k, ThreadGroupShape::new(x, y, z))))
            .collect()
    } else {
        vec![(p.stencil, b.tgs)]
    };

    let mut all_ok = true;
    for (kind, shape) in cases {
        let d_w = match (args.all, b.dw) {
            (false, Some(d)) => d,
            _ => default_dw(kind),
        };
        let mut cfg = RunConfig::new(d_w, b.nf, shape, b.variant, b.groups.unwrap_or(1));
        cfg.track_updates = true;
        let label = describe(kind, &grid, p.nt, &cfg);

        let mut reference = init_state(kind, grid, p.seed)?;
        let mut blocked = reference.clone();
        naive_sweep(&mut reference, p.nt);
        run_engine(&mut blocked, p.nt, &cfg).with_context(|| format!("{label}: invalid configuration"))?;

        if let Some((i, j, k)) = args.inject_fault {
            let l = *blocked.layout();
            if i >= l.nx || j >= l.ny || k >= l.nz {
                bail!("fault cell ({i},{j},{k}) is outside the {}x{}x{} interior", l.nx, l.ny, l.nz);
            }
            let level = (blocked.t_current() % 2) as usize;
            let idx = l.index(i + l.radius, j + l.radius, k + l.radius);
            blocked.field_mut(level)[idx] += 1.0;
        }

        match blocked.first_difference(&reference) {
            None => println!("PASS {label} checksum={:016x}", blocked.checksum()),
            Some((i, j, k, got, want)) => {
                let r = blocked.layout().radius;
                all_ok = false;
                println!(
                    "FAIL {label} first difference at ({},{},{}): blocked={got:e} naive={want:e}",
                    i - r,
                    j - r,
                    k - r
                );
            }
        }
    }
    Ok(all_ok)
}

pub fn run(args: &RunArgs) -> Result<()> {
    let p = &args.problem;
    let b = &args.blocking;
    let grid = grid_of(p);
    let budget = thread_budget(p.threads);

    let mut cfg = if args.use_tuned {
        let machine = load_machine(&args.machine.machine, args.machine.machine_file.as_deref())?;
        let store = TuneStore::load(&args.tuned_file)?;
        let key = TuneKey::new(p.stencil, &grid, &machine.name, budget);
        let best = store.get(&key).ok_or_else(|| {
            anyhow!(
                "no tuned configuration for {} {}x{}x{} on {} with {budget} threads in {}; run `mwd tune` first",
                p.stencil,
                grid.nx,
                grid.ny,
                grid.nz,
                machine.name,
                args.tuned_file.display()
            )
        })?;
        best.candidate.run_config()
    } else {
        let groups = b.groups.unwrap_or((budget / b.tgs.size()).max(1));
        RunConfig::new(b.dw.unwrap_or(default_dw(p.stencil)), b.nf, b.tgs, b.variant, groups)
    };
    cfg.thread_budget = Some(budget);
    cfg.track_updates = false;

    let best = best_of_two(|| {
        let mut state = init_state(p.stencil, grid, p.seed)?;
        let t0 = Instant::now();
        run_engine(&mut state, p.nt, &cfg)?;
        Ok(t0.elapsed().as_secs_f64())
    })?;
    let record = RunRecord::new(p.stencil, &grid, p.nt, &cfg, p.seed, best);
    emit(&[record], args.format, args.out.as_deref())
}

/// Times a case twice and keeps the faster run.
fn best_of_two(mut timed: impl FnMut() -> Result<f64>) -> Result<f64> {
    let first = timed()?;
    Ok(first.min(timed()?))
}

fn table_model(machine: &str, kind: StencilKind) -> Option<EcmModel> {
    published_tables()
        .into_iter()
        .find(|r| r.kind == kind && machine.starts_with(r.machine))
        .map(|r| r.model)
}

fn saturation_text(s: Saturation) -> String {
    match s {
        Saturation::AtCores(n) => format!("saturates at {n} cores"),
        Saturation::ComputeBound => "no memory bottleneck".to_string(),
    }
}

pub fn model(args: &ModelArgs) -> Result<()> {
    let machine = load_machine(&args.machine.machine, args.machine.machine_file.as_deref())?;
    if args.table12 {
        println!("machine,stencil,model,predicted_glups,published_glups,saturation");
        for row in published_tables() {
            let m = machines().get(row.machine)?;
            let p = ecm_multicore(&row.model, m, m.cores)?;
            println!(
                "{},{},{},{:.3},{},{}",
                row.machine,
                row.kind,
                row.model,
                p.glups,
                row.published,
                saturation_text(p.saturation)
            );
        }
        return Ok(());
    }

    let kind = args.stencil;
    let info = kind.info();
    let r = info.radius;
    let d_w = args.dw.unwrap_or(default_dw(kind));
    let leading = GridSpec::new(args.nx, 1, 1).leading_bytes(r);
    let input = CacheModelInput::new(leading, d_w, args.nf, r, info.domain_streams);
    mwd_core::geometry::WavefrontSpec::new(d_w, args.nf, r)?;
    let cs = cache_block_size(&input);
    let bc = code_balance(d_w, info.domain_streams, r);

    println!("machine: {} ({} cores, {} GHz, {} GB/s)", machine.name, machine.cores, machine.clock_hz / 1e9, machine.bandwidth / 1e9);
    println!("stencil: {kind} (R={r}, N_D={})", info.domain_streams);
    println!("C_S = {} bytes = {}·N_xb (N_xb = {leading} bytes)", to_f64(cs), cs / leading as i128);
    let total = to_f64(cs) * args.groups as f64;
    let fits = if total <= machine.usable_cache() as f64 { "fits" } else { "exceeds" };
    println!("{} tile(s): {total} bytes, {fits} the usable cache of {} bytes", args.groups, machine.usable_cache());
    println!("B_C = {} bytes/LUP (spatial blocking: {} bytes/LUP)", to_f64(bc), spatial_balance(kind));

    let r1_cs = cache_block_size(&CacheModelInput::new(leading, d_w.max(2), args.nf, 1, info.domain_streams))
        == cache_block_size_r1(leading, d_w.max(2), args.nf, info.domain_streams);
    let r1_bc = code_balance(d_w, info.domain_streams, 1) == code_balance_r1(d_w, info.domain_streams);
    println!("cache-block R=1 form consistency: {}", if r1_cs { "OK" } else { "MISMATCH" });
    println!("code-balance R=1 form consistency: {}", if r1_bc { "OK" } else { "MISMATCH" });

    let bw = machine.bandwidth;
    println!(
        "Roofline: {:.3} GLUP/s blocked, {:.3} GLUP/s spatial",
        roofline(1.0 / to_f64(bc), bw) / 1e9,
        roofline(1.0 / spatial_balance(kind) as f64, bw) / 1e9
    );

    let ecm = match &args.ecm {
        Some(v) => Some(EcmModel::new(v[0], v[1], v[2], v[3], v[4])),
        None => table_model(&machine.name, kind),
    };
    match ecm {
        Some(m) => {
            let cores = args.threads.unwrap_or(machine.cores);
            let single = ecm_single(&m, MemLevel::Mem);
            let multi = ecm_multicore(&m, &machine, cores)?;
            println!("ECM model: {m}");
            println!("ECM prediction: {}", single.chain_string());
            println!(
                "single core: {:.3} GLUP/s; {cores} cores: {:.3} GLUP/s, {}",
                m.work_unit * machine.clock_hz / single.cycles / 1e9,
                multi.glups,
                saturation_text(multi.saturation)
            );
        }
        None => println!("ECM: no tabulated model for {kind} on {}; pass --ecm", machine.name),
    }
    Ok(())
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let p = &args.problem;
    let grid = grid_of(p);
    let machine = load_machine(&args.machine.machine, args.machine.machine_file.as_deref())?;
    let budget = thread_budget(p.threads);
    let key = TuneKey::new(p.stencil, &grid, &machine.name, budget);
    let config = TuneConfig {
        variant: args.variant,
        n_f_bounds: (1, args.max_nf.max(1)),
        ..TuneConfig::for_machine(&machine)
    };

    if args.dry_run {
        let shapes = tuner::plan(p.stencil, grid, budget, &config)?;
        println!("{} shapes for {budget} threads", shapes.len());
        for s in shapes {
            println!("tgs={} groups={} admissible={} pruned={}", s.shape, s.n_groups, s.admissible, s.pruned);
        }
        return Ok(());
    }

    let mut store = TuneStore::load(&args.out)?;
    if let (false, Some(best)) = (args.force, store.get(&key)) {
        println!("reusing stored result from {} (pass --force to re-tune)", args.out.display());
        println!("{}", serde_json::to_string(best)?);
        return Ok(());
    }

    let mut bench = EngineBenchmark { kind: p.stencil, grid, seed: p.seed };
    let outcome = tuner::tune(p.stencil, grid, budget, &config, &mut bench)?;
    let searched = outcome.shapes.iter().filter(|s| s.admissible > s.pruned).count();
    println!(
        "{} measurements over {searched} of {} shapes",
        outcome.log.len(),
        outcome.shapes.len()
    );
    let best = outcome.best;
    let c = best.candidate;
    println!(
        "best: D_w={} N_F={} tgs={} groups={} {:.3} GLUP/s{}",
        c.d_w,
        c.n_f,
        c.shape,
        c.n_groups,
        best.measured_glups,
        if best.low_confidence { " (unstable measurement)" } else { "" }
    );
    store.insert(key, best);
    store.save(&args.out)?;
    println!("{}", serde_json::to_string(&best)?);
    Ok(())
}
