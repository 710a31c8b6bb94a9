//! Scenario ingestion and experiment orchestration: ground-state tables,
//! trajectories, the approximating-sequence construction, re-fitting and
//! re-derivation of stored runs, and the acceptance suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use bubblelab_core::acceptance;
use bubblelab_core::decomposition::{fit_parameters, modulation_vector};
use bubblelab_core::diagnostics::{diagnostics_csv, diagnostics_series};
use bubblelab_core::evolution::{
    construct_approximation, evolve, load_construction_fields, localizers_for,
    regular_profile_record, ConstructionRun, EvolutionState, TrajectoryRecord,
};
use bubblelab_core::groundstate;
use bubblelab_core::profiles::{eval_pseudoconformal, ModulationState};
use bubblelab_core::scenario::{Scenario, ScenarioContext};

#[derive(Parser)]
#[command(
    name = "bubblelab",
    about = "Desk-scale laboratory for multi-bubble blow-up of the critical focusing Schrodinger equation",
    version
)]
struct Cli {
    /// Scenario file (JSON); the shipped two-bubble default when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the scenario noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for `sweep` (one trajectory each).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and persist the ground-state tables for the scenario dimension.
    Groundstate,
    /// Integrate one trajectory from the n = 0 boundary data (no fits).
    Evolve,
    /// Build the n-th approximating solution with its decomposition series.
    Construct {
        #[arg(long)]
        n: usize,
    },
    /// All runs n = 0..n_max, plus pairwise comparisons and the rate fit.
    Sweep,
    /// Re-fit the decomposition series of a stored run directory.
    Decompose {
        /// Run directory produced by `construct` (defaults to <out>/run_<n_max>).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Re-derive diagnostics.csv of a stored run directory (idempotent).
    Diagnose {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Run the acceptance suite; exit 2 when a criterion fails.
    Verify,
}

fn load_scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    let mut scn = match &cli.scenario {
        Some(path) => Scenario::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Scenario::default_two_bubble(),
    };
    if let Some(seed) = cli.seed {
        scn.noise.seed = seed;
    }
    Ok(scn)
}

fn meta_json(ctx: &ScenarioContext) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::json!({
        "scenario": ctx.scenario,
        "scenario_hash": ctx.scenario.hash()?,
        "seed": ctx.scenario.noise.seed,
        "kappa": ctx.scenario.kappa(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "warnings": ctx.warnings,
    }))
}

fn prepare(cli: &Cli) -> anyhow::Result<ScenarioContext> {
    let scn = load_scenario(cli)?;
    let ctx = ScenarioContext::prepare(&scn)?;
    for w in &ctx.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ctx)
}

fn save_run(
    ctx: &ScenarioContext,
    run: &ConstructionRun,
    z_rec: &TrajectoryRecord,
    dir: &Path,
) -> anyhow::Result<()> {
    let mut meta = meta_json(ctx)?;
    meta["n"] = serde_json::json!(run.n);
    meta["boundary_time"] = serde_json::json!(run.boundary_time);
    run.save(dir, z_rec, &meta)?;
    if !ctx.model.is_trivial() {
        std::fs::write(dir.join("paths.csv"), ctx.model.paths_csv())?;
    }
    let loc = localizers_for(ctx)?;
    let diag = diagnostics_series(ctx, run, z_rec, &loc)?;
    std::fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&diag))?;
    Ok(())
}

fn cmd_groundstate(cli: &Cli) -> anyhow::Result<()> {
    let scn = load_scenario(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    let gs = groundstate::default_table(scn.d)?;
    let prefix = cli.out.join(format!("groundstate_d{}", scn.d));
    groundstate::save_table(&gs, &prefix)?;
    println!(
        "ground state d={}: Q(0) = {:.6}, ||Q||^2 = {:.6}, ||yQ||^2 = {:.6} -> {}",
        scn.d,
        gs.q0(),
        gs.mass_q(),
        gs.y_q2(),
        prefix.with_extension("nlsf").display()
    );
    Ok(())
}

fn cmd_evolve(cli: &Cli) -> anyhow::Result<()> {
    let ctx = prepare(cli)?;
    let scn = &ctx.scenario;
    let z_rec = regular_profile_record(&ctx)?;
    let t0 = scn.t_n(0);
    let s = eval_pseudoconformal(&scn.specs(), &ctx.gs, &ctx.grid, scn.big_t, t0)?;
    let z0 = z_rec
        .field_at(t0)
        .context("regular profile snapshot missing at the boundary time")?;
    let v0 = s.add(z0)?;
    let rec = evolve(
        EvolutionState::new(v0, t0),
        &ctx.model,
        scn.t_star(),
        scn.dt,
        &scn.sample_times(0),
    )?;
    let dir = cli.out.join("evolve");
    std::fs::create_dir_all(&dir)?;
    rec.save(&dir)?;
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta_json(&ctx)?)?,
    )?;
    println!(
        "evolved {} snapshots over [{:.4}, {:.4}] -> {}",
        rec.times.len(),
        scn.t_star(),
        t0,
        dir.display()
    );
    Ok(())
}

fn cmd_construct(cli: &Cli, n: usize) -> anyhow::Result<()> {
    let ctx = prepare(cli)?;
    if n > ctx.scenario.schedule.n_max {
        bail!(
            "n = {n} beyond the schedule (n_max = {})",
            ctx.scenario.schedule.n_max
        );
    }
    let z_rec = regular_profile_record(&ctx)?;
    let loc = localizers_for(&ctx)?;
    let run = construct_approximation(&ctx, &z_rec, &loc, n)?;
    let dir = cli.out.join(format!("run_{n}"));
    save_run(&ctx, &run, &z_rec, &dir)?;
    let conv = run.rows.iter().filter(|r| r.converged).count();
    println!(
        "run {n}: {} rows ({} converged), D(t*) = {:.4e} -> {}",
        run.rows.len(),
        conv,
        run.rows.first().map(|r| r.d_size).unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> anyhow::Result<()> {
    let ctx = prepare(cli)?;
    let scn = ctx.scenario.clone();
    let z_rec = regular_profile_record(&ctx)?;
    let loc = localizers_for(&ctx)?;
    let n_max = scn.schedule.n_max;

    let indices: Vec<usize> = (0..=n_max).collect();
    let runs: Vec<ConstructionRun> = if cli.threads > 1 {
        std::thread::scope(|scope| {
            let ctx = &ctx;
            let z_rec = &z_rec;
            let loc = &loc;
            let chunks: Vec<_> = indices
                .chunks(indices.len().div_ceil(cli.threads))
                .map(|c| c.to_vec())
                .collect();
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|n| construct_approximation(ctx, z_rec, loc, n))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("worker panic")?);
            }
            Ok::<_, bubblelab_core::Error>(all)
        })?
    } else {
        indices
            .into_iter()
            .map(|n| construct_approximation(&ctx, &z_rec, &loc, n))
            .collect::<Result<Vec<_>, _>>()?
    };

    for run in &runs {
        let dir = cli.out.join(format!("run_{}", run.n));
        save_run(&ctx, run, &z_rec, &dir)?;
        println!(
            "run {}: {} rows, D(t*) = {:.4e}",
            run.n,
            run.rows.len(),
            run.rows.first().map(|r| r.d_size).unwrap_or(f64::NAN)
        );
    }

    // pairwise comparisons at the shared times (t_star and the schedule)
    let mut cmp = String::from("n,t,l2_diff,h1_diff\n");
    for w in runs.windows(2) {
        let mut times = vec![scn.t_star()];
        for j in 0..=w[0].n {
            times.push(scn.t_n(j));
        }
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let diffs = bubblelab_core::evolution::compare_trajectories(
            &w[0].record,
            &w[1].record,
            &times,
        )?;
        for (t, l2, h1) in diffs {
            cmp.push_str(&format!("{},{},{},{}\n", w[1].n, t, l2, h1));
        }
    }
    std::fs::write(cli.out.join("compare.csv"), &cmp)?;

    // decay of D through the schedule on the deepest run
    let deepest = runs.last().expect("runs");
    let sched: Vec<(f64, f64)> = (0..n_max)
        .filter_map(|j| {
            let tj = scn.t_n(j);
            deepest
                .rows
                .iter()
                .find(|r| (r.t - tj).abs() < 1e-9)
                .map(|r| (tj, r.d_size))
        })
        .collect();
    match bubblelab_core::diagnostics::rate_fit(&sched, scn.big_t) {
        Ok(fit) => {
            std::fs::write(
                cli.out.join("rate_fit.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "points": sched,
                }))?,
            )?;
            println!(
                "rate fit over schedule times: slope {:.3}, r^2 {:.4} -> {}",
                fit.slope,
                fit.r_squared,
                cli.out.join("rate_fit.json").display()
            );
        }
        Err(e) => eprintln!("rate fit unavailable: {e}"),
    }
    println!("comparisons -> {}", cli.out.join("compare.csv").display());
    Ok(())
}

fn run_dir(cli: &Cli, dir: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
    if let Some(d) = dir {
        return Ok(d.clone());
    }
    let scn = load_scenario(cli)?;
    Ok(cli.out.join(format!("run_{}", scn.schedule.n_max)))
}

fn reconstruct_run(ctx: &ScenarioContext, dir: &Path) -> anyhow::Result<ConstructionRun> {
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    let n = meta["n"].as_u64().context("meta.json lacks the run index")? as usize;
    let fields = load_construction_fields(dir)?;
    let loc = localizers_for(ctx)?;
    let scn = &ctx.scenario;
    // fields are stored in integration order (descending time)
    let mut guess = ModulationState::boundary(&scn.specs(), scn.big_t, scn.t_n(n));
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    for (t, v, z) in &fields {
        guess.t = *t;
        let row = fit_parameters(v, z, &guess, &ctx.gs, &loc, scn.big_t)?;
        if row.converged {
            guess = row.params.clone();
        }
        rows.push(row);
        times.push(*t);
        snapshots.push(v.clone());
    }
    rows.reverse();
    let record = TrajectoryRecord {
        rows: times
            .iter()
            .zip(&snapshots)
            .map(|(t, f)| bubblelab_core::evolution::SnapshotRow {
                t: *t,
                mass: f.l2_norm_sq(),
                max_abs: f.max_abs(),
                steps: 0,
            })
            .collect(),
        times,
        fields: snapshots,
    };
    let mut run = ConstructionRun {
        n,
        boundary_time: scn.t_n(n),
        record,
        rows,
        mod_series: None,
    };
    if let Ok(series) = modulation_vector(&run.rows) {
        for (row, mods) in run.rows.iter_mut().zip(&series.mod_k) {
            row.mod_k = Some(mods.clone());
        }
        run.mod_series = Some(series);
    }
    Ok(run)
}

fn cmd_decompose(cli: &Cli, dir: &Option<PathBuf>) -> anyhow::Result<()> {
    let ctx = prepare(cli)?;
    let dir = run_dir(cli, dir)?;
    let run = reconstruct_run(&ctx, &dir)?;
    std::fs::write(dir.join("series.csv"), run.series_csv())?;
    let conv = run.rows.iter().filter(|r| r.converged).count();
    println!(
        "re-fitted {} rows ({} converged) -> {}",
        run.rows.len(),
        conv,
        dir.join("series.csv").display()
    );
    Ok(())
}

fn cmd_diagnose(cli: &Cli, dir: &Option<PathBuf>) -> anyhow::Result<()> {
    let ctx = prepare(cli)?;
    let dir = run_dir(cli, dir)?;
    let run = reconstruct_run(&ctx, &dir)?;
    // z snapshots ride along with the stored run
    let fields = load_construction_fields(&dir)?;
    let z_rec = TrajectoryRecord {
        rows: Vec::new(),
        times: fields.iter().map(|(t, _, _)| *t).collect(),
        fields: fields.into_iter().map(|(_, _, z)| z).collect(),
    };
    let loc = localizers_for(&ctx)?;
    let diag = diagnostics_series(&ctx, &run, &z_rec, &loc)?;
    std::fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&diag))?;
    println!(
        "re-derived {} diagnostics rows -> {}",
        diag.len(),
        dir.join("diagnostics.csv").display()
    );
    Ok(())
}

fn cmd_verify(cli: &Cli) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(&cli.out)?;
    let results = acceptance::run_all();
    let table = acceptance::format_table(&results);
    print!("{table}");
    std::fs::write(cli.out.join("acceptance.txt"), &table)?;
    if results.iter().all(|r| r.pass) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Groundstate => cmd_groundstate(&cli).map(|_| ExitCode::SUCCESS),
        Command::Evolve => cmd_evolve(&cli).map(|_| ExitCode::SUCCESS),
        Command::Construct { n } => cmd_construct(&cli, *n).map(|_| ExitCode::SUCCESS),
        Command::Sweep => cmd_sweep(&cli).map(|_| ExitCode::SUCCESS),
        Command::Decompose { dir } => cmd_decompose(&cli, dir).map(|_| ExitCode::SUCCESS),
        Command::Diagnose { dir } => cmd_diagnose(&cli, dir).map(|_| ExitCode::SUCCESS),
        Command::Verify => cmd_verify(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
