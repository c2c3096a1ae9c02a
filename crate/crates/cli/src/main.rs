use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bandit_frontier::design::{frank_wolfe_report, kw_gap};
use bandit_frontier::env::{dim_span, Environment, RANK_TOL};
use bandit_frontier::harness::{
    build_family, run_simulation, write_run_outputs, write_sweep_outputs, Family, MarginalSource,
    PolicySpec, RunConfig, RunFile, RunMetadata, SweepFile,
};
use bandit_frontier::oracle::{
    bundled_design_instances, design_cross_check, event_monitor, exact_design_grid, EventKind, BENIGN_TOL,
};

#[derive(Parser)]
#[command(name = "bandit-frontier", version, about = "Bandits with post-action contexts")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a member of an instance family as environment JSON.
    Instance {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        contexts: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        a0: Option<usize>,
        #[arg(long)]
        z0_size: Option<usize>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute an optimal design for the marginal rows of an environment.
    Design {
        #[arg(long)]
        env: PathBuf,
        /// Exhaustive grid search instead of Frank–Wolfe.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value_t = 60)]
        resolution: usize,
    },
    /// Run a simulation described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the balancing rate on a benign and a hard environment.
    SweepPareto {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check concentration events on simulated runs, or cross-check the design solvers.
    Verify {
        #[arg(long, required_unless_present = "design")]
        env: Option<PathBuf>,
        /// EA, EZ or EMG; all applicable events when omitted.
        #[arg(long)]
        event: Option<EventKind>,
        #[arg(long, default_value_t = 100)]
        runs: u32,
        #[arg(long, default_value_t = 2000)]
        horizon: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Compare Frank–Wolfe against grid search on bundled small instances.
        #[arg(long)]
        design: bool,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Instance {
            family,
            actions,
            contexts,
            delta,
            a0,
            z0_size,
            out,
        } => {
            let env = build_family(family, actions, contexts, delta, a0, z0_size)?;
            let json = env.to_json() + "\n";
            match out {
                Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
        }
        Cmd::Design {
            env,
            exact,
            tol,
            resolution,
        } => design(&load_env(&env)?, exact, tol, resolution)?,
        Cmd::Simulate { config, out } => simulate(&config, &out)?,
        Cmd::SweepPareto { config, out } => sweep(&config, &out)?,
        Cmd::Verify {
            env,
            event,
            runs,
            horizon,
            delta,
            seed,
            design,
            resolution,
        } => {
            if design {
                verify_design(resolution)?;
            }
            if let Some(path) = env {
                verify_events(&load_env(&path)?, event, runs, horizon, delta, seed)?;
            }
        }
    }
    Ok(())
}

fn load_env(path: &Path) -> Result<Environment> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Environment::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn design(env: &Environment, exact: bool, tol: f64, resolution: usize) -> Result<()> {
    let m = env.marginals();
    let (weights, gap) = if exact {
        let d = exact_design_grid(m, resolution)?;
        let g = kw_gap(m, &d)?;
        (d, g)
    } else {
        let r = frank_wolfe_report(m, dim_span(m, RANK_TOL), 10_000, tol)?;
        (r.design, r.gap)
    };
    println!("d_span: {}", dim_span(m, RANK_TOL));
    println!("method: {}", if exact { "exact grid" } else { "frank-wolfe" });
    for (a, w) in weights.weights().iter().enumerate() {
        println!("  pi[{a}] = {w}");
    }
    println!("support: {}", weights.support().len());
    println!("g(pi): {gap}");
    Ok(())
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg = RunFile::parse(&text)?.resolve(&base_dir(config))?;
    let res = run_simulation(&cfg)?;
    let meta = RunMetadata::new(&cfg.run_id, &text, cfg.base_seed, cfg.horizon, cfg.replicates);
    write_run_outputs(out, &res, &meta)?;
    println!(
        "{}: final mean regret {:.4} ± {:.4} over {} replicates",
        res.run_id,
        res.curve.final_mean(),
        res.curve.final_stderr(),
        cfg.replicates
    );
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let file = SweepFile::parse(&text)?;
    let plan = file.resolve(&base_dir(config))?;
    let table = plan.run()?;
    let meta = RunMetadata::new(&plan.base.run_id, &text, file.seed, file.horizon, file.replicates);
    write_sweep_outputs(out, &table, &meta)?;
    for (z2, why) in &table.skipped {
        eprintln!("skipped Z2 = {z2}: {why}");
    }
    for r in &table.rows {
        println!(
            "Z2 = {:.4}: benign {:.3} ± {:.3}, hard {:.3} ± {:.3}",
            r.z2, r.benign_regret, r.benign_stderr, r.hard_regret, r.hard_stderr
        );
    }
    match table.spearman() {
        Some(rho) => println!("spearman: {rho:.4}"),
        None => println!("spearman: undefined"),
    }
    Ok(())
}

fn verify_design(resolution: usize) -> Result<()> {
    let mut worst: f64 = 0.0;
    for (name, v) in bundled_design_instances() {
        let c = design_cross_check(&v, resolution, 0.05)?;
        worst = worst.max(c.ratio);
        println!(
            "{name}: rank {} fw g = {:.6} (support {}) exact g = {:.6} ratio {:.4}",
            c.rank, c.fw_gap, c.fw_support, c.exact_gap, c.ratio
        );
    }
    println!("worst ratio: {worst:.4}");
    if worst > 1.05 {
        bail!("Frank-Wolfe design is more than 5% worse than grid search");
    }
    Ok(())
}

fn verify_events(
    env: &Environment,
    event: Option<EventKind>,
    runs: u32,
    horizon: u64,
    delta: f64,
    seed: u64,
) -> Result<()> {
    let benign = env.is_conditionally_benign(BENIGN_TOL);
    let events = match event {
        Some(EventKind::EZ) if !benign => bail!("EZ needs a conditionally benign environment"),
        Some(e) => vec![e],
        None if benign => vec![EventKind::EA, EventKind::EZ, EventKind::EMG],
        None => vec![EventKind::EA, EventKind::EMG],
    };
    let bound = delta + 3.0 * (delta * (1.0 - delta) / runs as f64).sqrt();
    for ev in events {
        let policy = match ev {
            EventKind::EA => PolicySpec::ucb(delta),
            _ => PolicySpec::cucb(delta, MarginalSource::True),
        };
        let cfg = RunConfig::new(env.clone(), policy, horizon)
            .with_replicates(runs)
            .with_seed(seed)
            .with_traces();
        let res = run_simulation(&cfg)?;
        let mut violations = 0u32;
        let mut earliest: Option<u64> = None;
        for rep in &res.replicates {
            let trace = rep.trace.as_ref().context("trace missing")?;
            let report = event_monitor(trace, env, delta, ev)?;
            if let Some(t) = report.first_violation {
                violations += 1;
                earliest = Some(earliest.map_or(t, |e| e.min(t)));
            }
        }
        let rate = violations as f64 / runs as f64;
        println!(
            "{} with {}: {violations}/{runs} runs violated (rate {rate:.4}, bound {bound:.4}), earliest round {}",
            ev.name(),
            res.policy,
            earliest.map_or_else(|| "-".to_string(), |t| t.to_string())
        );
    }
    Ok(())
}
