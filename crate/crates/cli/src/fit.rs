use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use hsbm::mcmc::{run_chain_persisted, select_best_run, Trace};
use hsbm::summaries::{comembership_mcmc, comembership_vb, Level};
use hsbm::vb::{run_vb, select_best_vb, VbRun};
use hsbm::Network;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::manifest::OutputDir;
use crate::output::{write, write_summary};
use crate::{usage, NetworkArgs, NumericalFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mcmc,
    Vb,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "mcmc")]
    engine: Engine,
    #[command(flatten)]
    network: NetworkArgs,
    /// JSON file with `hyperparams`, `mcmc` and `vb` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent chains or optimizations [default: 32].
    #[arg(long)]
    restarts: Option<usize>,
    /// MCMC sweeps, or the VB sweep cap.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Relative ELBO tolerance for VB.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of communities.
    #[arg(long)]
    k: Option<usize>,
    /// Maximum number of supercommunities.
    #[arg(long)]
    r: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Written to `best.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BestRun {
    pub engine: Engine,
    pub run: usize,
    pub dir: PathBuf,
    pub score: f64,
    pub completed: usize,
    pub failed: usize,
}

pub fn run_dir(run: usize) -> PathBuf {
    PathBuf::from("runs").join(format!("run_{run:03}"))
}

fn apply_overrides(cfg: &mut FitConfig, a: &FitArgs) {
    if let Some(n) = a.restarts {
        cfg.mcmc.restarts = n;
        cfg.vb.restarts = n;
    }
    if let Some(s) = a.seed {
        cfg.mcmc.seed = s;
        cfg.vb.seed = s;
    }
    if let Some(k) = a.k {
        cfg.hyperparams.k = k;
    }
    if let Some(r) = a.r {
        cfg.hyperparams.r = r;
    }
    if let Some(n) = a.iters {
        cfg.mcmc.iterations = n;
        cfg.vb.max_sweeps = n;
        if a.burnin.is_none() && cfg.mcmc.burn_in >= n {
            cfg.mcmc.burn_in = n / 2;
        }
    }
    if let Some(b) = a.burnin {
        cfg.mcmc.burn_in = b;
    }
    if let Some(t) = a.thin {
        cfg.mcmc.thin = t;
    }
    if let Some(t) = a.tol {
        cfg.vb.tol = t;
    }
}

pub fn run(a: FitArgs) -> Result<()> {
    let mut cfg = FitConfig::load(a.config.as_deref())?;
    apply_overrides(&mut cfg, &a);
    let net = Network::load(&a.network.network, a.network.format.into())
        .with_context(|| format!("loading {}", a.network.network.display()))?;
    cfg.hyperparams
        .validate_for(net.vertex_count())
        .map_err(|e| usage(e.to_string()))?;
    let (restarts, seed) = match a.engine {
        Engine::Mcmc => {
            cfg.mcmc.validate().map_err(|e| usage(e.to_string()))?;
            (cfg.mcmc.restarts, cfg.mcmc.seed)
        }
        Engine::Vb => {
            cfg.vb.validate().map_err(|e| usage(e.to_string()))?;
            (cfg.vb.restarts, cfg.vb.seed)
        }
    };
    let snapshot = serde_json::json!({ "engine": a.engine, "format": hsbm::NetworkFormat::from(a.network.format), "config": cfg });
    let out = OutputDir::open(&a.out, "fit", snapshot, seed, &[&a.network.network])?;
    if out.resumed {
        log::info!(
            "{} has matching outputs; finished chains are reused and checkpoints resumed",
            out.path.display()
        );
    }
    write(
        &out.file("config.json"),
        serde_json::to_string_pretty(&cfg)? + "\n",
    )?;
    log::info!(
        "{} vertices, {} edges; {} {} runs with K = {}, R = {}",
        net.vertex_count(),
        net.edge_count(),
        restarts,
        match a.engine {
            Engine::Mcmc => "MCMC",
            Engine::Vb => "VB",
        },
        cfg.hyperparams.k,
        cfg.hyperparams.r
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()?;
    pool.install(|| match a.engine {
        Engine::Mcmc => fit_mcmc(&net, &cfg, &out),
        Engine::Vb => fit_vb(&net, &cfg, &out),
    })?;
    out.finish()
}

/// Keeps the successful runs, writes `runs.csv`, and fails only if every run did.
fn collect<T>(
    results: Vec<hsbm::Result<T>>,
    score: impl Fn(&T) -> Vec<f64>,
    header: &str,
    out: &OutputDir,
) -> Result<Vec<(usize, T)>> {
    let mut csv = format!("run,status,{header},error\n");
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => {
                let cols: Vec<String> = score(&t).iter().map(f64::to_string).collect();
                csv.push_str(&format!("{i},ok,{},\n", cols.join(",")));
                ok.push((i, t));
            }
            Err(e) => {
                log::warn!("run {i} failed: {e}");
                let blanks = ",".repeat(header.matches(',').count());
                csv.push_str(&format!(
                    "{i},failed,{blanks},\"{}\"\n",
                    e.to_string().replace('"', "'")
                ));
                errors.push(e);
            }
        }
    }
    write(&out.file("runs.csv"), csv)?;
    if ok.is_empty() {
        if errors.iter().any(hsbm::Error::is_numerical) {
            return Err(
                NumericalFailure(format!("all {} runs failed numerically", errors.len())).into(),
            );
        }
        if let Some(e) = errors.into_iter().next() {
            return Err(e.into());
        }
    }
    Ok(ok)
}

fn write_best(out: &OutputDir, best: &BestRun) -> Result<()> {
    log::info!(
        "best run {} (score {:.3}), {} completed, {} failed",
        best.run,
        best.score,
        best.completed,
        best.failed
    );
    write(
        &out.file("best.json"),
        serde_json::to_string_pretty(best)? + "\n",
    )
}

fn fit_mcmc(net: &Network, cfg: &FitConfig, out: &OutputDir) -> Result<()> {
    let c = &cfg.mcmc;
    let results: Vec<hsbm::Result<Trace>> = (0..c.restarts)
        .into_par_iter()
        .map(|i| {
            let r = run_chain_persisted(
                net,
                &cfg.hyperparams,
                c,
                i as u64,
                &out.path.join(run_dir(i)),
            );
            if let Ok(t) = &r {
                log::info!(
                    "chain {i} done: mean log-likelihood {:.2}",
                    t.mean_log_likelihood()
                );
            }
            r
        })
        .collect();
    let total = results.len();
    let ok = collect(
        results,
        |t| vec![t.mean_log_likelihood(), t.mean_log_joint()],
        "mean_log_likelihood,mean_log_joint",
        out,
    )?;
    let traces: Vec<Trace> = ok.iter().map(|(_, t)| t.clone()).collect();
    let pick = select_best_run(&traces, c.selection)
        .ok_or_else(|| NumericalFailure("no run produced a usable trace".into()))?;
    let (run, trace) = &ok[pick];
    write_best(
        out,
        &BestRun {
            engine: Engine::Mcmc,
            run: *run,
            dir: run_dir(*run),
            score: c.selection.of(trace),
            completed: ok.len(),
            failed: total - ok.len(),
        },
    )?;
    for level in [Level::Community, Level::Supercommunity] {
        write_summary(&out.path, &comembership_mcmc(trace, level)?)?;
    }
    Ok(())
}

fn fit_vb(net: &Network, cfg: &FitConfig, out: &OutputDir) -> Result<()> {
    let c = &cfg.vb;
    let results: Vec<hsbm::Result<VbRun>> = (0..c.restarts)
        .into_par_iter()
        .map(|i| {
            let r = run_vb(net, &cfg.hyperparams, c, i as u64)?;
            persist_vb(&out.path.join(run_dir(i)), &r)?;
            log::info!(
                "run {i} done: ELBO {:.3} after {} sweeps",
                r.final_elbo(),
                r.history.len()
            );
            Ok(r)
        })
        .collect();
    let total = results.len();
    let ok = collect(
        results,
        |r| vec![r.final_elbo(), r.history.len() as f64],
        "final_elbo,sweeps",
        out,
    )?;
    let runs: Vec<VbRun> = ok.iter().map(|(_, r)| r.clone()).collect();
    let pick = select_best_vb(&runs)
        .ok_or_else(|| NumericalFailure("no run produced a finite ELBO".into()))?;
    let (run, best) = &ok[pick];
    write_best(
        out,
        &BestRun {
            engine: Engine::Vb,
            run: *run,
            dir: run_dir(*run),
            score: best.final_elbo(),
            completed: ok.len(),
            failed: total - ok.len(),
        },
    )?;
    best.write_history_csv(&out.file("elbo.csv"))?;
    for level in [Level::Community, Level::Supercommunity] {
        write_summary(&out.path, &comembership_vb(&best.state, level))?;
    }
    Ok(())
}

fn persist_vb(dir: &Path, run: &VbRun) -> hsbm::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| hsbm::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    run.state.save(&dir.join("state.json"))?;
    run.write_history_csv(&dir.join("elbo.csv"))?;
    let flags = serde_json::json!({ "converged": run.converged, "diverged": run.diverged, "final_elbo": run.final_elbo() });
    let p = dir.join("status.json");
    std::fs::write(&p, flags.to_string() + "\n").map_err(|e| hsbm::Error::Io { path: p, source: e })
}
