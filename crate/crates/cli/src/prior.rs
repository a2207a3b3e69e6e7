use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use hsbm::prior_diag::{analytic_row, simulate_prior_counts, PriorSim, ANALYTIC_HEADER};
use rayon::prelude::*;

use crate::manifest::OutputDir;
use crate::output::write;
use crate::usage;

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Community-level concentrations.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    alphas: Vec<f64>,
    /// Supercommunity-level concentrations.
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    betas: Vec<f64>,
    /// Skip the supercommunity level.
    #[arg(long)]
    single_level: bool,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    r: usize,
    #[arg(long, default_value_t = 100)]
    vertices: usize,
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

fn sim_seed(base: u64, job: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(job as u64)
}

pub fn run(mut a: PriorArgs) -> Result<()> {
    if a.single_level {
        a.betas.clear();
    }
    if a.alphas.is_empty()
        || a.alphas
            .iter()
            .chain(&a.betas)
            .any(|c| !(*c > 0.0 && c.is_finite()))
    {
        return Err(usage("concentrations must be positive and finite"));
    }
    if a.k == 0 || a.r == 0 || a.vertices == 0 || a.replicates == 0 {
        return Err(usage("k, r, vertices and replicates must be positive"));
    }
    let config = serde_json::json!({
        "alphas": a.alphas, "betas": a.betas, "k": a.k, "r": a.r,
        "vertices": a.vertices, "replicates": a.replicates, "seed": a.seed,
    });
    let out = OutputDir::open(&a.out, "prior-diag", config, a.seed, &[])?;

    // one level-one job per α, then one two-level job per (α, β)
    let mut jobs: Vec<(f64, Option<f64>)> = a.alphas.iter().map(|&al| (al, None)).collect();
    for &al in &a.alphas {
        jobs.extend(a.betas.iter().map(|&b| (al, Some(b))));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()?;
    let results = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(j, &(alpha, beta))| {
                simulate_prior_counts(&PriorSim {
                    alpha,
                    k: a.k,
                    vertices: a.vertices,
                    level2: beta.map(|b| (b, a.r)),
                    replicates: a.replicates,
                    seed: sim_seed(a.seed, j),
                })
            })
            .collect::<hsbm::Result<Vec<_>>>()
    })?;

    let mut mc =
        String::from("alpha,beta,k_mean,k_std_error,r_mean,r_std_error,r_conditional_mean\n");
    for ((alpha, beta), counts) in jobs.iter().zip(&results) {
        match beta {
            None => {
                write(
                    &out.file(&format!("k_star_alpha_{alpha}.csv")),
                    counts.k_star.to_csv(),
                )?;
                mc.push_str(&format!(
                    "{alpha},,{},{},,,\n",
                    counts.k_star.mean, counts.k_star.std_error
                ));
            }
            Some(beta) => {
                let r = counts
                    .r_star
                    .as_ref()
                    .expect("two-level simulation counts R*");
                write(
                    &out.file(&format!("r_star_alpha_{alpha}_beta_{beta}.csv")),
                    r.to_csv(),
                )?;
                mc.push_str(&format!(
                    "{alpha},{beta},{},{},{},{},{}\n",
                    counts.k_star.mean,
                    counts.k_star.std_error,
                    r.mean,
                    r.std_error,
                    counts.r_star_conditional_mean.unwrap_or(f64::NAN)
                ));
            }
        }
    }
    write(&out.file("monte_carlo.csv"), mc)?;

    let mut table = format!("{ANALYTIC_HEADER}\n");
    let betas: Vec<f64> = if a.betas.is_empty() {
        vec![f64::NAN]
    } else {
        a.betas.clone()
    };
    for &alpha in &a.alphas {
        for &beta in &betas {
            table.push_str(&analytic_row(alpha, beta, a.vertices).to_csv_row());
            table.push('\n');
        }
    }
    write(&out.file("analytic.csv"), table)?;
    log::info!(
        "{} prior simulations written to {}",
        jobs.len(),
        out.path.display()
    );
    out.finish()
}
