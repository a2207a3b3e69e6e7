//! Prior analytics for the number of occupied communities `K*` and
//! supercommunities `R*`: closed forms and Monte Carlo CDFs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, sample_dirichlet_log, stream_rng, trigamma};

/// `E[K* | α]` for `I` vertices under the Dirichlet-process limit, and the
/// large-`I` approximation `α log((α + I)/α)`.
pub fn expected_k_star(alpha: f64, vertices: usize) -> (f64, f64) {
    let n = vertices as f64;
    let exact = alpha * (digamma(alpha + n) - digamma(alpha));
    (exact, alpha * ((alpha + n) / alpha).ln())
}

/// `Var[K* | α]` under the Dirichlet-process limit, with the same
/// approximation as [`expected_k_star`].
pub fn var_k_star(alpha: f64, vertices: usize) -> (f64, f64) {
    let n = vertices as f64;
    let exact = alpha * (digamma(alpha + n) - digamma(alpha))
        + alpha * alpha * (trigamma(alpha + n) - trigamma(alpha));
    (exact, alpha * ((alpha + n) / alpha).ln())
}

/// Second-order approximation of `E[R* | α, β]`.
pub fn expected_r_star(alpha: f64, beta: f64, vertices: usize) -> f64 {
    let l = alpha * ((alpha + vertices as f64) / alpha).ln();
    beta * ((beta + l) / beta).ln() - beta * l / (2.0 * (beta + l).powi(2))
}

/// Exact `E[K*]` for a finite symmetric `Dir(α/K)` over `K` components:
/// `K · (1 − Pr(n_k = 0))` with `w_k ~ Beta(α/K, α − α/K)`.
pub fn expected_occupied_finite(conc: f64, components: usize, draws: usize) -> f64 {
    if components == 1 {
        return if draws > 0 { 1.0 } else { 0.0 };
    }
    let k = components as f64;
    let a = conc / k;
    let b = conc - a;
    let n = draws as f64;
    let log_empty = ln_gamma(conc) + ln_gamma(b + n) - ln_gamma(b) - ln_gamma(conc + n);
    k * (1.0 - log_empty.exp())
}

/// Empirical CDF of an occupied-component count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCdf {
    /// Support values `1..=max`.
    pub support: Vec<usize>,
    pub cdf: Vec<f64>,
    pub replicates: usize,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
}

impl PriorCdf {
    fn from_counts(counts: &[usize], max: usize) -> Self {
        let n = counts.len();
        let mut hist = vec![0usize; max + 1];
        for &c in counts {
            hist[c.min(max)] += 1;
        }
        let mut acc = hist[0];
        let mut cdf = Vec::with_capacity(max);
        for h in &hist[1..] {
            acc += h;
            cdf.push(acc as f64 / n as f64);
        }
        let mean = counts.iter().sum::<usize>() as f64 / n as f64;
        let var = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        Self {
            support: (1..=max).collect(),
            cdf,
            replicates: n,
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    /// `value,cdf` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,cdf\n");
        for (v, c) in self.support.iter().zip(&self.cdf) {
            out.push_str(&format!("{v},{c}\n"));
        }
        out
    }
}

/// Settings for [`simulate_prior_counts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSim {
    pub alpha: f64,
    pub k: usize,
    pub vertices: usize,
    /// `(β, R)` to also count occupied supercommunities.
    pub level2: Option<(f64, usize)>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCounts {
    pub k_star: PriorCdf,
    pub r_star: Option<PriorCdf>,
    /// Per-replicate `E[R* | K*]` under the finite prior, averaged; a
    /// lower-variance estimate of `E[R*]`.
    pub r_star_conditional_mean: Option<f64>,
}

const CHUNK: usize = 1_000;

/// Draw `w ~ Dir(α/K)`, `ξ_i ~ Cat(w)` and count occupied communities;
/// optionally draw `v ~ Dir(β/R)` and labels for the occupied communities
/// only, counting occupied supercommunities.
pub fn simulate_prior_counts(sim: &PriorSim) -> Result<PriorCounts> {
    if !(sim.alpha > 0.0) || sim.k == 0 || sim.vertices == 0 || sim.replicates == 0 {
        return Err(Error::InvalidConfig(
            "prior simulation needs α > 0 and positive K, I and replicate count".into(),
        ));
    }
    if let Some((beta, r)) = sim.level2 {
        if !(beta > 0.0) || r == 0 {
            return Err(Error::InvalidConfig(
                "prior simulation needs β > 0 and R ≥ 1".into(),
            ));
        }
    }
    let chunks = sim.replicates.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<(usize, usize, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(sim.seed, c as u64);
            let reps = CHUNK.min(sim.replicates - c * CHUNK);
            (0..reps).map(|_| one_replicate(sim, &mut rng)).collect()
        })
        .collect();
    let all: Vec<(usize, usize, f64)> = per_chunk.into_iter().flatten().collect();
    let ks: Vec<usize> = all.iter().map(|x| x.0).collect();
    let k_star = PriorCdf::from_counts(&ks, sim.k);
    let (r_star, r_cond) = match sim.level2 {
        Some((_, r)) => {
            let rs: Vec<usize> = all.iter().map(|x| x.1).collect();
            let cond = all.iter().map(|x| x.2).sum::<f64>() / all.len() as f64;
            (Some(PriorCdf::from_counts(&rs, r)), Some(cond))
        }
        None => (None, None),
    };
    Ok(PriorCounts {
        k_star,
        r_star,
        r_star_conditional_mean: r_cond,
    })
}

fn occupied<R: Rng + ?Sized>(conc: f64, dim: usize, draws: usize, rng: &mut R) -> usize {
    let log_w = sample_dirichlet_log(&vec![conc / dim as f64; dim], rng);
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cum = Vec::with_capacity(dim);
    let mut acc = 0.0;
    for l in &log_w {
        acc += (l - top).exp();
        cum.push(acc);
    }
    let mut seen = vec![false; dim];
    let mut count = 0;
    for _ in 0..draws {
        let u = rng.random::<f64>() * acc;
        let j = cum.partition_point(|&c| c <= u).min(dim - 1);
        if !seen[j] {
            seen[j] = true;
            count += 1;
        }
    }
    count
}

fn one_replicate<R: Rng + ?Sized>(sim: &PriorSim, rng: &mut R) -> (usize, usize, f64) {
    let k_star = occupied(sim.alpha, sim.k, sim.vertices, rng);
    match sim.level2 {
        Some((beta, r)) => {
            let r_star = occupied(beta, r, k_star, rng);
            (k_star, r_star, expected_occupied_finite(beta, r, k_star))
        }
        None => (k_star, 0, 0.0),
    }
}

/// One row of the analytic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRow {
    pub alpha: f64,
    pub beta: f64,
    pub vertices: usize,
    pub expected_k_exact: f64,
    pub expected_k_approx: f64,
    pub var_k_exact: f64,
    pub var_k_approx: f64,
    pub expected_r_approx: f64,
}

pub fn analytic_row(alpha: f64, beta: f64, vertices: usize) -> AnalyticRow {
    let (ek, eka) = expected_k_star(alpha, vertices);
    let (vk, vka) = var_k_star(alpha, vertices);
    AnalyticRow {
        alpha,
        beta,
        vertices,
        expected_k_exact: ek,
        expected_k_approx: eka,
        var_k_exact: vk,
        var_k_approx: vka,
        expected_r_approx: expected_r_star(alpha, beta, vertices),
    }
}

pub const ANALYTIC_HEADER: &str =
    "alpha,beta,vertices,expected_k_exact,expected_k_approx,var_k_exact,var_k_approx,expected_r_approx";

impl AnalyticRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.alpha,
            self.beta,
            self.vertices,
            self.expected_k_exact,
            self.expected_k_approx,
            self.var_k_exact,
            self.var_k_approx,
            self.expected_r_approx
        )
    }
}
