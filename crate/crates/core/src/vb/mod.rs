//! Mean-field variational Bayes with the Jaakkola–Jordan bound on the
//! logistic likelihood.
//!
//! One sweep updates, in order: logits and auxiliaries, community
//! responsibilities, σ², supercommunity logits, supercommunity
//! responsibilities, μ, τ², w, v, α, β.

mod elbo;
mod updates;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::network::Network;
use crate::special::{logit, sample_normal, stream_rng};
use crate::spectral::{detected_group_count, spectral_partition_fixed};
use crate::tri::TriMatrix;

pub use elbo::{compute_elbo, ElboTerms};
pub use updates::*;

/// Variational parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbState {
    /// Means of `q(θ_kl)`.
    pub mean: TriMatrix<f64>,
    /// Variances of `q(θ_kl)`.
    pub var: TriMatrix<f64>,
    /// Jaakkola–Jordan auxiliaries, one per block pair.
    pub aux: TriMatrix<f64>,
    /// `q(ξ_i = k)`, one row per vertex.
    pub resp: Vec<Vec<f64>>,
    /// `q(ζ_k = r)`, one row per community.
    pub super_resp: Vec<Vec<f64>>,
    /// Dirichlet parameters of `q(w)`.
    pub w_conc: Vec<f64>,
    /// Dirichlet parameters of `q(v)`.
    pub v_conc: Vec<f64>,
    pub eta_mean: TriMatrix<f64>,
    pub eta_var: TriMatrix<f64>,
    pub mu_mean: f64,
    pub mu_var: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub tau2_shape: f64,
    pub tau2_scale: f64,
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub beta_shape: f64,
    pub beta_rate: f64,
    /// Set once a concentration rate has been floored.
    #[serde(default)]
    pub rate_clamped: bool,
}

impl VbState {
    pub fn k(&self) -> usize {
        self.mean.dim()
    }

    pub fn r(&self) -> usize {
        self.eta_mean.dim()
    }

    /// Uniform responsibilities, zero logit means, and every other factor
    /// at prior scale.
    pub fn flat(hp: &Hyperparams, vertices: usize) -> Self {
        let (k, r) = (hp.k, hp.r);
        let sigma2_shape = hp.sigma2_shape + (k * (k + 1)) as f64 / 4.0;
        let sigma2_scale = sigma2_shape * hp.sigma2_rate / hp.sigma2_shape;
        let var = hp.sigma2_rate / hp.sigma2_shape;
        let tau2_shape = hp.tau2_shape + (r * (r + 1)) as f64 / 4.0;
        let tau2_scale = tau2_shape * hp.tau2_rate / hp.tau2_shape;
        let e_alpha = hp.alpha_shape / hp.alpha_rate;
        let e_beta = hp.beta_shape / hp.beta_rate;
        Self {
            mean: TriMatrix::filled(k, 0.0),
            var: TriMatrix::filled(k, var),
            aux: TriMatrix::filled(k, var.sqrt()),
            resp: vec![vec![1.0 / k as f64; k]; vertices],
            super_resp: vec![vec![1.0 / r as f64; r]; k],
            w_conc: vec![(e_alpha + vertices as f64) / k as f64; k],
            v_conc: vec![(e_beta + k as f64) / r as f64; r],
            eta_mean: TriMatrix::filled(r, hp.mu_mean),
            eta_var: TriMatrix::filled(r, tau2_scale / tau2_shape),
            mu_mean: hp.mu_mean,
            mu_var: hp.mu_variance,
            sigma2_shape,
            sigma2_scale,
            tau2_shape,
            tau2_scale,
            alpha_shape: hp.alpha_shape,
            alpha_rate: hp.alpha_rate,
            beta_shape: hp.beta_shape,
            beta_rate: hp.beta_rate,
            rate_clamped: false,
        }
    }

    /// Random starting point: responsibilities are a softmax of a sharpened
    /// one-hot start plus Gaussian jitter, supercommunity responsibilities
    /// uniform plus jitter, logit means from smoothed soft block densities.
    pub fn initialize<R: Rng + ?Sized>(
        net: &Network,
        hp: &Hyperparams,
        cfg: &VbConfig,
        rng: &mut R,
    ) -> Result<Self> {
        hp.validate_for(net.vertex_count())?;
        let n = net.vertex_count();
        let (k, r) = (hp.k, hp.r);
        let labels: Vec<usize> = match cfg.init {
            VbInit::Spectral => {
                let groups = (detected_group_count(net, k) * cfg.overcluster).min(k);
                spectral_partition_fixed(net, groups, rng)
            }
            VbInit::Random => (0..n).map(|_| rng.random_range(0..k)).collect(),
        };
        let mut vb = Self::flat(hp, n);
        let jittered_softmax = |hot: Option<usize>, dim: usize, sharp: f64, rng: &mut R| {
            let scores: Vec<f64> = (0..dim)
                .map(|c| {
                    let base = if Some(c) == hot { sharp } else { 0.0 };
                    base + sample_normal(0.0, cfg.jitter * cfg.jitter, rng)
                })
                .collect();
            let lse = crate::special::log_sum_exp(&scores);
            scores.iter().map(|s| (s - lse).exp()).collect::<Vec<f64>>()
        };
        vb.resp = labels
            .iter()
            .map(|&l| jittered_softmax(Some(l), k, cfg.sharpness, rng))
            .collect();
        vb.super_resp = (0..k)
            .map(|_| jittered_softmax(None, r, 0.0, rng))
            .collect();
        let counts = soft_counts(net, &vb.resp);
        vb.mean = TriMatrix::from_fn(k, |a, b| {
            logit((counts.edges.at(a, b) + 0.5) / (counts.dyads.at(a, b) + 1.0))
        });
        vb.aux = TriMatrix::from_fn(k, |a, b| {
            (vb.var.at(a, b) + vb.mean.at(a, b).powi(2)).sqrt()
        });
        let mean_logit = vb.mean.as_slice().iter().sum::<f64>() / vb.mean.as_slice().len() as f64;
        vb.mu_mean = mean_logit;
        vb.eta_mean = TriMatrix::filled(r, mean_logit);
        update_weights_concentrations(&mut vb, hp);
        Ok(vb)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Most probable community of each vertex.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.resp.iter().map(|row| argmax(row)).collect()
    }

    /// Most probable supercommunity of each community.
    pub fn hard_super_labels(&self) -> Vec<usize> {
        self.super_resp.iter().map(|row| argmax(row)).collect()
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
            if p > best.1 {
                (i, p)
            } else {
                best
            }
        })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VbInit {
    #[default]
    Spectral,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VbConfig {
    pub max_sweeps: usize,
    /// Stop when the relative ELBO change falls below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub init: VbInit,
    /// The spectral start uses this many times the detected group count,
    /// capped at the truncation level. Merging surplus groups is easy for
    /// coordinate ascent; splitting a merged one is not.
    pub overcluster: usize,
    /// Height of the one-hot bump in the initial responsibilities.
    pub sharpness: f64,
    /// Standard deviation of the jitter added to initial log-responsibilities.
    pub jitter: f64,
    pub softplus: SoftplusExpectation,
    /// Update all vertex responsibilities from the previous sweep's values.
    pub batch_xi: bool,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 1_000,
            tol: 1e-8,
            restarts: 32,
            seed: 1,
            init: VbInit::Spectral,
            overcluster: 10,
            sharpness: 6.0,
            jitter: 1.0,
            softplus: SoftplusExpectation::Bound,
            batch_xi: false,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig(
                "restart count must be at least 1".into(),
            ));
        }
        if !(self.jitter >= 0.0) || !self.sharpness.is_finite() {
            return Err(Error::InvalidConfig(
                "jitter and sharpness must be finite, jitter ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// One sweep of coordinate updates.
pub fn sweep(vb: &mut VbState, net: &Network, hp: &Hyperparams, cfg: &VbConfig) {
    update_theta(vb, net);
    update_xi(vb, net, cfg.softplus, cfg.batch_xi);
    update_sigma2(vb, hp);
    update_eta(vb);
    update_zeta(vb);
    update_mu(vb, hp);
    update_tau2(vb, hp);
    update_w(vb);
    update_v(vb);
    update_alpha(vb, hp);
    update_beta(vb, hp);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboRecord {
    pub sweep: usize,
    pub elapsed_seconds: f64,
    pub elbo: f64,
    pub terms: ElboTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbRun {
    pub state: VbState,
    pub history: Vec<ElboRecord>,
    pub converged: bool,
    /// The bound fell by more than the tolerance on three consecutive sweeps.
    pub diverged: bool,
}

impl VbRun {
    pub fn final_elbo(&self) -> f64 {
        self.history.last().map_or(f64::NEG_INFINITY, |h| h.elbo)
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("sweep,elapsed_seconds,elbo");
        for (name, _) in ElboTerms::default().components() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for h in &self.history {
            let _ = write!(out, "{},{},{}", h.sweep, h.elapsed_seconds, h.elbo);
            for (_, v) in h.terms.components() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Run coordinate ascent from a fresh start on RNG stream `stream`.
pub fn run_vb(net: &Network, hp: &Hyperparams, cfg: &VbConfig, stream: u64) -> Result<VbRun> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, stream);
    let state = VbState::initialize(net, hp, cfg, &mut rng)?;
    run_vb_from(net, hp, cfg, state)
}

/// Run coordinate ascent from a given state.
pub fn run_vb_from(
    net: &Network,
    hp: &Hyperparams,
    cfg: &VbConfig,
    mut vb: VbState,
) -> Result<VbRun> {
    let start = Instant::now();
    let mut history: Vec<ElboRecord> = Vec::new();
    let (mut converged, mut diverged) = (false, false);
    let mut falling = 0;
    for s in 1..=cfg.max_sweeps {
        sweep(&mut vb, net, hp, cfg);
        let terms = compute_elbo(&vb, net, hp)?;
        let elbo = terms.total();
        let prev = history.last().map(|h| h.elbo);
        history.push(ElboRecord {
            sweep: s,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            elbo,
            terms,
        });
        let Some(prev) = prev else { continue };
        let rel = (elbo - prev) / prev.abs();
        if rel < -cfg.tol {
            log::debug!("ELBO fell by {:.3e} (relative) at sweep {s}", -rel);
            falling += 1;
            if falling >= 3 {
                log::warn!("ELBO fell on three consecutive sweeps; stopping at sweep {s}");
                diverged = true;
                break;
            }
        } else {
            falling = 0;
        }
        if rel.abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(VbRun {
        state: vb,
        history,
        converged,
        diverged,
    })
}

/// `cfg.restarts` independent runs in parallel on streams `0..restarts`.
pub fn run_vb_restarts(net: &Network, hp: &Hyperparams, cfg: &VbConfig) -> Vec<Result<VbRun>> {
    (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|s| run_vb(net, hp, cfg, s))
        .collect()
}

/// Index of the run with the largest final ELBO; ties go to the lowest index.
pub fn select_best_vb(runs: &[VbRun]) -> Option<usize> {
    crate::mcmc::best_index(runs.iter().map(VbRun::final_elbo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GenerativeSpec;

    fn two_level_net() -> (Network, Vec<usize>) {
        let spec = GenerativeSpec {
            sizes: vec![10, 10, 10],
            zeta: vec![0, 0, 1],
            eta: TriMatrix::from_fn(2, |a, b| if a == b { 1.0 } else { -2.5 }),
            sigma: 0.0,
            theta: Some(TriMatrix::from_fn(3, |a, b| {
                if a == b {
                    2.0
                } else if b < 2 {
                    0.0
                } else {
                    -3.0
                }
            })),
        };
        let g = spec.generate(&mut stream_rng(9, 0)).unwrap();
        (g.network, g.xi)
    }

    #[test]
    fn elbo_is_monotone_and_invariants_hold() {
        let (net, _) = two_level_net();
        let hp = Hyperparams::with_sizes(6, 2);
        let cfg = VbConfig {
            max_sweeps: 200,
            ..VbConfig::default()
        };
        for stream in 0..3 {
            let run = run_vb(&net, &hp, &cfg, stream).unwrap();
            for pair in run.history.windows(2) {
                let (a, b) = (pair[0].elbo, pair[1].elbo);
                assert!(b >= a - 1e-6 * a.abs(), "stream {stream}: {a} -> {b}");
            }
            let vb = &run.state;
            for row in vb.resp.iter().chain(&vb.super_resp) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            for ((m, v), g) in vb
                .mean
                .as_slice()
                .iter()
                .zip(vb.var.as_slice())
                .zip(vb.aux.as_slice())
            {
                assert!(*v > 0.0 && *g > 0.0);
                assert!((g * g - (v + m * m)).abs() <= 1e-12 * (v + m * m));
            }
            assert!(!run.diverged);
        }
    }

    #[test]
    fn identical_seed_identical_history() {
        let (net, _) = two_level_net();
        let hp = Hyperparams::with_sizes(5, 2);
        let cfg = VbConfig {
            max_sweeps: 30,
            ..VbConfig::default()
        };
        let a = run_vb(&net, &hp, &cfg, 4).unwrap();
        let b = run_vb(&net, &hp, &cfg, 4).unwrap();
        let ea: Vec<f64> = a.history.iter().map(|h| h.elbo).collect();
        let eb: Vec<f64> = b.history.iter().map(|h| h.elbo).collect();
        assert_eq!(ea, eb);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn recovers_clear_communities() {
        let (net, truth) = two_level_net();
        let hp = Hyperparams::with_sizes(6, 2);
        let cfg = VbConfig {
            restarts: 4,
            max_sweeps: 300,
            ..VbConfig::default()
        };
        let runs: Vec<VbRun> = run_vb_restarts(&net, &hp, &cfg)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        let best = &runs[select_best_vb(&runs).unwrap()];
        let labels = best.state.hard_labels();
        for i in 0..truth.len() {
            for j in 0..truth.len() {
                assert_eq!(
                    truth[i] == truth[j],
                    labels[i] == labels[j],
                    "pair ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let (net, _) = two_level_net();
        let hp = Hyperparams::with_sizes(4, 2);
        let cfg = VbConfig {
            max_sweeps: 5,
            ..VbConfig::default()
        };
        let run = run_vb(&net, &hp, &cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vb.json");
        run.state.save(&p).unwrap();
        assert_eq!(VbState::load(&p).unwrap(), run.state);
        let csv = dir.path().join("elbo.csv");
        run.write_history_csv(&csv).unwrap();
        let text = std::fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().count(), run.history.len() + 1);
        assert!(text.starts_with("sweep,elapsed_seconds,elbo,likelihood"));
    }

    #[test]
    fn config_validation() {
        assert!(VbConfig::default().validate().is_ok());
        let bad = VbConfig {
            tol: 0.0,
            ..VbConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
