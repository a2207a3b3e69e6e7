//! Parameter containers, hyperparameters, and exact log-densities of the
//! two-level blockmodel.
//!
//! Generative process, with `φ(a, b) = (min, max)`:
//!
//! ```text
//! y_ij | ξ, Θ   ~ Bernoulli(sigmoid θ_{φ(ξ_i, ξ_j)})
//! θ_kl | ζ, H   ~ N(η_{φ(ζ_k, ζ_l)}, σ²)
//! η_rs | μ, τ²  ~ N(μ, τ²)
//! ξ_i  | w      ~ Cat(w),   w ~ Dir(α/K, …),   α ~ G(α_α, β_α)
//! ζ_k  | v      ~ Cat(v),   v ~ Dir(β/R, …),   β ~ G(α_β, β_β)
//! μ ~ N(μ_μ, σ²_μ),   σ² ~ IG(α_σ, β_σ),   τ² ~ IG(α_τ, β_τ)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BlockStats, Network};
use crate::special::{
    ln_gamma, sample_categorical_log, sample_dirichlet_log, sample_gamma, sample_inverse_gamma,
    sample_normal, sigmoid, softplus,
};
use crate::tri::TriMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Fixed prior constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Maximum number of communities.
    pub k: usize,
    /// Maximum number of supercommunities.
    pub r: usize,
    pub mu_mean: f64,
    pub mu_variance: f64,
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
    pub tau2_shape: f64,
    pub tau2_rate: f64,
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub beta_shape: f64,
    pub beta_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 20,
            r: 2,
            mu_mean: 0.0,
            mu_variance: 4.0,
            sigma2_shape: 2.0,
            sigma2_rate: 2.0,
            tau2_shape: 2.0,
            tau2_rate: 2.0,
            alpha_shape: 1.0,
            alpha_rate: 1.0,
            beta_shape: 1.0,
            beta_rate: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn with_sizes(k: usize, r: usize) -> Self {
        Self {
            k,
            r,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.r == 0 {
            return Err(Error::InvalidConfig("K and R must be at least 1".into()));
        }
        if self.r > self.k {
            return Err(Error::InvalidConfig(format!(
                "R = {} exceeds K = {}",
                self.r, self.k
            )));
        }
        let positive = [
            ("mu_variance", self.mu_variance),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("tau2_shape", self.tau2_shape),
            ("tau2_rate", self.tau2_rate),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("beta_shape", self.beta_shape),
            ("beta_rate", self.beta_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(Error::InvalidConfig("mu_mean must be finite".into()));
        }
        Ok(())
    }

    /// Also checks `K <= I`.
    pub fn validate_for(&self, vertices: usize) -> Result<()> {
        self.validate()?;
        if self.k > vertices.max(1) {
            return Err(Error::InvalidConfig(format!(
                "K = {} exceeds the number of vertices {vertices}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Full parameter set of the sampler, including the Pólya-Gamma auxiliaries.
///
/// Weights are kept on the log scale because `α/K` is often tiny and plain
/// Dirichlet draws underflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcState {
    pub theta: TriMatrix<f64>,
    pub xi: Vec<usize>,
    pub eta: TriMatrix<f64>,
    pub zeta: Vec<usize>,
    pub mu: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub log_w: Vec<f64>,
    pub log_v: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub pg: TriMatrix<f64>,
}

impl McmcState {
    pub fn k(&self) -> usize {
        self.log_w.len()
    }

    pub fn r(&self) -> usize {
        self.log_v.len()
    }

    /// Prior mean of `θ_kl`, i.e. `η_{φ(ζ_k, ζ_l)}`.
    #[inline]
    pub fn eta_for(&self, k: usize, l: usize) -> f64 {
        self.eta.at(self.zeta[k], self.zeta[l])
    }

    /// Number of communities assigned to each supercommunity (all K, occupied or not).
    pub fn super_sizes(&self) -> Vec<usize> {
        let mut m = vec![0; self.r()];
        for &z in &self.zeta {
            m[z] += 1;
        }
        m
    }

    /// `(m_rs, t_rs)`: number of block pairs mapped to `(r, s)` and the sum of their θ.
    pub fn super_pair_stats(&self) -> (TriMatrix<usize>, TriMatrix<f64>) {
        let r = self.r();
        let mut m = TriMatrix::new(r);
        let mut t = TriMatrix::new(r);
        for (k, l, &th) in self.theta.iter() {
            let (a, b) = (self.zeta[k], self.zeta[l]);
            *m.get_mut(a, b) += 1;
            *t.get_mut(a, b) += th;
        }
        (m, t)
    }

    /// Number of communities with at least one vertex.
    pub fn occupied_communities(&self) -> usize {
        let mut seen = vec![false; self.k()];
        for &x in &self.xi {
            seen[x] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Distinct supercommunities among occupied communities.
    pub fn occupied_supercommunities(&self) -> usize {
        let mut occ = vec![false; self.k()];
        for &x in &self.xi {
            occ[x] = true;
        }
        let mut seen = vec![false; self.r()];
        for (k, &o) in occ.iter().enumerate() {
            if o {
                seen[self.zeta[k]] = true;
            }
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Draw every parameter from the prior for a network with `vertices`
    /// vertices. Auxiliaries are set to zero.
    pub fn sample_prior<R: Rng + ?Sized>(hp: &Hyperparams, vertices: usize, rng: &mut R) -> Self {
        let (k, r) = (hp.k, hp.r);
        let alpha = sample_gamma(hp.alpha_shape, hp.alpha_rate, rng);
        let beta = sample_gamma(hp.beta_shape, hp.beta_rate, rng);
        let log_w = sample_dirichlet_log(&vec![alpha / k as f64; k], rng);
        let log_v = sample_dirichlet_log(&vec![beta / r as f64; r], rng);
        let xi = (0..vertices)
            .map(|_| sample_categorical_log(&log_w, rng).expect("normalized weights"))
            .collect();
        let zeta: Vec<usize> = (0..k)
            .map(|_| sample_categorical_log(&log_v, rng).expect("normalized weights"))
            .collect();
        let mu = sample_normal(hp.mu_mean, hp.mu_variance, rng);
        let sigma2 = sample_inverse_gamma(hp.sigma2_shape, hp.sigma2_rate, rng);
        let tau2 = sample_inverse_gamma(hp.tau2_shape, hp.tau2_rate, rng);
        let eta = TriMatrix::from_fn(r, |_, _| sample_normal(mu, tau2, rng));
        let theta = TriMatrix::from_fn(k, |a, b| {
            sample_normal(eta.at(zeta[a], zeta[b]), sigma2, rng)
        });
        Self {
            theta,
            xi,
            eta,
            zeta,
            mu,
            sigma2,
            tau2,
            log_w,
            log_v,
            alpha,
            beta,
            pg: TriMatrix::new(k),
        }
    }

    /// Draw a network from the likelihood given `(ξ, Θ)`.
    pub fn sample_network<R: Rng + ?Sized>(&self, rng: &mut R) -> Network {
        sample_network(&self.xi, &self.theta, rng)
    }
}

/// Independent Bernoulli edges with probability `sigmoid θ_{φ(ξ_i, ξ_j)}`.
pub fn sample_network<R: Rng + ?Sized>(
    xi: &[usize],
    theta: &TriMatrix<f64>,
    rng: &mut R,
) -> Network {
    let n = xi.len();
    let prob = theta.map(|&t| sigmoid(t));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < prob.at(xi[i], xi[j]) {
                edges.push((i, j));
            }
        }
    }
    Network::from_edges(n, edges).expect("generated edges are valid")
}

/// `Σ_{k≤l} s_kl θ_kl − n_kl log(1 + e^{θ_kl})`.
pub fn log_likelihood(stats: &BlockStats, theta: &TriMatrix<f64>) -> f64 {
    debug_assert_eq!(stats.block_count(), theta.dim());
    stats
        .edge_matrix()
        .as_slice()
        .iter()
        .zip(stats.dyad_matrix().as_slice())
        .zip(theta.as_slice())
        .filter(|((_, &n), _)| n > 0)
        .map(|((&s, &n), &t)| s as f64 * t - n as f64 * softplus(t))
        .sum()
}

/// Log of the symmetric Dirichlet(c, …, c) density at `exp(log_w)`.
pub fn log_dirichlet_symmetric(c: f64, log_w: &[f64]) -> f64 {
    let k = log_w.len() as f64;
    ln_gamma(k * c) - k * ln_gamma(c) + (c - 1.0) * log_w.iter().sum::<f64>()
}

pub fn log_normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (LN_2PI + variance.ln() + (x - mean).powi(2) / variance)
}

pub fn log_inverse_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Components of the log joint density (auxiliaries marginalised).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogJoint {
    pub likelihood: f64,
    pub theta: f64,
    pub eta: f64,
    pub xi: f64,
    pub zeta: f64,
    pub w: f64,
    pub v: f64,
    pub mu: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LogJoint {
    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, v)| v).sum()
    }

    pub fn prior(&self) -> f64 {
        self.total() - self.likelihood
    }

    pub fn components(&self) -> [(&'static str, f64); 12] {
        [
            ("likelihood", self.likelihood),
            ("theta", self.theta),
            ("eta", self.eta),
            ("xi", self.xi),
            ("zeta", self.zeta),
            ("w", self.w),
            ("v", self.v),
            ("mu", self.mu),
            ("sigma2", self.sigma2),
            ("tau2", self.tau2),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ]
    }
}

/// Exact log joint density of `(Y, Υ)` with all normalising constants.
pub fn log_joint(state: &McmcState, stats: &BlockStats, hp: &Hyperparams) -> Result<LogJoint> {
    let (k, r) = (state.k() as f64, state.r() as f64);
    let theta = state
        .theta
        .iter()
        .map(|(a, b, &t)| log_normal_density(t, state.eta_for(a, b), state.sigma2))
        .sum();
    let eta = state
        .eta
        .as_slice()
        .iter()
        .map(|&e| log_normal_density(e, state.mu, state.tau2))
        .sum();
    let xi = state.xi.iter().map(|&x| state.log_w[x]).sum();
    let zeta = state.zeta.iter().map(|&z| state.log_v[z]).sum();
    let out = LogJoint {
        likelihood: log_likelihood(stats, &state.theta),
        theta,
        eta,
        xi,
        zeta,
        w: log_dirichlet_symmetric(state.alpha / k, &state.log_w),
        v: if state.r() == 1 {
            0.0
        } else {
            log_dirichlet_symmetric(state.beta / r, &state.log_v)
        },
        mu: log_normal_density(state.mu, hp.mu_mean, hp.mu_variance),
        sigma2: log_inverse_gamma_density(state.sigma2, hp.sigma2_shape, hp.sigma2_rate),
        tau2: log_inverse_gamma_density(state.tau2, hp.tau2_shape, hp.tau2_rate),
        alpha: log_gamma_density(state.alpha, hp.alpha_shape, hp.alpha_rate),
        beta: log_gamma_density(state.beta, hp.beta_shape, hp.beta_rate),
    };
    for (name, v) in out.components() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                component: format!("log joint term {name}"),
            });
        }
    }
    Ok(out)
}

/// Ground-truth design for synthetic networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct GenerativeSpec {
    /// Community sizes; vertices are laid out block by block.
    pub sizes: Vec<usize>,
    /// Supercommunity of each community (0-based).
    pub zeta: Vec<usize>,
    /// Supercommunity logits, `R* × R*`.
    pub eta: TriMatrix<f64>,
    /// Spread of community logits around their supercommunity logit.
    pub sigma: f64,
    /// Explicit community logits; overrides the `(η, σ)` draw.
    pub theta: Option<TriMatrix<f64>>,
}

/// On-disk form with 1-based labels and dense matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    sizes: Vec<usize>,
    supercommunities: Vec<usize>,
    eta: Vec<Vec<f64>>,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<Vec<f64>>>,
}

fn symmetric_from_dense(rows: &[Vec<f64>], what: &str) -> Result<TriMatrix<f64>> {
    let d = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidConfig(format!("{what} must be square")));
        }
        for j in 0..i {
            if (row[j] - rows[j][i]).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!("{what} must be symmetric")));
            }
        }
    }
    Ok(TriMatrix::from_fn(d, |a, b| rows[a][b]))
}

impl TryFrom<SpecFile> for GenerativeSpec {
    type Error = Error;

    fn try_from(f: SpecFile) -> Result<Self> {
        if f.supercommunities.contains(&0) {
            return Err(Error::InvalidConfig(
                "supercommunity labels are 1-based".into(),
            ));
        }
        let spec = GenerativeSpec {
            sizes: f.sizes,
            zeta: f.supercommunities.iter().map(|z| z - 1).collect(),
            eta: symmetric_from_dense(&f.eta, "eta")?,
            sigma: f.sigma,
            theta: f
                .theta
                .as_deref()
                .map(|t| symmetric_from_dense(t, "theta"))
                .transpose()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<GenerativeSpec> for SpecFile {
    fn from(s: GenerativeSpec) -> Self {
        SpecFile {
            sizes: s.sizes,
            supercommunities: s.zeta.iter().map(|z| z + 1).collect(),
            eta: s.eta.to_dense(),
            sigma: s.sigma,
            theta: s.theta.map(|t| t.to_dense()),
        }
    }
}

/// A generated network with its ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub network: Network,
    pub xi: Vec<usize>,
    pub zeta: Vec<usize>,
    pub theta: TriMatrix<f64>,
}

impl GenerativeSpec {
    pub fn vertex_count(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn community_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn supercommunity_count(&self) -> usize {
        self.eta.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sizes.len();
        if k == 0 || self.sizes.contains(&0) {
            return Err(Error::InvalidConfig(
                "community sizes must be a non-empty list of positive integers".into(),
            ));
        }
        if self.zeta.len() != k {
            return Err(Error::InvalidConfig(format!(
                "{} supercommunity labels for {k} communities",
                self.zeta.len()
            )));
        }
        if let Some(&z) = self.zeta.iter().find(|&&z| z >= self.eta.dim()) {
            return Err(Error::InvalidConfig(format!(
                "supercommunity label {} exceeds eta dimension {}",
                z + 1,
                self.eta.dim()
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig("sigma must be non-negative".into()));
        }
        if let Some(t) = &self.theta {
            if t.dim() != k {
                return Err(Error::InvalidConfig(format!(
                    "theta is {0}x{0} but there are {k} communities",
                    t.dim()
                )));
            }
        }
        Ok(())
    }

    /// Draw a network and its truth.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Generated> {
        self.validate()?;
        let xi: Vec<usize> = self
            .sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        let theta = match &self.theta {
            Some(t) => t.clone(),
            None => TriMatrix::from_fn(self.sizes.len(), |a, b| {
                let mean = self.eta.at(self.zeta[a], self.zeta[b]);
                sample_normal(mean, self.sigma * self.sigma, rng)
            }),
        };
        let network = sample_network(&xi, &theta, rng);
        Ok(Generated {
            network,
            xi,
            zeta: self.zeta.clone(),
            theta,
        })
    }
}
