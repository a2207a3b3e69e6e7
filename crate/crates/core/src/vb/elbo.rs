//! Relaxed evidence lower bound, term by term, with all additive constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::network::Network;
use crate::special::{digamma, ln_gamma, trigamma};

use super::updates::{jj_softplus_bound, soft_counts};
use super::VbState;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Every expectation and entropy that makes up the bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub likelihood: f64,
    pub theta_prior: f64,
    pub eta_prior: f64,
    pub xi_prior: f64,
    pub zeta_prior: f64,
    pub w_prior: f64,
    pub v_prior: f64,
    pub mu_prior: f64,
    pub sigma2_prior: f64,
    pub tau2_prior: f64,
    pub alpha_prior: f64,
    pub beta_prior: f64,
    pub theta_entropy: f64,
    pub eta_entropy: f64,
    pub xi_entropy: f64,
    pub zeta_entropy: f64,
    pub w_entropy: f64,
    pub v_entropy: f64,
    pub mu_entropy: f64,
    pub sigma2_entropy: f64,
    pub tau2_entropy: f64,
    pub alpha_entropy: f64,
    pub beta_entropy: f64,
}

impl ElboTerms {
    pub fn components(&self) -> [(&'static str, f64); 23] {
        [
            ("likelihood", self.likelihood),
            ("theta_prior", self.theta_prior),
            ("eta_prior", self.eta_prior),
            ("xi_prior", self.xi_prior),
            ("zeta_prior", self.zeta_prior),
            ("w_prior", self.w_prior),
            ("v_prior", self.v_prior),
            ("mu_prior", self.mu_prior),
            ("sigma2_prior", self.sigma2_prior),
            ("tau2_prior", self.tau2_prior),
            ("alpha_prior", self.alpha_prior),
            ("beta_prior", self.beta_prior),
            ("theta_entropy", self.theta_entropy),
            ("eta_entropy", self.eta_entropy),
            ("xi_entropy", self.xi_entropy),
            ("zeta_entropy", self.zeta_entropy),
            ("w_entropy", self.w_entropy),
            ("v_entropy", self.v_entropy),
            ("mu_entropy", self.mu_entropy),
            ("sigma2_entropy", self.sigma2_entropy),
            ("tau2_entropy", self.tau2_entropy),
            ("alpha_entropy", self.alpha_entropy),
            ("beta_entropy", self.beta_entropy),
        ]
    }

    pub fn total(&self) -> f64 {
        self.components().iter().map(|(_, v)| v).sum()
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.max(1e-12).ln()
    }
}

/// `E log σ²` under `IG(shape, scale)`.
fn ig_log_mean(shape: f64, scale: f64) -> f64 {
    scale.ln() - digamma(shape)
}

/// `E ln p(x)` for `x ~ IG(shape0, rate0)` when `q(x) = IG(shape, scale)`.
fn ig_cross(shape0: f64, rate0: f64, shape: f64, scale: f64) -> f64 {
    shape0 * rate0.ln()
        - ln_gamma(shape0)
        - (shape0 + 1.0) * ig_log_mean(shape, scale)
        - rate0 * shape / scale
}

fn ig_entropy(shape: f64, scale: f64) -> f64 {
    shape + scale.ln() + ln_gamma(shape) - (1.0 + shape) * digamma(shape)
}

/// `E ln p(x)` for `x ~ G(shape0, rate0)` when `q(x) = G(shape, rate)`.
fn gamma_cross(shape0: f64, rate0: f64, shape: f64, rate: f64) -> f64 {
    shape0 * rate0.ln() - ln_gamma(shape0) + (shape0 - 1.0) * (digamma(shape) - rate.ln())
        - rate0 * shape / rate
}

fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
}

fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (1.0 + LN_2PI + var.ln())
}

fn dirichlet_entropy(conc: &[f64]) -> f64 {
    let total: f64 = conc.iter().sum();
    let d = conc.len() as f64;
    conc.iter()
        .map(|&c| ln_gamma(c) - (c - 1.0) * digamma(c))
        .sum::<f64>()
        - ln_gamma(total)
        + (total - d) * digamma(total)
}

/// Second-order approximation of `E ln Γ(x)` for `x ~ G(shape, rate)`.
fn expected_ln_gamma(shape: f64, rate: f64) -> f64 {
    let mean = shape / rate;
    ln_gamma(mean) + 0.5 * trigamma(mean) * shape / (rate * rate)
}

/// `E ln p(weights | concentration)` for a symmetric Dirichlet of dimension
/// `d` whose concentration has `q = G(shape, rate)`.
fn weights_cross(shape: f64, rate: f64, elog: &[f64]) -> f64 {
    let d = elog.len() as f64;
    let per = shape / (rate * d);
    expected_ln_gamma(shape, rate) - d * expected_ln_gamma(shape, rate * d)
        + elog.iter().map(|e| (per - 1.0) * e).sum::<f64>()
}

/// The part of the bound that depends on `q(concentration) = G(shape, rate)`.
pub(crate) fn concentration_objective(
    shape0: f64,
    rate0: f64,
    shape: f64,
    rate: f64,
    elog: &[f64],
) -> f64 {
    weights_cross(shape, rate, elog)
        + gamma_cross(shape0, rate0, shape, rate)
        + gamma_entropy(shape, rate)
}

/// Evaluate every term of the bound.
pub fn compute_elbo(vb: &VbState, net: &Network, hp: &Hyperparams) -> Result<ElboTerms> {
    let counts = soft_counts(net, &vb.resp);
    let mut t = ElboTerms::default();

    for (idx, (a, b, &m)) in vb.mean.iter().enumerate() {
        let v = vb.var.as_slice()[idx];
        let l = jj_softplus_bound(m, v, vb.aux.at(a, b));
        t.likelihood += counts.edges.as_slice()[idx] * m - counts.dyads.as_slice()[idx] * l;
    }

    let theta_pairs = vb.mean.as_slice().len() as f64;
    let sigma_log = ig_log_mean(vb.sigma2_shape, vb.sigma2_scale);
    let dev: f64 = vb.expected_sq_deviation().as_slice().iter().sum();
    t.theta_prior = -0.5 * theta_pairs * (LN_2PI + sigma_log) - 0.5 * vb.sigma2_precision() * dev;

    let eta_pairs = vb.eta_mean.as_slice().len() as f64;
    let tau_log = ig_log_mean(vb.tau2_shape, vb.tau2_scale);
    let c = vb.mu_mean;
    let eta_dev: f64 = vb
        .eta_mean
        .as_slice()
        .iter()
        .zip(vb.eta_var.as_slice())
        .map(|(g, h2)| g * g + h2 - 2.0 * c * g + c * c + vb.mu_var)
        .sum();
    t.eta_prior = -0.5 * eta_pairs * (LN_2PI + tau_log) - 0.5 * vb.tau2_precision() * eta_dev;

    let elog_w = vb.expected_log_w();
    let elog_v = vb.expected_log_v();
    t.xi_prior = counts.totals.iter().zip(&elog_w).map(|(n, e)| n * e).sum();
    let mut super_totals = vec![0.0; vb.r()];
    for row in &vb.super_resp {
        for (s, p) in super_totals.iter_mut().zip(row) {
            *s += p;
        }
    }
    t.zeta_prior = super_totals.iter().zip(&elog_v).map(|(n, e)| n * e).sum();

    t.w_prior = weights_cross(vb.alpha_shape, vb.alpha_rate, &elog_w);
    t.v_prior = weights_cross(vb.beta_shape, vb.beta_rate, &elog_v);

    let mu_sq = c * c + vb.mu_var - 2.0 * c * hp.mu_mean + hp.mu_mean * hp.mu_mean;
    t.mu_prior = -0.5 * (LN_2PI + hp.mu_variance.ln()) - mu_sq / (2.0 * hp.mu_variance);
    t.sigma2_prior = ig_cross(
        hp.sigma2_shape,
        hp.sigma2_rate,
        vb.sigma2_shape,
        vb.sigma2_scale,
    );
    t.tau2_prior = ig_cross(hp.tau2_shape, hp.tau2_rate, vb.tau2_shape, vb.tau2_scale);
    t.alpha_prior = gamma_cross(hp.alpha_shape, hp.alpha_rate, vb.alpha_shape, vb.alpha_rate);
    t.beta_prior = gamma_cross(hp.beta_shape, hp.beta_rate, vb.beta_shape, vb.beta_rate);

    t.theta_entropy = vb.var.as_slice().iter().map(|&v| gaussian_entropy(v)).sum();
    t.eta_entropy = vb
        .eta_var
        .as_slice()
        .iter()
        .map(|&v| gaussian_entropy(v))
        .sum();
    t.xi_entropy = -vb.resp.iter().flatten().map(|&p| xlogx(p)).sum::<f64>();
    t.zeta_entropy = -vb
        .super_resp
        .iter()
        .flatten()
        .map(|&p| xlogx(p))
        .sum::<f64>();
    t.w_entropy = dirichlet_entropy(&vb.w_conc);
    t.v_entropy = dirichlet_entropy(&vb.v_conc);
    t.mu_entropy = gaussian_entropy(vb.mu_var);
    t.sigma2_entropy = ig_entropy(vb.sigma2_shape, vb.sigma2_scale);
    t.tau2_entropy = ig_entropy(vb.tau2_shape, vb.tau2_scale);
    t.alpha_entropy = gamma_entropy(vb.alpha_shape, vb.alpha_rate);
    t.beta_entropy = gamma_entropy(vb.beta_shape, vb.beta_rate);

    if let Some((name, _)) = t.components().iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: format!("ELBO term {name}"),
        });
    }
    Ok(t)
}
