//! Full-conditional updates. Each step reads the current state and
//! overwrites one parameter block in place.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Hyperparams, McmcState};
use crate::network::{BlockStats, Network};
use crate::special::{
    ln_gamma, sample_beta, sample_categorical_log, sample_dirichlet_log, sample_gamma,
    sample_inverse_gamma, sample_normal, softplus, PolyaGamma,
};

/// How the concentration parameters are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConcentrationUpdate {
    /// Escobar–West for large dimensions, Metropolis otherwise.
    #[default]
    Auto,
    EscobarWest,
    Metropolis,
}

/// Dimension from which `Auto` switches to Escobar–West for α.
pub const ESCOBAR_WEST_MIN_K: usize = 20;
/// Same threshold for β.
pub const ESCOBAR_WEST_MIN_R: usize = 10;

/// γ_kl ~ PG(n_kl, θ_kl); zero for empty blocks.
pub fn step_gamma<R: Rng + ?Sized>(
    state: &mut McmcState,
    stats: &BlockStats,
    sampler: &PolyaGamma,
    rng: &mut R,
) {
    let dyads = stats.dyad_matrix().as_slice();
    let theta = state.theta.as_slice();
    for (idx, g) in state.pg.as_mut_slice().iter_mut().enumerate() {
        *g = sampler.sample(dyads[idx], theta[idx], rng);
    }
}

/// θ_kl ~ N(v (s − n/2 + η/σ²), v) with v = (γ + 1/σ²)⁻¹.
pub fn step_theta<R: Rng + ?Sized>(state: &mut McmcState, stats: &BlockStats, rng: &mut R) {
    let inv_s2 = 1.0 / state.sigma2;
    let k = state.k();
    for a in 0..k {
        for b in a..k {
            let g = state.pg.at(a, b);
            let var = 1.0 / (g + inv_s2);
            let kappa = stats.edges(a, b) as f64 - 0.5 * stats.dyads(a, b) as f64;
            let mean = var * (kappa + state.eta_for(a, b) * inv_s2);
            state.theta.set(a, b, sample_normal(mean, var, rng));
        }
    }
}

/// Unnormalised log-probabilities of `ξ_i = k` for every k, with `neigh[b]`
/// the number of neighbours of `i` in block `b`.
pub fn xi_log_weights(
    state: &McmcState,
    stats: &BlockStats,
    vertex: usize,
    neigh: &[u64],
    out: &mut [f64],
) {
    let old = state.xi[vertex];
    let sizes = stats.sizes();
    for (c, lp) in out.iter_mut().enumerate() {
        let mut acc = state.log_w[c];
        for (b, &size) in sizes.iter().enumerate() {
            let others = size - usize::from(b == old);
            if others == 0 {
                continue;
            }
            let t = state.theta.at(c, b);
            acc += neigh[b] as f64 * t - others as f64 * softplus(t);
        }
        *lp = acc;
    }
}

/// Single-site categorical update of every ξ_i in `order`, keeping `stats`
/// in sync.
pub fn step_xi<R: Rng + ?Sized>(
    state: &mut McmcState,
    net: &Network,
    stats: &mut BlockStats,
    order: &[usize],
    rng: &mut R,
) -> Result<()> {
    let k = state.k();
    if k == 1 {
        return Ok(());
    }
    let theta = state.theta.to_dense();
    let sp: Vec<Vec<f64>> = theta
        .iter()
        .map(|row| row.iter().map(|&t| softplus(t)).collect())
        .collect();
    let mut neigh = vec![0u64; k];
    let mut logp = vec![0.0; k];
    let mut occupied = Vec::with_capacity(k);
    for &i in order {
        neigh.iter_mut().for_each(|c| *c = 0);
        for &j in net.neighbors(i) {
            neigh[state.xi[j]] += 1;
        }
        let old = state.xi[i];
        occupied.clear();
        for (b, &size) in stats.sizes().iter().enumerate() {
            let others = size - usize::from(b == old);
            if others > 0 {
                occupied.push((b, others as f64, neigh[b] as f64));
            }
        }
        for c in 0..k {
            let mut acc = state.log_w[c];
            for &(b, others, nb) in &occupied {
                acc += nb * theta[c][b] - others * sp[c][b];
            }
            logp[c] = acc;
        }
        let new = sample_categorical_log(&logp, rng)?;
        if new != old {
            stats.apply_move(i, old, new, &neigh);
            state.xi[i] = new;
        }
    }
    Ok(())
}

/// w ~ Dir(α/K + n_k).
pub fn step_w<R: Rng + ?Sized>(state: &mut McmcState, stats: &BlockStats, rng: &mut R) {
    let prior = state.alpha / state.k() as f64;
    let conc: Vec<f64> = stats.sizes().iter().map(|&n| prior + n as f64).collect();
    state.log_w = sample_dirichlet_log(&conc, rng);
}

/// v ~ Dir(β/R + m_r), m_r counting all K communities.
pub fn step_v<R: Rng + ?Sized>(state: &mut McmcState, rng: &mut R) {
    let prior = state.beta / state.r() as f64;
    let conc: Vec<f64> = state
        .super_sizes()
        .iter()
        .map(|&m| prior + m as f64)
        .collect();
    state.log_v = sample_dirichlet_log(&conc, rng);
}

/// Both weight vectors.
pub fn step_weights<R: Rng + ?Sized>(state: &mut McmcState, stats: &BlockStats, rng: &mut R) {
    step_w(state, stats, rng);
    step_v(state, rng);
}

/// σ² ~ IG((N + 2α_σ)/2, ½ Σ x_kl (θ_kl − η)² + β_σ), summing only over
/// occupied block pairs (empty-block θ integrated out).
pub fn step_sigma2<R: Rng + ?Sized>(
    state: &mut McmcState,
    stats: &BlockStats,
    hp: &Hyperparams,
    rng: &mut R,
) {
    let mut occupied = 0usize;
    let mut ss = 0.0;
    for (a, b, &t) in state.theta.iter() {
        if stats.dyads(a, b) > 0 {
            occupied += 1;
            ss += (t - state.eta_for(a, b)).powi(2);
        }
    }
    let shape = 0.5 * occupied as f64 + hp.sigma2_shape;
    let rate = 0.5 * ss + hp.sigma2_rate;
    state.sigma2 = sample_inverse_gamma(shape, rate, rng);
}

/// Redraw θ for empty block pairs from N(η, σ²). Needed after
/// [`step_sigma2`], which marginalises them out.
pub fn refresh_empty_theta<R: Rng + ?Sized>(
    state: &mut McmcState,
    stats: &BlockStats,
    rng: &mut R,
) {
    let k = state.k();
    for a in 0..k {
        for b in a..k {
            if stats.dyads(a, b) == 0 {
                let mean = state.eta_for(a, b);
                state
                    .theta
                    .set(a, b, sample_normal(mean, state.sigma2, rng));
            }
        }
    }
}

/// η_rs ~ N(v (t_rs/σ² + μ/τ²), v) with v = (m_rs/σ² + 1/τ²)⁻¹, over all
/// block pairs.
pub fn step_eta<R: Rng + ?Sized>(state: &mut McmcState, rng: &mut R) {
    let (m, t) = state.super_pair_stats();
    let (inv_s2, inv_t2) = (1.0 / state.sigma2, 1.0 / state.tau2);
    let mu = state.mu;
    for (idx, e) in state.eta.as_mut_slice().iter_mut().enumerate() {
        let var = 1.0 / (m.as_slice()[idx] as f64 * inv_s2 + inv_t2);
        let mean = var * (t.as_slice()[idx] * inv_s2 + mu * inv_t2);
        *e = sample_normal(mean, var, rng);
    }
}

/// Unnormalised log-probabilities of `ζ_k = r`.
pub fn zeta_log_weights(state: &McmcState, k: usize, out: &mut [f64]) {
    let inv2 = 0.5 / state.sigma2;
    for (r, lp) in out.iter_mut().enumerate() {
        let mut ss = 0.0;
        for l in 0..state.k() {
            let s = if l == k { r } else { state.zeta[l] };
            ss += (state.theta.at(k, l) - state.eta.at(r, s)).powi(2);
        }
        *lp = state.log_v[r] - inv2 * ss;
    }
}

pub fn step_zeta<R: Rng + ?Sized>(
    state: &mut McmcState,
    order: &[usize],
    rng: &mut R,
) -> Result<()> {
    let r = state.r();
    if r == 1 {
        return Ok(());
    }
    let mut logp = vec![0.0; r];
    for &k in order {
        zeta_log_weights(state, k, &mut logp);
        state.zeta[k] = sample_categorical_log(&logp, rng)?;
    }
    Ok(())
}

/// Occupancy indicator z_rs = 1{m_rs ≥ 1} in packed order.
fn occupied_super_pairs(state: &McmcState) -> Vec<bool> {
    let (m, _) = state.super_pair_stats();
    m.as_slice().iter().map(|&c| c > 0).collect()
}

/// μ ~ N(v (Σ z η / τ² + μ_μ/σ²_μ), v), v = (M/τ² + 1/σ²_μ)⁻¹.
pub fn step_mu<R: Rng + ?Sized>(state: &mut McmcState, hp: &Hyperparams, rng: &mut R) {
    let z = occupied_super_pairs(state);
    let (count, sum) = state
        .eta
        .as_slice()
        .iter()
        .zip(&z)
        .filter(|(_, &o)| o)
        .fold((0usize, 0.0), |(c, s), (&e, _)| (c + 1, s + e));
    let var = 1.0 / (count as f64 / state.tau2 + 1.0 / hp.mu_variance);
    let mean = var * (sum / state.tau2 + hp.mu_mean / hp.mu_variance);
    state.mu = sample_normal(mean, var, rng);
}

/// τ² ~ IG((M + 2α_τ)/2, ½ Σ z (η − μ)² + β_τ).
pub fn step_tau2<R: Rng + ?Sized>(state: &mut McmcState, hp: &Hyperparams, rng: &mut R) {
    let z = occupied_super_pairs(state);
    let (count, ss) = state
        .eta
        .as_slice()
        .iter()
        .zip(&z)
        .filter(|(_, &o)| o)
        .fold((0usize, 0.0), |(c, s), (&e, _)| {
            (c + 1, s + (e - state.mu).powi(2))
        });
    let shape = 0.5 * count as f64 + hp.tau2_shape;
    let rate = 0.5 * ss + hp.tau2_rate;
    state.tau2 = sample_inverse_gamma(shape, rate, rng);
}

/// Redraw η for supercommunity pairs that no block pair maps to, from
/// N(μ, τ²). Needed after [`step_mu`] and [`step_tau2`].
pub fn refresh_empty_eta<R: Rng + ?Sized>(state: &mut McmcState, rng: &mut R) {
    let z = occupied_super_pairs(state);
    let (mu, tau2) = (state.mu, state.tau2);
    for (e, occ) in state.eta.as_mut_slice().iter_mut().zip(z) {
        if !occ {
            *e = sample_normal(mu, tau2, rng);
        }
    }
}

/// Escobar–West auxiliary-variable draw of a Dirichlet-process concentration
/// with `occupied` clusters among `n` items.
pub fn escobar_west<R: Rng + ?Sized>(
    current: f64,
    n: usize,
    occupied: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    let x = sample_beta(current + 1.0, n as f64, rng);
    let post_rate = rate - x.max(f64::MIN_POSITIVE).ln();
    let post_shape = shape + occupied as f64;
    let odds = (post_shape - 1.0) / (n as f64 * post_rate);
    let pi = if odds > 0.0 { odds / (1.0 + odds) } else { 1.0 };
    if rng.random::<f64>() < pi {
        sample_gamma(post_shape, post_rate, rng)
    } else {
        sample_gamma(post_shape - 1.0, post_rate, rng)
    }
}

/// Log of the exact finite-dimensional conditional of a symmetric
/// Dirichlet concentration `c`, given `Σ log w` over `dim` weights.
pub fn concentration_log_density(c: f64, dim: usize, sum_log_w: f64, shape: f64, rate: f64) -> f64 {
    if !(c > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = dim as f64;
    ln_gamma(c) - d * ln_gamma(c / d) + (c / d) * sum_log_w + (shape - 1.0) * c.ln() - rate * c
}

/// Random-walk Metropolis on `log c` targeting [`concentration_log_density`].
pub fn metropolis_concentration<R: Rng + ?Sized>(
    current: f64,
    dim: usize,
    sum_log_w: f64,
    shape: f64,
    rate: f64,
    step: f64,
    rng: &mut R,
) -> f64 {
    let proposal = current * (step * sample_normal(0.0, 1.0, rng)).exp();
    // the log-scale proposal contributes the Jacobian c'/c
    let log_ratio = concentration_log_density(proposal, dim, sum_log_w, shape, rate)
        - concentration_log_density(current, dim, sum_log_w, shape, rate)
        + (proposal / current).ln();
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        proposal
    } else {
        current
    }
}

fn use_escobar_west(mode: ConcentrationUpdate, dim: usize, threshold: usize) -> bool {
    match mode {
        ConcentrationUpdate::Auto => dim >= threshold,
        ConcentrationUpdate::EscobarWest => true,
        ConcentrationUpdate::Metropolis => false,
    }
}

pub fn step_alpha<R: Rng + ?Sized>(
    state: &mut McmcState,
    hp: &Hyperparams,
    mode: ConcentrationUpdate,
    mh_step: f64,
    rng: &mut R,
) {
    let k = state.k();
    state.alpha = if use_escobar_west(mode, k, ESCOBAR_WEST_MIN_K) {
        let occupied = state.occupied_communities();
        escobar_west(
            state.alpha,
            state.xi.len(),
            occupied,
            hp.alpha_shape,
            hp.alpha_rate,
            rng,
        )
    } else {
        let sum_log_w = state.log_w.iter().sum();
        metropolis_concentration(
            state.alpha,
            k,
            sum_log_w,
            hp.alpha_shape,
            hp.alpha_rate,
            mh_step,
            rng,
        )
    };
}

pub fn step_beta<R: Rng + ?Sized>(
    state: &mut McmcState,
    hp: &Hyperparams,
    mode: ConcentrationUpdate,
    mh_step: f64,
    rng: &mut R,
) {
    let r = state.r();
    state.beta = if use_escobar_west(mode, r, ESCOBAR_WEST_MIN_R) {
        let mut seen = vec![false; r];
        state.zeta.iter().for_each(|&z| seen[z] = true);
        let occupied = seen.iter().filter(|&&s| s).count();
        escobar_west(
            state.beta,
            state.k(),
            occupied,
            hp.beta_shape,
            hp.beta_rate,
            rng,
        )
    } else {
        let sum_log_v = state.log_v.iter().sum();
        metropolis_concentration(
            state.beta,
            r,
            sum_log_v,
            hp.beta_shape,
            hp.beta_rate,
            mh_step,
            rng,
        )
    };
}
