//! Coordinate updates. Each one maximises the relaxed bound in its own block
//! given the rest, except the α and β updates which use a first-order
//! `ln Γ` approximation.

use serde::{Deserialize, Serialize};

use crate::model::Hyperparams;
use crate::network::Network;
use crate::special::{digamma, log_sum_exp, softplus};
use crate::tri::TriMatrix;

use super::elbo::concentration_objective;
use super::VbState;

/// Smallest rate allowed for `q(α)` and `q(β)`.
pub const RATE_FLOOR: f64 = 1e-8;

/// Jaakkola–Jordan coefficient `tanh(γ/2) / (4γ)`, with its limit 1/8 at 0.
pub fn jj_lambda(gamma: f64) -> f64 {
    let g = gamma.abs();
    if g < 1e-4 {
        // tanh(x/2)/(4x) = 1/8 - x²/96 + O(x⁴)
        return 0.125 - g * g / 96.0;
    }
    (0.5 * g).tanh() / (4.0 * g)
}

/// Upper bound on `E log(1 + e^θ)` for `θ ~ N(mean, var)` at auxiliary `γ`.
pub fn jj_softplus_bound(mean: f64, var: f64, gamma: f64) -> f64 {
    let g = gamma.abs();
    softplus(-g) + 0.5 * (mean + g) + jj_lambda(g) * (mean * mean + var - g * g)
}

/// Second-order delta-method approximation of `E log(1 + e^θ)`,
/// `θ ~ N(mean, var)`, treating `e^θ` as log-normal.
pub fn delta_softplus(mean: f64, var: f64) -> f64 {
    let u = mean + 0.5 * var;
    let s = crate::special::sigmoid(u);
    softplus(u) - 0.5 * var.exp_m1() * s * s
}

/// How the label update evaluates `E log(1 + e^θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SoftplusExpectation {
    /// The same Jaakkola–Jordan bound the objective uses; the label update
    /// is then an exact coordinate step.
    #[default]
    Bound,
    /// The delta-method approximation.
    Delta,
}

/// Expected edge and dyad counts per block pair under `q(ξ)`, plus the
/// per-vertex neighbour mass `B = Aϖ` and community totals `C`.
pub struct SoftCounts {
    pub edges: TriMatrix<f64>,
    pub dyads: TriMatrix<f64>,
    pub neighbour_mass: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
}

pub fn soft_counts(net: &Network, resp: &[Vec<f64>]) -> SoftCounts {
    let n = resp.len();
    let k = resp.first().map_or(0, Vec::len);
    let mut nb = vec![vec![0.0; k]; n];
    for (i, row) in nb.iter_mut().enumerate() {
        for &j in net.neighbors(i) {
            for (x, y) in row.iter_mut().zip(&resp[j]) {
                *x += y;
            }
        }
    }
    let mut totals = vec![0.0; k];
    let mut self_pairs = TriMatrix::filled(k, 0.0);
    let mut edges = TriMatrix::filled(k, 0.0);
    for i in 0..n {
        let r = &resp[i];
        for a in 0..k {
            totals[a] += r[a];
            for b in a..k {
                *self_pairs.get_mut(a, b) += r[a] * r[b];
                // Σ_i ϖ_ia B_ib counts each edge from both ends
                let e = if a == b {
                    0.5 * r[a] * nb[i][a]
                } else {
                    r[a] * nb[i][b]
                };
                *edges.get_mut(a, b) += e;
            }
        }
    }
    let dyads = TriMatrix::from_fn(k, |a, b| {
        if a == b {
            0.5 * (totals[a] * totals[a] - self_pairs.at(a, a))
        } else {
            totals[a] * totals[b] - self_pairs.at(a, b)
        }
    });
    SoftCounts {
        edges,
        dyads,
        neighbour_mass: nb,
        totals,
    }
}

/// `q(η_{φ(ζ_k, ζ_l)} = η_rs)`: probability that block pair (k, l) maps to
/// supercommunity pair (r, s).
pub fn pair_mapping(super_resp: &[Vec<f64>], k: usize, l: usize, r: usize, s: usize) -> f64 {
    let (k, l) = (k.min(l), k.max(l));
    let (r, s) = (r.min(s), r.max(s));
    let (a, b) = (&super_resp[k], &super_resp[l]);
    match (k == l, r == s) {
        (true, true) => a[r],
        (true, false) => 0.0,
        (false, true) => a[r] * b[r],
        (false, false) => a[r] * b[s] + a[s] * b[r],
    }
}

impl VbState {
    pub fn sigma2_precision(&self) -> f64 {
        self.sigma2_shape / self.sigma2_scale
    }

    pub fn tau2_precision(&self) -> f64 {
        self.tau2_shape / self.tau2_scale
    }

    /// Per block pair: `Σ_{r≤s} g_rs δ` and `Σ_{r≤s} (g²+h²)_rs δ`.
    pub fn mapped_eta_moments(&self) -> (TriMatrix<f64>, TriMatrix<f64>) {
        let (k, r) = (self.k(), self.r());
        let mut first = TriMatrix::filled(k, 0.0);
        let mut second = TriMatrix::filled(k, 0.0);
        for a in 0..k {
            for b in a..k {
                let (mut f, mut s2) = (0.0, 0.0);
                for c in 0..r {
                    for d in c..r {
                        let p = pair_mapping(&self.super_resp, a, b, c, d);
                        if p != 0.0 {
                            let g = self.eta_mean.at(c, d);
                            f += p * g;
                            s2 += p * (g * g + self.eta_var.at(c, d));
                        }
                    }
                }
                first.set(a, b, f);
                second.set(a, b, s2);
            }
        }
        (first, second)
    }

    /// `E (θ_kl − η_{φ(ζ_k, ζ_l)})²` for every block pair.
    pub fn expected_sq_deviation(&self) -> TriMatrix<f64> {
        let (first, second) = self.mapped_eta_moments();
        TriMatrix::from_fn(self.k(), |a, b| {
            let m = self.mean.at(a, b);
            self.var.at(a, b) + m * m - 2.0 * m * first.at(a, b) + second.at(a, b)
        })
    }

    /// `E log w_k` under `q(w)`.
    pub fn expected_log_w(&self) -> Vec<f64> {
        dirichlet_log_means(&self.w_conc)
    }

    /// `E log v_r` under `q(v)`.
    pub fn expected_log_v(&self) -> Vec<f64> {
        dirichlet_log_means(&self.v_conc)
    }
}

pub fn dirichlet_log_means(conc: &[f64]) -> Vec<f64> {
    let total = digamma(conc.iter().sum());
    conc.iter().map(|&c| digamma(c) - total).collect()
}

/// Logit means, variances and auxiliaries.
pub fn update_theta(vb: &mut VbState, net: &Network) {
    let counts = soft_counts(net, &vb.resp);
    let (first, _) = vb.mapped_eta_moments();
    let prec = vb.sigma2_precision();
    for (idx, ((m, v), g)) in vb
        .mean
        .as_mut_slice()
        .iter_mut()
        .zip(vb.var.as_mut_slice())
        .zip(vb.aux.as_mut_slice())
        .enumerate()
    {
        let s = counts.edges.as_slice()[idx];
        let n = counts.dyads.as_slice()[idx];
        *v = 1.0 / (2.0 * jj_lambda(*g) * n + prec);
        *m = *v * (s - 0.5 * n + prec * first.as_slice()[idx]);
        *g = (*v + *m * *m).sqrt();
    }
}

/// Community responsibilities. Sequential over vertices (each row sees the
/// freshest rows of its neighbours) unless `batch`.
pub fn update_xi(vb: &mut VbState, net: &Network, mode: SoftplusExpectation, batch: bool) {
    let k = vb.k();
    let cost = TriMatrix::from_fn(k, |a, b| {
        let (m, v) = (vb.mean.at(a, b), vb.var.at(a, b));
        match mode {
            SoftplusExpectation::Bound => jj_softplus_bound(m, v, vb.aux.at(a, b)),
            SoftplusExpectation::Delta => delta_softplus(m, v),
        }
    });
    let mean = vb.mean.to_dense();
    let cost = cost.to_dense();
    let log_w = vb.expected_log_w();
    let SoftCounts {
        mut neighbour_mass,
        mut totals,
        ..
    } = soft_counts(net, &vb.resp);
    let mut scores = vec![0.0; k];
    let mut fresh = Vec::with_capacity(if batch { vb.resp.len() } else { 0 });
    for i in 0..vb.resp.len() {
        let row = &vb.resp[i];
        let nb = &neighbour_mass[i];
        for a in 0..k {
            let mut s = log_w[a];
            for b in 0..k {
                s += mean[a][b] * nb[b] - cost[a][b] * (totals[b] - row[b]);
            }
            scores[a] = s;
        }
        let lse = log_sum_exp(&scores);
        let new: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
        if batch {
            fresh.push(new);
            continue;
        }
        for b in 0..k {
            let d = new[b] - row[b];
            totals[b] += d;
            for &j in net.neighbors(i) {
                neighbour_mass[j][b] += d;
            }
        }
        vb.resp[i] = new;
    }
    if batch {
        vb.resp = fresh;
    }
}

/// `q(σ²) = IG(o, p)`.
pub fn update_sigma2(vb: &mut VbState, hp: &Hyperparams) {
    let k = vb.k() as f64;
    vb.sigma2_shape = hp.sigma2_shape + k * (k + 1.0) / 4.0;
    let dev: f64 = vb.expected_sq_deviation().as_slice().iter().sum();
    vb.sigma2_scale = hp.sigma2_rate + 0.5 * dev;
}

/// `q(η_rs) = N(g, h²)`.
pub fn update_eta(vb: &mut VbState) {
    let (k, r) = (vb.k(), vb.r());
    let prec = vb.sigma2_precision();
    let upper = vb.tau2_precision();
    for c in 0..r {
        for d in c..r {
            let (mut mass, mut weighted) = (0.0, 0.0);
            for a in 0..k {
                for b in a..k {
                    let p = pair_mapping(&vb.super_resp, a, b, c, d);
                    mass += p;
                    weighted += p * vb.mean.at(a, b);
                }
            }
            let h2 = 1.0 / (prec * mass + upper);
            vb.eta_var.set(c, d, h2);
            vb.eta_mean
                .set(c, d, h2 * (prec * weighted + upper * vb.mu_mean));
        }
    }
}

/// Supercommunity responsibilities, sequential over communities.
pub fn update_zeta(vb: &mut VbState) {
    let (k, r) = (vb.k(), vb.r());
    let prec = vb.sigma2_precision();
    let log_v = vb.expected_log_v();
    let g = vb.eta_mean.to_dense();
    let sq = TriMatrix::from_fn(r, |c, d| {
        let gm = vb.eta_mean.at(c, d);
        gm * gm + vb.eta_var.at(c, d)
    })
    .to_dense();
    let mut scores = vec![0.0; r];
    for a in 0..k {
        for c in 0..r {
            let m_aa = vb.mean.at(a, a);
            let mut q = -2.0 * m_aa * g[c][c] + sq[c][c];
            for b in (0..k).filter(|&b| b != a) {
                let m = vb.mean.at(a, b);
                for (d, &p) in vb.super_resp[b].iter().enumerate() {
                    q += p * (sq[c][d] - 2.0 * m * g[c][d]);
                }
            }
            scores[c] = log_v[c] - 0.5 * prec * q;
        }
        let lse = log_sum_exp(&scores);
        vb.super_resp[a] = scores.iter().map(|s| (s - lse).exp()).collect();
    }
}

/// `q(μ) = N(c, d²)`.
pub fn update_mu(vb: &mut VbState, hp: &Hyperparams) {
    let r = vb.r() as f64;
    let upper = vb.tau2_precision();
    let sum_g: f64 = vb.eta_mean.as_slice().iter().sum();
    vb.mu_var = 1.0 / (upper * r * (r + 1.0) / 2.0 + 1.0 / hp.mu_variance);
    vb.mu_mean = vb.mu_var * (upper * sum_g + hp.mu_mean / hp.mu_variance);
}

/// `q(τ²) = IG(a, b)`.
pub fn update_tau2(vb: &mut VbState, hp: &Hyperparams) {
    let r = vb.r() as f64;
    let pairs = r * (r + 1.0) / 2.0;
    vb.tau2_shape = hp.tau2_shape + pairs / 2.0;
    let c = vb.mu_mean;
    let dev: f64 = vb
        .eta_mean
        .as_slice()
        .iter()
        .zip(vb.eta_var.as_slice())
        .map(|(g, h2)| g * g + h2 - 2.0 * c * g)
        .sum();
    vb.tau2_scale = hp.tau2_rate + 0.5 * dev + 0.5 * pairs * (c * c + vb.mu_var);
}

pub fn update_mu_tau(vb: &mut VbState, hp: &Hyperparams) {
    update_mu(vb, hp);
    update_tau2(vb, hp);
}

/// `q(w) = Dir(ψ)`.
pub fn update_w(vb: &mut VbState) {
    let k = vb.k() as f64;
    let prior = vb.alpha_shape / vb.alpha_rate / k;
    let mut conc = vec![prior; vb.k()];
    for row in &vb.resp {
        for (c, p) in conc.iter_mut().zip(row) {
            *c += p;
        }
    }
    vb.w_conc = conc;
}

/// `q(v) = Dir(φ)`.
pub fn update_v(vb: &mut VbState) {
    let r = vb.r() as f64;
    let prior = vb.beta_shape / vb.beta_rate / r;
    let mut conc = vec![prior; vb.r()];
    for row in &vb.super_resp {
        for (c, p) in conc.iter_mut().zip(row) {
            *c += p;
        }
    }
    vb.v_conc = conc;
}

/// Gamma shape and rate from the first-order `ln Γ` approximation.
/// Returns `true` when the rate had to be floored.
fn concentration_update(shape0: f64, rate0: f64, conc: &[f64]) -> (f64, f64, bool) {
    let d = conc.len() as f64;
    let mean_log: f64 = dirichlet_log_means(conc).iter().sum::<f64>() / d;
    let rate = rate0 - (mean_log + d.ln());
    let shape = shape0 + d - 1.0;
    if rate <= RATE_FLOOR || !rate.is_finite() {
        (shape, RATE_FLOOR, true)
    } else {
        (shape, rate, false)
    }
}

/// Move `q(concentration)` from `current` towards the closed-form `target`
/// without lowering the bound. The closed form ignores the curvature term of
/// the `E ln Γ` approximation, so taken whole it can overshoot; the step is
/// then shortened by golden-section search along the log-scale segment.
fn guarded_concentration_step(
    shape0: f64,
    rate0: f64,
    current: (f64, f64),
    target: (f64, f64),
    elog: &[f64],
) -> (f64, f64) {
    let f = |p: (f64, f64)| concentration_objective(shape0, rate0, p.0, p.1, elog);
    let f_cur = f(current);
    let f_target = f(target);
    if f_target >= f_cur || !f_cur.is_finite() {
        return target;
    }
    let at = |t: f64| {
        (
            (current.0.ln() + t * (target.0.ln() - current.0.ln())).exp(),
            (current.1.ln() + t * (target.1.ln() - current.1.ln())).exp(),
        )
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(at(x1)), f(at(x2)));
    for _ in 0..40 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(at(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(at(x2));
        }
    }
    let (t, best) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if best > f_cur {
        at(t)
    } else {
        current
    }
}

pub fn update_alpha(vb: &mut VbState, hp: &Hyperparams) {
    let (a, b, clamped) = concentration_update(hp.alpha_shape, hp.alpha_rate, &vb.w_conc);
    if clamped {
        log::warn!("rate of q(α) was not positive; floored at {RATE_FLOOR}");
    }
    let elog = vb.expected_log_w();
    (vb.alpha_shape, vb.alpha_rate) = guarded_concentration_step(
        hp.alpha_shape,
        hp.alpha_rate,
        (vb.alpha_shape, vb.alpha_rate),
        (a, b),
        &elog,
    );
    vb.rate_clamped |= clamped;
}

pub fn update_beta(vb: &mut VbState, hp: &Hyperparams) {
    let (a, b, clamped) = concentration_update(hp.beta_shape, hp.beta_rate, &vb.v_conc);
    if clamped {
        log::warn!("rate of q(β) was not positive; floored at {RATE_FLOOR}");
    }
    let elog = vb.expected_log_v();
    (vb.beta_shape, vb.beta_rate) = guarded_concentration_step(
        hp.beta_shape,
        hp.beta_rate,
        (vb.beta_shape, vb.beta_rate),
        (a, b),
        &elog,
    );
    vb.rate_clamped |= clamped;
}

pub fn update_weights_concentrations(vb: &mut VbState, hp: &Hyperparams) {
    update_w(vb);
    update_v(vb);
    update_alpha(vb, hp);
    update_beta(vb, hp);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{sample_normal, stream_rng};
    use rand::Rng;

    /// `E log(1+e^θ)` by the trapezoid rule on ±12 sd.
    fn softplus_expectation(mean: f64, var: f64) -> f64 {
        let sd = var.sqrt();
        let n = 4000;
        let h = 24.0 * sd / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = mean - 12.0 * sd + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let dens = (-(x - mean).powi(2) / (2.0 * var)).exp()
                / (2.0 * std::f64::consts::PI * var).sqrt();
            acc += w * dens * softplus(x);
        }
        acc * h
    }

    #[test]
    fn lambda_limit_and_continuity() {
        assert_eq!(jj_lambda(0.0), 0.125);
        let below = jj_lambda(0.999e-4);
        let above = jj_lambda(1.001e-4);
        assert!((below - above).abs() < 1e-10);
        let g: f64 = 2.0;
        let logistic_form = (1.0 - (-g).exp()) / (4.0 * g * (1.0 + (-g).exp()));
        assert!((jj_lambda(g) - logistic_form).abs() < 1e-15);
    }

    #[test]
    fn jj_bound_dominates_softplus_with_equality_at_gamma() {
        for gi in 1..40 {
            let g = gi as f64 * 0.25;
            for ti in -40..=40 {
                let t = ti as f64 * 0.25;
                let bound = jj_softplus_bound(t, 0.0, g);
                assert!(bound >= softplus(t) - 1e-12, "θ={t}, γ={g}");
            }
            assert!((jj_softplus_bound(g, 0.0, g) - softplus(g)).abs() < 1e-12);
            assert!((jj_softplus_bound(-g, 0.0, g) - softplus(-g)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_bound_dominates_expectation() {
        for &(m, v) in &[(0.0f64, 1.0f64), (2.0, 0.5), (-3.0, 0.1), (1.0, 3.0)] {
            let g = (m * m + v).sqrt();
            assert!(jj_softplus_bound(m, v, g) >= softplus_expectation(m, v) - 1e-9);
        }
    }

    #[test]
    fn delta_method_accuracy() {
        for mi in -8..=8 {
            let m = mi as f64 * 0.5;
            for &v in &[0.001, 0.01, 0.05] {
                let err = (delta_softplus(m, v) - softplus_expectation(m, v)).abs();
                assert!(err < 1e-3, "m={m} ν={v} err={err}");
            }
        }
        // The approximation degrades as the variance grows; it is an
        // approximation, not a bound.
        let err = (delta_softplus(0.0, 1.0) - softplus_expectation(0.0, 1.0)).abs();
        assert!(err > 1e-3);
    }

    #[test]
    fn pair_mapping_sums_to_one() {
        let sr = vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![1.0, 0.0, 0.0],
        ];
        for a in 0..3 {
            for b in a..3 {
                let mut total = 0.0;
                for c in 0..3 {
                    for d in c..3 {
                        total += pair_mapping(&sr, a, b, c, d);
                    }
                }
                assert!((total - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn soft_counts_match_enumeration() {
        let net = Network::from_edges(4, [(0, 1), (1, 2), (0, 3)]).unwrap();
        let resp = vec![
            vec![0.7, 0.3],
            vec![0.1, 0.9],
            vec![0.5, 0.5],
            vec![1.0, 0.0],
        ];
        let c = soft_counts(&net, &resp);
        let mut edges = TriMatrix::filled(2, 0.0);
        let mut dyads = TriMatrix::filled(2, 0.0);
        for i in 0..4 {
            for j in i + 1..4 {
                let y = if net.has_edge(i, j) { 1.0 } else { 0.0 };
                for a in 0..2 {
                    for b in 0..2 {
                        let p = resp[i][a] * resp[j][b];
                        *edges.get_mut(a.min(b), a.max(b)) += y * p;
                        *dyads.get_mut(a.min(b), a.max(b)) += p;
                    }
                }
            }
        }
        for idx in 0..3 {
            assert!((c.edges.as_slice()[idx] - edges.as_slice()[idx]).abs() < 1e-12);
            assert!((c.dyads.as_slice()[idx] - dyads.as_slice()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn no_data_block_reduces_to_prior_mean() {
        let hp = Hyperparams::with_sizes(3, 2);
        let net = Network::from_edges(4, [(0, 1)]).unwrap();
        let mut vb = VbState::flat(&hp, 4);
        for row in &mut vb.resp {
            *row = vec![1.0, 0.0, 0.0];
        }
        vb.eta_mean = TriMatrix::from_fn(2, |a, b| (a + 2 * b) as f64 * 0.3);
        update_theta(&mut vb, &net);
        let (first, _) = vb.mapped_eta_moments();
        let prec = vb.sigma2_precision();
        for (a, b) in [(1, 1), (1, 2), (2, 2)] {
            assert!((vb.var.at(a, b) - 1.0 / prec).abs() < 1e-14);
            assert!((vb.mean.at(a, b) - first.at(a, b)).abs() < 1e-12);
        }
        for ((m, v), g) in vb
            .mean
            .as_slice()
            .iter()
            .zip(vb.var.as_slice())
            .zip(vb.aux.as_slice())
        {
            assert!((g * g - (v + m * m)).abs() <= 1e-15 * (v + m * m));
        }
    }

    /// Fixed point of repeated theta updates on a hard-assigned block maximises
    /// the one-dimensional relaxed objective, found here by nested golden
    /// section search.
    #[test]
    fn theta_fixed_point_maximises_relaxed_objective() {
        let hp = Hyperparams::with_sizes(2, 1);
        let net = Network::from_edges(6, [(0, 1), (0, 2), (1, 2), (3, 4), (0, 5)]).unwrap();
        let mut vb = VbState::flat(&hp, 6);
        for (i, row) in vb.resp.iter_mut().enumerate() {
            *row = if i < 3 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            };
        }
        vb.eta_mean.set(0, 0, 0.4);
        for _ in 0..500 {
            update_theta(&mut vb, &net);
        }
        let prec = vb.sigma2_precision();
        let g = 0.4;
        // block (0,1): 9 dyads, 1 edge
        let (s, n) = (1.0, 9.0);
        let objective = |m: f64, v: f64| {
            let gam = (m * m + v).sqrt();
            s * m - n * jj_softplus_bound(m, v, gam) - 0.5 * prec * ((m - g) * (m - g) + v)
                + 0.5 * v.ln()
        };
        let golden = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| {
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if f(c) > f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            0.5 * (a + b)
        };
        let best_v = |m: f64| golden(1e-6, 10.0, &|v| objective(m, v));
        let m_star = golden(-10.0, 10.0, &|m| objective(m, best_v(m)));
        let v_star = best_v(m_star);
        assert!(
            (vb.mean.at(0, 1) - m_star).abs() < 1e-6,
            "{} vs {m_star}",
            vb.mean.at(0, 1)
        );
        assert!((vb.var.at(0, 1) - v_star).abs() < 1e-6);
    }

    #[test]
    fn single_community_responsibilities() {
        let hp = Hyperparams::with_sizes(1, 1);
        let net = Network::from_edges(3, [(0, 1)]).unwrap();
        let mut vb = VbState::flat(&hp, 3);
        update_xi(&mut vb, &net, SoftplusExpectation::Bound, false);
        assert!(vb.resp.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn flat_logits_follow_weights() {
        let hp = Hyperparams::with_sizes(3, 1);
        let net = Network::from_edges(5, [(0, 1), (2, 3), (3, 4)]).unwrap();
        let mut vb = VbState::flat(&hp, 5);
        vb.w_conc = vec![1.0, 2.0, 4.0];
        for mode in [SoftplusExpectation::Bound, SoftplusExpectation::Delta] {
            update_xi(&mut vb, &net, mode, false);
            let elog = vb.expected_log_w();
            let lse = log_sum_exp(&elog);
            for row in &vb.resp {
                for (p, e) in row.iter().zip(&elog) {
                    assert!((p - (e - lse).exp()).abs() < 1e-12);
                }
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    /// Monte Carlo over q of ½Σ(θ − η_{φ(ζ)})² + β_σ.
    #[test]
    fn sigma2_scale_matches_monte_carlo() {
        let hp = Hyperparams::with_sizes(2, 2);
        let mut vb = VbState::flat(&hp, 4);
        vb.mean = TriMatrix::from_fn(2, |a, b| 0.5 - (a + b) as f64);
        vb.var = TriMatrix::from_fn(2, |a, b| 0.2 + 0.1 * (a * b) as f64);
        vb.super_resp = vec![vec![0.3, 0.7], vec![0.8, 0.2]];
        vb.eta_mean = TriMatrix::from_fn(2, |a, b| (a as f64) - 0.5 * b as f64);
        vb.eta_var = TriMatrix::from_fn(2, |a, b| 0.1 + 0.2 * (a + b) as f64);
        update_sigma2(&mut vb, &hp);
        let mut rng = stream_rng(11, 0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let zeta: Vec<usize> = vb
                .super_resp
                .iter()
                .map(|p| usize::from(rng.random::<f64>() >= p[0]))
                .collect();
            let eta = TriMatrix::from_fn(2, |a, b| {
                sample_normal(vb.eta_mean.at(a, b), vb.eta_var.at(a, b), &mut rng)
            });
            let mut s = 0.0;
            for (a, b, _) in vb.mean.iter() {
                let th = sample_normal(vb.mean.at(a, b), vb.var.at(a, b), &mut rng);
                let (x, y) = (zeta[a].min(zeta[b]), zeta[a].max(zeta[b]));
                s += (th - eta.at(x, y)).powi(2);
            }
            acc += 0.5 * s;
        }
        let mc = hp.sigma2_rate + acc / n as f64;
        assert!(
            (vb.sigma2_scale - mc).abs() < 0.02 * mc,
            "{} vs {mc}",
            vb.sigma2_scale
        );
        assert_eq!(vb.sigma2_shape, hp.sigma2_shape + 1.5);
    }

    #[test]
    fn eta_without_mass_is_prior() {
        let hp = Hyperparams::with_sizes(2, 2);
        let mut vb = VbState::flat(&hp, 4);
        vb.super_resp = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        vb.mu_mean = 0.7;
        update_eta(&mut vb);
        assert!((vb.eta_mean.at(1, 1) - 0.7).abs() < 1e-14);
        assert!((vb.eta_var.at(1, 1) - 1.0 / vb.tau2_precision()).abs() < 1e-14);
        assert!((vb.eta_mean.at(0, 1) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn single_supercommunity_is_certain() {
        let hp = Hyperparams::with_sizes(3, 1);
        let mut vb = VbState::flat(&hp, 4);
        update_zeta(&mut vb);
        assert!(vb.super_resp.iter().all(|r| r == &vec![1.0]));
    }

    /// Enumeration over ζ of the exact coordinate optimum for one row.
    #[test]
    fn zeta_update_matches_enumeration() {
        let hp = Hyperparams::with_sizes(3, 2);
        let mut vb = VbState::flat(&hp, 4);
        vb.mean = TriMatrix::from_fn(3, |a, b| if a == b { 1.5 } else { -1.0 + 0.3 * a as f64 });
        vb.var = TriMatrix::filled(3, 0.3);
        vb.eta_mean = TriMatrix::from_fn(2, |a, b| if a == b { 1.0 + a as f64 } else { -1.2 });
        vb.eta_var = TriMatrix::filled(2, 0.2);
        vb.super_resp = vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.8]];
        vb.v_conc = vec![2.0, 3.0];
        let prec = vb.sigma2_precision();
        let others = vb.super_resp.clone();
        // objective of row 0 as a function of its own label r, others averaged
        // by enumeration over their labels
        let log_v = vb.expected_log_v();
        let mut scores = [0.0; 2];
        for (r, score) in scores.iter_mut().enumerate() {
            let mut expected = 0.0;
            for z1 in 0..2 {
                for z2 in 0..2 {
                    let p = others[1][z1] * others[2][z2];
                    let z = [r, z1, z2];
                    let mut q = 0.0;
                    for (a, b, _) in vb.mean.iter() {
                        if a != 0 && b != 0 {
                            continue;
                        }
                        let (x, y) = (z[a].min(z[b]), z[a].max(z[b]));
                        let m = vb.mean.at(a, b);
                        let g = vb.eta_mean.at(x, y);
                        q += vb.var.at(a, b) + m * m - 2.0 * m * g + g * g + vb.eta_var.at(x, y);
                    }
                    expected += p * q;
                }
            }
            *score = log_v[r] - 0.5 * prec * expected;
        }
        let lse = log_sum_exp(&scores);
        update_zeta(&mut vb);
        for r in 0..2 {
            assert!((vb.super_resp[0][r] - (scores[r] - lse).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn mu_tau_plug_in() {
        let hp = Hyperparams::with_sizes(2, 1);
        let mut vb = VbState::flat(&hp, 3);
        vb.eta_mean.set(0, 0, 1.2);
        vb.eta_var.set(0, 0, 0.3);
        vb.tau2_shape = 3.0;
        vb.tau2_scale = 1.5;
        update_mu(&mut vb, &hp);
        let d2 = 1.0 / (2.0 + 1.0 / hp.mu_variance);
        assert!((vb.mu_var - d2).abs() < 1e-14);
        assert!((vb.mu_mean - d2 * (2.0 * 1.2 + hp.mu_mean / hp.mu_variance)).abs() < 1e-14);
        update_tau2(&mut vb, &hp);
        let c = vb.mu_mean;
        let b = hp.tau2_rate + 0.5 * (1.2 * 1.2 + 0.3) - c * 1.2 + 0.5 * (c * c + vb.mu_var);
        assert!((vb.tau2_scale - b).abs() < 1e-14);
        assert_eq!(vb.tau2_shape, hp.tau2_shape + 0.5);
    }

    #[test]
    fn weights_and_concentration() {
        let hp = Hyperparams::with_sizes(4, 2);
        let mut vb = VbState::flat(&hp, 10);
        update_w(&mut vb);
        let e_alpha = vb.alpha_shape / vb.alpha_rate;
        for c in &vb.w_conc {
            assert!((c - (e_alpha / 4.0 + 10.0 / 4.0)).abs() < 1e-12);
        }
        update_alpha(&mut vb, &hp);
        assert!(vb.alpha_rate >= hp.alpha_rate);
        assert_eq!(vb.alpha_shape, hp.alpha_shape + 3.0);
        assert!(!vb.rate_clamped);
    }

    #[test]
    fn concentration_step_never_lowers_bound() {
        let hp = Hyperparams::with_sizes(6, 3);
        let mut rng = stream_rng(8, 3);
        for _ in 0..200 {
            let mut vb = VbState::flat(&hp, 30);
            vb.w_conc = (0..6).map(|_| 0.05 + 10.0 * rng.random::<f64>()).collect();
            vb.alpha_shape = 0.1 + 20.0 * rng.random::<f64>();
            vb.alpha_rate = 0.1 + 5.0 * rng.random::<f64>();
            let elog = vb.expected_log_w();
            let f = |vb: &VbState| {
                concentration_objective(
                    hp.alpha_shape,
                    hp.alpha_rate,
                    vb.alpha_shape,
                    vb.alpha_rate,
                    &elog,
                )
            };
            let before = f(&vb);
            update_alpha(&mut vb, &hp);
            assert!(f(&vb) >= before - 1e-12 * before.abs());
        }
    }

    #[test]
    fn dirichlet_log_mean_matches_monte_carlo() {
        let conc = [0.5, 2.0, 7.0];
        let exact = dirichlet_log_means(&conc);
        let mut rng = stream_rng(3, 1);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let lw = crate::special::sample_dirichlet_log(&conc, &mut rng);
            for (a, l) in acc.iter_mut().zip(&lw) {
                *a += l;
            }
        }
        for (a, e) in acc.iter().zip(&exact) {
            assert!((a / n as f64 - e).abs() < 0.02, "{} vs {e}", a / n as f64);
        }
    }
}
