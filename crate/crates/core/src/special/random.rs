//! Seeded RNG streams and the standard variate generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub type ChainRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + variance.sqrt() * z
}

/// Gamma with shape/rate parameterisation (mean `shape / rate`).
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// `log X` for `X ~ Gamma(shape, 1)`, stable for tiny shapes where `X`
/// itself underflows.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        return sample_gamma(shape, 1.0, rng).ln();
    }
    // G(a) = G(a + 1) U^{1/a}
    let g = sample_gamma(shape + 1.0, 1.0, rng).ln();
    let u: f64 = rng.random::<f64>();
    g + u.max(f64::MIN_POSITIVE).ln() / shape
}

/// `X ~ IG(shape, rate)` ⟺ `1/X ~ Gamma(shape, rate)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    1.0 / sample_gamma(shape, rate, rng)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters must be positive")
        .sample(rng)
}

/// Dirichlet draw returned as log-weights; safe for very small concentrations.
pub fn sample_dirichlet_log<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = conc.iter().map(|&a| sample_log_gamma(a, rng)).collect();
    let norm = super::log_sum_exp(&logs);
    for l in &mut logs {
        *l -= norm;
    }
    logs
}

pub fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    sample_dirichlet_log(conc, rng)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Index drawn with probability proportional to `exp(log_weights[k])`.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllNegInfinite);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite {
            component: "categorical log-weights".into(),
        });
    }
    let total: f64 = log_weights.iter().map(|&l| (l - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &l) in log_weights.iter().enumerate() {
        let p = (l - max).exp();
        if p > 0.0 {
            last = k;
            if u < p {
                return Ok(k);
            }
            u -= p;
        }
    }
    Ok(last)
}
