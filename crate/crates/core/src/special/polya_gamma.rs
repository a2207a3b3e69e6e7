//! Pólya-Gamma draws: Devroye's alternating-series sampler for PG(1, c),
//! summed for small integer shapes and moment-matched Gaussian above.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use std::f64::consts::PI;

use super::log_norm_cdf;

/// Crossing point between the left (inverse-Gaussian) and right
/// (exponential) envelope pieces of the Jacobi density. 0.64 is close to
/// the value that maximises acceptance for the PG(1, 0) case.
const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;

/// Shapes up to this value are drawn exactly as a sum of PG(1, c) draws.
pub const DEFAULT_EXACT_MAX: u64 = 50;

/// E[PG(b, c)] = b tanh(c/2) / (2c), with the c → 0 limit b/4.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        // series: b/4 (1 - c²/12)
        b * 0.25 * (1.0 - c * c / 12.0)
    } else {
        b * (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Var[PG(b, c)] = b (sinh c − c) / (4 c³ cosh²(c/2)), with limit b/24.
pub fn pg_variance(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1.0 {
        // (sinh c − c) / c³ = Σ_j c^{2j} / (2j + 3)!, avoids the cancellation
        let c2 = c * c;
        let mut term = 1.0 / 6.0;
        let mut ratio = term;
        for j in 1..12 {
            let d = (2 * j + 2) as f64 * (2 * j + 3) as f64;
            term *= c2 / d;
            ratio += term;
        }
        let ch = (0.5 * c).cosh();
        b * ratio / (4.0 * ch * ch)
    } else if c > 700.0 {
        // sinh c / cosh²(c/2) overflows here but tends to 2
        b * (1.0 - 2.0 * c * (-c).exp()) / (2.0 * c * c * c)
    } else {
        let ch = (0.5 * c).cosh();
        b * (c.sinh() - c) / (4.0 * c * c * c * ch * ch)
    }
}

/// Pólya-Gamma sampler for integer shape `b` and real tilt `c`.
#[derive(Debug, Clone, Copy)]
pub struct PolyaGamma {
    exact_max: u64,
}

impl Default for PolyaGamma {
    fn default() -> Self {
        Self {
            exact_max: DEFAULT_EXACT_MAX,
        }
    }
}

impl PolyaGamma {
    pub fn new(exact_max: u64) -> Self {
        Self { exact_max }
    }

    pub fn exact_max(&self) -> u64 {
        self.exact_max
    }

    /// Draw PG(b, c). Returns exactly 0 when `b == 0`.
    pub fn sample<R: Rng + ?Sized>(&self, b: u64, c: f64, rng: &mut R) -> f64 {
        if b == 0 {
            return 0.0;
        }
        if b <= self.exact_max {
            return (0..b).map(|_| sample_pg1(c, rng)).sum();
        }
        let mean = pg_mean(b as f64, c);
        let sd = pg_variance(b as f64, c).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        (mean + sd * z).max(f64::MIN_POSITIVE)
    }
}

/// Exact PG(1, c) draw.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    // work with J*(1, z) where PG(1, c) = J*(1, c/2) / 4
    let z = 0.5 * c.abs();
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let p_exp = exponential_piece_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Probability of proposing from the right-hand exponential piece.
fn exponential_piece_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let b = (t * z - 1.0) / t.sqrt();
    let a = -(t * z + 1.0) / t.sqrt();
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Piecewise coefficient a_n(x) of the alternating series for the J*(1, 0) density.
fn series_coef(n: u32, x: f64) -> f64 {
    let h = n as f64 + 0.5;
    let k = h * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Inverse-Gaussian(1/z, 1) restricted to (0, TRUNC).
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if z < TRUNC_RECIP {
        // mean above the truncation point: propose from the z = 0 case and
        // accept with the exponential tilt
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    let d = 1.0 + e1 * t;
                    break t / (d * d);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}
