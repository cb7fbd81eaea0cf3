//! Exact Pólya-Gamma sampling.
//!
//! PG(1, c) draws use the alternating-series rejection sampler of Polson,
//! Scott & Windle (the Devroye-style scheme on the tilted Jacobi density);
//! integer shapes b ≥ 1 use additivity, which is all the Gibbs updates need.

use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

/// Truncation point splitting the Jacobi density into the inverse-Gaussian
/// head and the exponential tail (Devroye's 0.64).
const TRUNC: f64 = 0.64;
const PI_SQ_OVER_8: f64 = std::f64::consts::PI * std::f64::consts::PI / 8.0;

/// Draw from PG(b, c) for integer shape b ≥ 1 as a sum of b PG(1, c) draws.
///
/// Non-integer shapes are outside the supported domain (the samplers only
/// ever need integer shapes) and are rejected by the signature.
pub fn sample_polya_gamma<R: Rng + ?Sized>(b: u32, c: f64, rng: &mut R) -> Result<f64> {
    if b == 0 {
        return Err(Error::invalid("sample_polya_gamma: shape b must be >= 1"));
    }
    let mut total = 0.0;
    for _ in 0..b {
        total += pg1(c, rng);
    }
    Ok(total)
}

/// Analytic mean of PG(b, c): b·tanh(c/2)/(2c), with the c → 0 limit b/4.
pub fn sample_polya_gamma_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-8 {
        // tanh(c/2)/(2c) = 1/4 - c²/48 + O(c⁴)
        b * (0.25 - c * c / 48.0)
    } else {
        b * (c / 2.0).tanh() / (2.0 * c)
    }
}

/// Internal PG(b, c) draw that treats shape 0 as the degenerate point mass
/// at zero (the empty second continuation stage).
pub(crate) fn pg_int<R: Rng + ?Sized>(b: u32, c: f64, rng: &mut R) -> f64 {
    let mut total = 0.0;
    for _ in 0..b {
        total += pg1(c, rng);
    }
    total
}

/// One PG(1, c) draw. PG(1, c) = X/4 where X follows the Jacobi density
/// tilted by z = |c|/2.
fn pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = c.abs() / 2.0;
    let fz = PI_SQ_OVER_8 + z * z / 2.0;
    let p_exp = mass_texpon(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            // exponential tail beyond TRUNC
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            rtigauss(z, rng)
        };
        // squeeze via the alternating series of the Jacobi density at x
        let mut s = a_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= a_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += a_coef(n, x);
                if y > s {
                    break; // reject, retry with a fresh proposal
                }
            }
        }
    }
}

/// Probability that the mixture proposal takes the exponential-tail branch.
fn mass_texpon(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let q_div_p = 4.0 / std::f64::consts::PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_div_p)
}

/// Series coefficients of the Jacobi density; the two branches are the
/// left (inverse-Gaussian-like) and right (exponential-like) expansions.
fn a_coef(n: usize, x: f64) -> f64 {
    let np = n as f64 + 0.5;
    let pi = std::f64::consts::PI;
    if x > TRUNC {
        pi * np * (-np * np * pi * pi * x / 2.0).exp()
    } else {
        (2.0 / (pi * x)).powf(1.5) * pi * np * (-2.0 * np * np / x).exp()
    }
}

/// Inverse-Gaussian IG(1/z, 1) truncated to (0, TRUNC].
fn rtigauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if z < 1.0 / t {
        // mean above the truncation point: rejection from the scaled
        // one-sided stable proposal, thinned by the tilt exp(-z²x/2)
        loop {
            let x = loop {
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break t / (1.0 + t * e1) / (1.0 + t * e1);
                }
            };
            if rng.random::<f64>() <= (-0.5 * z * z * x).exp() {
                return x;
            }
        }
    } else {
        // mean inside (0, t]: draw IG(mu, 1) until it lands in range
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let mut x = mu + 0.5 * mu * mu * y
                - 0.5 * mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// log Φ(x) via erfc; underflow maps to -inf, which the caller exponentiates
/// back to a vanishing mixture mass.
fn ln_norm_cdf(x: f64) -> f64 {
    let c = 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    if c > 0.0 {
        c.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mc_mean_se(b: u32, c: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = sample_polya_gamma(b, c, &mut rng).unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn pg_mean_at_zero_tilt() {
        let (mean, se) = mc_mean_se(1, 0.0, 200_000, 11);
        assert!((mean - 0.25).abs() < 3.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn pg_mean_tilted() {
        let expect = sample_polya_gamma_mean(1.0, 2.0);
        assert!((expect - 0.190_398_538_988_941_2).abs() < 1e-12); // tanh(1)/4
        let (mean, se) = mc_mean_se(1, 2.0, 200_000, 12);
        assert!((mean - expect).abs() < 3.0 * se, "mean={mean} se={se}");
        // sign of the tilt is irrelevant
        let (mean_neg, se_neg) = mc_mean_se(1, -2.0, 200_000, 13);
        assert!((mean_neg - expect).abs() < 3.0 * se_neg);
    }

    #[test]
    fn pg_additive_in_shape() {
        let (mean, se) = mc_mean_se(3, 0.0, 100_000, 14);
        assert!((mean - 0.75).abs() < 3.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn pg_large_tilt_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for c in [15.0, 80.0, 400.0] {
            let x = sample_polya_gamma(1, c, &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
            let m = sample_polya_gamma_mean(1.0, c);
            // draws concentrate near the mean at large |c|
            assert!(x < 20.0 * m, "c={c} x={x} mean={m}");
        }
    }

    #[test]
    fn pg_rejects_zero_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        assert!(sample_polya_gamma(0, 1.0, &mut rng).is_err());
    }
}
