//! Random-variate generation and exact/quadrature evaluation of the
//! distribution families the samplers and risk formulas are built on:
//! the standard logistic link, Gauss–Hermite rules for logit-normal
//! integrals, Beta-Binomial and Logistic-Normal-Binomial masses, the
//! Pólya-Gamma sampler, and the usual conjugate families.

pub(crate) mod polya_gamma;
mod quadrature;
mod sampling;

pub use polya_gamma::{sample_polya_gamma, sample_polya_gamma_mean};
pub use quadrature::{logit_normal_integral, logit_normal_square_integral, QuadratureRule};
pub use sampling::{
    sample_beta, sample_gamma_rate, sample_inverse_gamma, sample_inverse_wishart2, sample_mvn2,
    sample_shifted_poisson, sample_std_normal, sample_wishart2,
};

use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Standard logistic function exp(x)/(1+exp(x)), overflow-safe on both tails.
///
/// NaN input yields NaN output.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log φ(x), computed as -softplus(-x).
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// log(1 - φ(x)) = log φ(-x).
pub fn log_logistic_complement(x: f64) -> f64 {
    -softplus(x)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// log of the binomial coefficient C(m, k) via log-gamma.
pub fn ln_choose(m: u32, k: u32) -> f64 {
    debug_assert!(k <= m);
    ln_gamma(f64::from(m) + 1.0) - ln_gamma(f64::from(k) + 1.0) - ln_gamma(f64::from(m - k) + 1.0)
}

/// Binomial pmf Bin(y | m, p), in log space with exact handling of p ∈ {0, 1}.
pub fn binomial_pmf(y: u32, m: u32, p: f64) -> f64 {
    ln_binomial_pmf(y, m, p).exp()
}

/// log Bin(y | m, p); returns -inf where the mass is zero.
pub fn ln_binomial_pmf(y: u32, m: u32, p: f64) -> f64 {
    debug_assert!(y <= m);
    if p <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if y == m { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(m, y) + f64::from(y) * p.ln() + f64::from(m - y) * p.ln_1p_neg()
}

/// ln(1 - x) computed as ln_1p(-x).
trait Ln1pNeg {
    fn ln_1p_neg(self) -> f64;
}
impl Ln1pNeg for f64 {
    fn ln_1p_neg(self) -> f64 {
        (-self).ln_1p()
    }
}

/// Beta-Binomial mass BB(y | m, θ, λ) with mean parameter φ(θ) and
/// dispersion λ: the Binomial mixed over Beta(λφ(θ), λ(1-φ(θ))).
///
/// Computed exactly in log space via log-gamma.
pub fn bb_pmf(y: u32, m: u32, theta: f64, lambda: f64) -> Result<f64> {
    if y > m {
        return Err(Error::invalid(format!("bb_pmf: y={y} exceeds m={m}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!(
            "bb_pmf: dispersion lambda must be positive, got {lambda}"
        )));
    }
    let p = logistic(theta);
    let a = lambda * p;
    let b = lambda * (1.0 - p);
    let yf = f64::from(y);
    let mf = f64::from(m);
    // C(m,y) B(y+a, m-y+b) / B(a, b)
    let ln = ln_choose(m, y) + ln_gamma(yf + a) + ln_gamma(mf - yf + b) - ln_gamma(mf + lambda)
        + ln_gamma(lambda)
        - ln_gamma(a)
        - ln_gamma(b);
    Ok(ln.exp())
}

/// Logistic-Normal-Binomial mass LNB(y | m, θ, σ²): the Binomial with
/// success probability φ(ψ) mixed over ψ ~ N(θ, σ²), evaluated with the
/// supplied Gauss–Hermite rule. σ² = 0 falls back to the exact Binomial.
pub fn lnb_pmf(y: u32, m: u32, theta: f64, sigma2: f64, rule: &QuadratureRule) -> Result<f64> {
    if y > m {
        return Err(Error::invalid(format!("lnb_pmf: y={y} exceeds m={m}")));
    }
    if sigma2 < 0.0 {
        return Err(Error::invalid(format!(
            "lnb_pmf: sigma2 must be nonnegative, got {sigma2}"
        )));
    }
    if sigma2 == 0.0 {
        return Ok(binomial_pmf(y, m, logistic(theta)));
    }
    let scale = (2.0 * sigma2).sqrt();
    let ln_coeff = ln_choose(m, y);
    let yf = f64::from(y);
    let mrf = f64::from(m - y);
    let mut acc = 0.0;
    for (&node, &w) in rule.nodes().iter().zip(rule.weights()) {
        let psi = theta + scale * node;
        let ln_term = ln_coeff + yf * log_logistic(psi) + mrf * log_logistic_complement(psi);
        acc += w * ln_term.exp();
    }
    Ok(acc * quadrature::INV_SQRT_PI)
}

/// Second-order Taylor approximations (around the kernel mean) of the
/// marginal mean and intracluster correlation of the LNB's underlying
/// Bernoulli indicators. Returns (approx_mean, approx_corr).
///
/// φ'' is expressed through φ as φ(1-φ)(1-2φ) to avoid cancellation.
pub fn taylor_lnb_moments(theta: f64, sigma2: f64) -> (f64, f64) {
    let p = logistic(theta);
    let d1 = p * (1.0 - p);
    let d2 = d1 * (1.0 - 2.0 * p);
    let mean = p + 0.5 * sigma2 * d2;
    let one_minus_2p = 1.0 - 2.0 * p;
    let num = sigma2 * d1 * (4.0 - sigma2 * one_minus_2p * one_minus_2p);
    let den = 4.0 + sigma2 * one_minus_2p * (2.0 - 4.0 * p - sigma2 * d2);
    (mean, num / den)
}
