//! Draws from the standard families the Gibbs updates compose: bivariate
//! normals via Cholesky, (inverse-)Wishart via Bartlett, inverse-gamma,
//! Beta, rate-parameterized Gamma, and the shifted Poisson implant model.

use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Poisson, StandardNormal};

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Bivariate normal draw via the Cholesky factor of the covariance.
pub fn sample_mvn2<R: Rng + ?Sized>(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    rng: &mut R,
) -> Result<Vector2<f64>> {
    let chol = nalgebra::linalg::Cholesky::new(*cov)
        .ok_or_else(|| Error::numerical("sample_mvn2", "covariance not positive definite"))?;
    let z = Vector2::new(sample_std_normal(rng), sample_std_normal(rng));
    Ok(mean + chol.l() * z)
}

/// Wishart(df, scale) draw via the Bartlett decomposition (2×2).
pub fn sample_wishart2<R: Rng + ?Sized>(
    df: f64,
    scale: &Matrix2<f64>,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    if df < 2.0 {
        return Err(Error::invalid(format!(
            "sample_wishart2: df must be >= dimension 2, got {df}"
        )));
    }
    let chol = nalgebra::linalg::Cholesky::new(*scale)
        .ok_or_else(|| Error::numerical("sample_wishart2", "scale not positive definite"))?;
    let c11 = chi_square(df, rng).sqrt();
    let c22 = chi_square(df - 1.0, rng).sqrt();
    let n21: f64 = sample_std_normal(rng);
    let a = Matrix2::new(c11, 0.0, n21, c22);
    let la = chol.l() * a;
    Ok(la * la.transpose())
}

/// Inverse-Wishart draw, parameterized so that `lambda` is the scale matrix
/// Λ of IW(df, Λ⁻¹): W ~ Wishart(df, Λ⁻¹), returns W⁻¹.
pub fn sample_inverse_wishart2<R: Rng + ?Sized>(
    df: f64,
    lambda: &Matrix2<f64>,
    rng: &mut R,
) -> Result<Matrix2<f64>> {
    let lambda_inv = lambda
        .try_inverse()
        .ok_or_else(|| Error::numerical("sample_inverse_wishart2", "singular scale matrix"))?;
    let w = sample_wishart2(df, &lambda_inv, rng)?;
    let inv = w
        .try_inverse()
        .ok_or_else(|| Error::numerical("sample_inverse_wishart2", "singular Wishart draw"))?;
    // symmetrize against accumulated rounding
    Ok((inv + inv.transpose()) * 0.5)
}

fn chi_square<R: Rng + ?Sized>(df: f64, rng: &mut R) -> f64 {
    GammaDist::new(df / 2.0, 2.0)
        .expect("chi-square degrees of freedom must be positive")
        .sample(rng)
}

/// Inverse-gamma IG(shape, rate): density ∝ x^{-shape-1} e^{-rate/x}.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "IG parameters must be positive");
    let g = GammaDist::new(shape, 1.0 / rate)
        .expect("validated above")
        .sample(rng);
    1.0 / g
}

/// Gamma with shape/rate parameterization (mean shape/rate).
pub fn sample_gamma_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    assert!(shape > 0.0 && rate > 0.0, "Gamma parameters must be positive");
    GammaDist::new(shape, 1.0 / rate)
        .expect("validated above")
        .sample(rng)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    BetaDist::new(a, b)
        .expect("Beta parameters must be positive")
        .sample(rng)
}

/// Shifted Poisson on {1, 2, ...}: 1 + Poisson(rate), so the mean is rate + 1.
pub fn sample_shifted_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    assert!(rate > 0.0, "shifted Poisson rate must be positive");
    let draw: f64 = Poisson::new(rate).expect("validated above").sample(rng);
    1 + draw as u32
}
