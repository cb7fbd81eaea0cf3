//! Gauss–Hermite quadrature (physicists' convention, weight e^{-x²}) and the
//! logit-normal integrals it evaluates.

use crate::{Error, Result};
use nalgebra::DMatrix;
use std::sync::OnceLock;

use super::logistic;

pub(crate) const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3; // 1/√π

/// A Gauss–Hermite rule: ∫ f(x) e^{-x²} dx ≈ Σ wᵢ f(xᵢ).
///
/// Nodes are sorted ascending; weights are positive and sum to √π.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Build the rule of the given order by the Golub–Welsch method: nodes are
    /// the eigenvalues of the Jacobi matrix (off-diagonal √(k/2)), weights are
    /// √π times the squared first components of the normalized eigenvectors.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be at least 1");
        if order == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![std::f64::consts::PI.sqrt()],
            };
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let eig = nalgebra::linalg::SymmetricEigen::new(jacobi);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let w = sqrt_pi * eig.eigenvectors[(0, i)].powi(2);
                (node, w)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// The shared default rule (order 30) used throughout the pipeline.
    pub fn shared() -> &'static QuadratureRule {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| QuadratureRule::gauss_hermite(30))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Validate the structural invariants (paired lengths, positive weights,
    /// weight sum √π within 1e-12).
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.weights.len() {
            return Err(Error::invalid("quadrature nodes/weights length mismatch"));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("quadrature weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - std::f64::consts::PI.sqrt()).abs() > 1e-12 {
            return Err(Error::numerical(
                "quadrature",
                format!("weight sum {total} deviates from sqrt(pi)"),
            ));
        }
        Ok(())
    }
}

/// The logit-normal integral ε(θ, σ²) = ∫ φ(ψ) N(ψ | θ, σ²) dψ.
///
/// σ² = 0 returns φ(θ) exactly.
pub fn logit_normal_integral(theta: f64, sigma2: f64, rule: &QuadratureRule) -> f64 {
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    if sigma2 == 0.0 {
        return logistic(theta);
    }
    let scale = (2.0 * sigma2).sqrt();
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * logistic(theta + scale * x);
    }
    acc * INV_SQRT_PI
}

/// ∫ φ²(ψ) N(ψ | θ, σ²) dψ, the cross-moment needed by the overdispersed
/// intracluster correlations. σ² = 0 returns φ(θ)².
pub fn logit_normal_square_integral(theta: f64, sigma2: f64, rule: &QuadratureRule) -> f64 {
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    if sigma2 == 0.0 {
        let p = logistic(theta);
        return p * p;
    }
    let scale = (2.0 * sigma2).sqrt();
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let p = logistic(theta + scale * x);
        acc += w * p * p;
    }
    acc * INV_SQRT_PI
}
