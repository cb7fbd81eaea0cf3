//! Shared test oracles, kept independent of the library's evaluation paths:
//! an adaptive Simpson integrator for exact logit-normal moments and a
//! brute-force enumeration of the underlying binary-outcome model.

#![allow(dead_code)]

use devtox::model::{Kernel, MixtureParams};
use nalgebra::Vector2;
use std::collections::HashMap;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_step(f, a, b, fa, fb, fm, simpson(a, b, fa, fm, fb), tol, 40)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
            + simpson_step(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
    }
}

/// ∫ φ(ψ)^k (1-φ(ψ))^(n-k) N(ψ | θ, σ²) dψ by adaptive Simpson over ±10σ.
pub fn logit_normal_power_integral(k: u32, n: u32, theta: f64, sigma2: f64) -> f64 {
    if sigma2 == 0.0 {
        let p = logistic(theta);
        return p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    let sd = sigma2.sqrt();
    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let f = |psi: f64| {
        let p = logistic(psi);
        let z = (psi - theta) / sd;
        p.powi(k as i32) * (1.0 - p).powi((n - k) as i32) * norm * (-0.5 * z * z).exp()
    };
    adaptive_simpson(&f, theta - 10.0 * sd, theta + 10.0 * sd, 1e-14)
}

/// Exact logit-normal integral ε(θ, σ²) by the oracle route.
pub fn eps_oracle(theta: f64, sigma2: f64) -> f64 {
    logit_normal_power_integral(1, 1, theta, sigma2)
}

/// Exact ∫ φ² N by the oracle route.
pub fn eps_square_oracle(theta: f64, sigma2: f64) -> f64 {
    logit_normal_power_integral(2, 2, theta, sigma2)
}

/// Exact intracluster correlation of the LNB kernel's underlying indicators.
pub fn exact_lnb_corr(theta: f64, sigma2: f64) -> f64 {
    let e1 = eps_oracle(theta, sigma2);
    let e2 = eps_square_oracle(theta, sigma2);
    (e2 - e1 * e1) / (e1 * (1.0 - e1))
}

/// The (R, y) probability table of the underlying binary-outcome mixture,
/// computed by enumerating every death-indicator path R̃ ∈ {0,1}^m and every
/// malformation path ỹ ∈ {0,1}^(m-ΣR̃). For the LNB kernel the shared latent
/// ψ of each stage is integrated per path with the Simpson oracle; for the
/// Binomial kernel the path probabilities are exact products.
pub fn underlying_model_table(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    m: u32,
) -> Vec<Vec<f64>> {
    let xv = Vector2::new(1.0, x);
    let weights = params.weights_at(&xv);
    let size = (m + 1) as usize;
    let mut table = vec![vec![0.0; size]; size];
    let mut cache: HashMap<(u32, u32, usize, usize), f64> = HashMap::new();
    let mut stage_path_prob = |count: u32, total: u32, stage: usize, comp: usize| -> f64 {
        if total == 0 {
            return 1.0;
        }
        let key = (count, total, stage, comp);
        if let Some(&v) = cache.get(&key) {
            return v;
        }
        let theta = params.theta(stage, comp, &xv);
        let v = match kernel {
            Kernel::Binomial => {
                let p = logistic(theta);
                p.powi(count as i32) * (1.0 - p).powi((total - count) as i32)
            }
            Kernel::Lnb => {
                let s2 = params.sigma2.expect("LNB params")[stage];
                logit_normal_power_integral(count, total, theta, s2)
            }
            Kernel::Bb => unreachable!("underlying oracle covers Binomial and LNB kernels"),
        };
        cache.insert(key, v);
        v
    };
    for (comp, &w) in weights.iter().enumerate() {
        // enumerate death-indicator paths
        for death_bits in 0u32..(1 << m) {
            let r = death_bits.count_ones();
            let live = m - r;
            let p_path1 = stage_path_prob(r, m, 0, comp);
            if live == 0 {
                table[r as usize][0] += w * p_path1;
                continue;
            }
            // enumerate malformation paths among the live pups
            for mal_bits in 0u32..(1 << live) {
                let y = mal_bits.count_ones();
                let p_path2 = stage_path_prob(y, live, 1, comp);
                table[r as usize][y as usize] += w * p_path1 * p_path2;
            }
        }
    }
    table
}

/// Total variation distance between two (R, y) tables.
pub fn table_tv(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut tv = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (&pa, &pb) in ra.iter().zip(rb) {
            tv += (pa - pb).abs();
        }
    }
    tv / 2.0
}

/// Random mixture parameters within a given atom/overdispersion box.
pub struct ParamBox {
    pub theta_range: (f64, f64),
    pub sigma2_range: (f64, f64),
}

pub fn random_mixture<R: rand::Rng>(
    rng: &mut R,
    l: usize,
    kernel: Kernel,
    bounds: &ParamBox,
) -> MixtureParams {
    use devtox::model::WeightState;
    let (tlo, thi) = bounds.theta_range;
    let mut betas = [Vec::with_capacity(l), Vec::with_capacity(l)];
    for j in 0..2 {
        for _ in 0..l {
            // intercept-only atoms so the evaluated theta stays in the box
            betas[j].push(Vector2::new(tlo + (thi - tlo) * rng.random::<f64>(), 0.0));
        }
    }
    let weight_state = if l == 1 {
        WeightState::Single
    } else {
        let v = (0..l - 1)
            .map(|_| 0.05 + 0.9 * rng.random::<f64>())
            .collect();
        WeightState::Common { v, alpha: 1.0 }
    };
    let sigma2 = match kernel {
        Kernel::Lnb => {
            let (slo, shi) = bounds.sigma2_range;
            Some([
                slo + (shi - slo) * rng.random::<f64>(),
                slo + (shi - slo) * rng.random::<f64>(),
            ])
        }
        _ => None,
    };
    MixtureParams {
        betas,
        weight_state,
        sigma2,
        bb_lambda: None,
    }
}
