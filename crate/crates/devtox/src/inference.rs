//! Posterior risk-assessment functionals: dose-response curves, intracluster
//! correlations, effective/benchmark dose, conditional pmfs, and posterior
//! predictive sampling.

use crate::distributions::{
    binomial_pmf, logistic, logit_normal_integral, logit_normal_square_integral, sample_beta,
    sample_shifted_poisson, QuadratureRule,
};
use crate::mcmc::Chain;
use crate::model::{covariate, Dataset, Kernel, KernelParams, MixtureParams};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// The three endpoints of the risk assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Embryolethality,
    Malformation,
    CombinedRisk,
}

impl Endpoint {
    pub const ALL: [Endpoint; 3] = [
        Endpoint::Embryolethality,
        Endpoint::Malformation,
        Endpoint::CombinedRisk,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Endpoint::Embryolethality => "embryolethality",
            Endpoint::Malformation => "malformation",
            Endpoint::CombinedRisk => "combined-risk",
        }
    }

    /// Observed-proportion for this endpoint; None when the denominator is
    /// empty (malformation ratio of a dam with no live implants).
    pub fn ratio(&self, m: u32, r: u32, y: u32) -> Option<f64> {
        match self {
            Endpoint::Embryolethality => Some(f64::from(r) / f64::from(m)),
            Endpoint::Malformation => {
                let live = m - r;
                if live == 0 {
                    None
                } else {
                    Some(f64::from(y) / f64::from(live))
                }
            }
            Endpoint::CombinedRisk => Some(f64::from(r + y) / f64::from(m)),
        }
    }
}

/// Kernel mean of the first/second-stage success indicator: φ(θ) for the
/// Binomial and BB kernels, ε(θ, σ²) for the LNB kernel.
fn stage_mean(theta: f64, kernel: &KernelParams, stage: usize, rule: &QuadratureRule) -> f64 {
    match kernel {
        KernelParams::Binomial | KernelParams::Bb { .. } => logistic(theta),
        KernelParams::Lnb { sigma2 } => logit_normal_integral(theta, sigma2[stage], rule),
    }
}

/// E[p²] of the stage success probability, used by the correlations:
/// φ(θ)² (Binomial), the Beta second moment (BB), ∫φ²N (LNB).
fn stage_square_mean(
    theta: f64,
    kernel: &KernelParams,
    stage: usize,
    rule: &QuadratureRule,
) -> f64 {
    match kernel {
        KernelParams::Binomial => {
            let p = logistic(theta);
            p * p
        }
        KernelParams::Bb { lambda } => {
            let lam = lambda[stage];
            let a = lam * logistic(theta);
            a * (a + 1.0) / (lam * (lam + 1.0))
        }
        KernelParams::Lnb { sigma2 } => logit_normal_square_integral(theta, sigma2[stage], rule),
    }
}

/// E[(1-p)²] of the stage success probability.
fn stage_complement_square_mean(
    theta: f64,
    kernel: &KernelParams,
    stage: usize,
    rule: &QuadratureRule,
) -> f64 {
    match kernel {
        KernelParams::Binomial => {
            let q = 1.0 - logistic(theta);
            q * q
        }
        KernelParams::Bb { lambda } => {
            let lam = lambda[stage];
            let b = lam * (1.0 - logistic(theta));
            b * (b + 1.0) / (lam * (lam + 1.0))
        }
        KernelParams::Lnb { sigma2 } => {
            // (1-p)² = 1 - 2p + p²
            1.0 - 2.0 * logit_normal_integral(theta, sigma2[stage], rule)
                + logit_normal_square_integral(theta, sigma2[stage], rule)
        }
    }
}

/// One draw of the three dose-response curves at dose x:
/// D = Σ ω_ℓ p₁ℓ, M = Σ ω_ℓ (1-p₁ℓ) p₂ℓ / Σ ω_ℓ (1-p₁ℓ),
/// r = 1 - Σ ω_ℓ (1-p₁ℓ)(1-p₂ℓ), with pⱼℓ the kernel stage means.
pub fn dose_response_draw(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    rule: &QuadratureRule,
) -> Result<(f64, f64, f64)> {
    let kp = params.kernel_params(kernel)?;
    let xv = covariate(x);
    let weights = params.weights_at(&xv);
    let mut d = 0.0;
    let mut surv = 0.0;
    let mut m_num = 0.0;
    let mut joint_surv = 0.0;
    for (l, &w) in weights.iter().enumerate() {
        let p1 = stage_mean(params.theta(0, l, &xv), &kp, 0, rule);
        let p2 = stage_mean(params.theta(1, l, &xv), &kp, 1, rule);
        d += w * p1;
        surv += w * (1.0 - p1);
        m_num += w * (1.0 - p1) * p2;
        joint_surv += w * (1.0 - p1) * (1.0 - p2);
    }
    if surv <= f64::MIN_POSITIVE {
        return Err(Error::numerical(
            "dose_response_draw",
            format!("survival mass vanished at dose {x}; M undefined"),
        ));
    }
    Ok((d, m_num / surv, 1.0 - joint_surv))
}

/// One draw of the intracluster correlation at dose x for category j
/// (1 = non-viable, 2 = malformed, 3 = normal). Convention: the third
/// category's own stage factor is the constant 1 (φ(θ₃) ≡ 1, σ₃² = 0).
pub fn intracluster_corr_draw(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    category: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(1..=3).contains(&category) {
        return Err(Error::invalid(format!(
            "category must be 1, 2, or 3, got {category}"
        )));
    }
    let kp = params.kernel_params(kernel)?;
    let xv = covariate(x);
    let weights = params.weights_at(&xv);
    let mut e = 0.0; // E[Y_qj]
    let mut e_pair = 0.0; // E[Y_qj Y_q'j]
    for (l, &w) in weights.iter().enumerate() {
        let t1 = params.theta(0, l, &xv);
        let t2 = params.theta(1, l, &xv);
        // marginal and pairwise cell factors per category, built from the
        // stage means and square means of the two continuation stages
        let (cell, cell_pair) = match category {
            1 => (
                stage_mean(t1, &kp, 0, rule),
                stage_square_mean(t1, &kp, 0, rule),
            ),
            2 => (
                (1.0 - stage_mean(t1, &kp, 0, rule)) * stage_mean(t2, &kp, 1, rule),
                stage_complement_square_mean(t1, &kp, 0, rule)
                    * stage_square_mean(t2, &kp, 1, rule),
            ),
            _ => (
                (1.0 - stage_mean(t1, &kp, 0, rule)) * (1.0 - stage_mean(t2, &kp, 1, rule)),
                stage_complement_square_mean(t1, &kp, 0, rule)
                    * stage_complement_square_mean(t2, &kp, 1, rule),
            ),
        };
        e += w * cell;
        e_pair += w * cell_pair;
    }
    let var = e * (1.0 - e);
    if var <= f64::MIN_POSITIVE {
        return Err(Error::numerical(
            "intracluster_corr_draw",
            format!("degenerate category-{category} probability {e} at dose {x}"),
        ));
    }
    Ok((e_pair - e * e) / var)
}

/// Outcome of a single-draw effective-dose inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdOutcome {
    /// Smallest dose in [0, search_max] achieving the benchmark response.
    Dose(f64),
    /// The curve never reaches the target excess risk on the bracket.
    Censored,
}

/// Solve (P(ED) - P(0)) / (1 - P(0)) = alpha for the smallest root in
/// [0, search_max] by grid bracketing plus bisection (absolute dose
/// tolerance 1e-6; curves may be non-monotone, so the first sign change
/// is taken).
pub fn effective_dose<F>(curve: F, alpha: f64, search_max: f64) -> Result<EdOutcome>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("BMR must lie in (0,1), got {alpha}")));
    }
    if !(search_max > 0.0) {
        return Err(Error::invalid("search_max must be positive"));
    }
    let p0 = curve(0.0)?;
    if p0 >= 1.0 {
        return Err(Error::numerical(
            "effective_dose",
            "control response is 1; excess risk undefined",
        ));
    }
    let target = alpha * (1.0 - p0);
    let g = |x: f64| -> Result<f64> { Ok(curve(x)? - p0 - target) };
    const GRID: usize = 256;
    let step = search_max / GRID as f64;
    let mut lo = 0.0;
    let mut glo = -target; // g(0)
    let mut bracket = None;
    for i in 1..=GRID {
        let hi = step * i as f64;
        let ghi = g(hi)?;
        if glo <= 0.0 && ghi > 0.0 {
            bracket = Some((lo, hi, ghi));
            break;
        }
        lo = hi;
        glo = ghi;
    }
    let (mut lo, mut hi, _) = match bracket {
        Some(b) => b,
        None => return Ok(EdOutcome::Censored),
    };
    // bisect well below the 1e-6 dose tolerance so the residual in
    // probability units also lands under 1e-6 for unit-scale slopes
    for _ in 0..80 {
        if hi - lo < 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(EdOutcome::Dose(0.5 * (lo + hi)))
}

/// Type-7 empirical quantile (linear interpolation of order statistics).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Benchmark dose: the left endpoint of the `level` credible interval of the
/// effective-dose posterior, i.e. the (1-level)/2 type-7 quantile.
pub fn bmd(ed_samples: &[f64], level: f64) -> Result<f64> {
    if ed_samples.is_empty() {
        return Err(Error::invalid("bmd requires at least one ED sample"));
    }
    let mut sorted = ed_samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_type7(&sorted, (1.0 - level) / 2.0))
}

/// Dose-independent shifted-Poisson implant model: m - 1 ~ Poisson(rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplantModel {
    pub rate: f64,
}

/// Maximum-likelihood fit of the shifted Poisson, pooled across doses:
/// rate = mean(m) - 1, floored at 1e-6 when every dam has one implant.
pub fn fit_implant_model(data: &Dataset) -> Result<ImplantModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit implant model to empty data"));
    }
    let mean = data
        .records()
        .iter()
        .map(|r| f64::from(r.implants))
        .sum::<f64>()
        / data.n_dams() as f64;
    Ok(ImplantModel {
        rate: (mean - 1.0).max(1e-6),
    })
}

/// One posterior predictive response (m*, R*, y*) from a single parameter
/// draw at dose x: implants from the shifted Poisson, a component from the
/// dose-local weights, then the kernel's own two-stage generative path.
pub fn predictive_response<R: Rng + ?Sized>(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    implant: &ImplantModel,
    rng: &mut R,
) -> Result<(u32, u32, u32)> {
    let m = sample_shifted_poisson(implant.rate, rng);
    let (r, y) = sample_kernel_response(params, kernel, x, m, rng)?;
    Ok((m, r, y))
}

/// Sample (R, y) given m from the mixture at dose x.
pub fn sample_kernel_response<R: Rng + ?Sized>(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    m: u32,
    rng: &mut R,
) -> Result<(u32, u32)> {
    let kp = params.kernel_params(kernel)?;
    let xv = covariate(x);
    let weights = params.weights_at(&xv);
    let l = sample_categorical(&weights, rng);
    let t1 = params.theta(0, l, &xv);
    let t2 = params.theta(1, l, &xv);
    let p1 = stage_prob_draw(t1, &kp, 0, rng);
    let r = sample_binomial(m, p1, rng);
    let live = m - r;
    let y = if live == 0 {
        0
    } else {
        let p2 = stage_prob_draw(t2, &kp, 1, rng);
        sample_binomial(live, p2, rng)
    };
    Ok((r, y))
}

/// Draw the latent stage probability: φ(θ) (Binomial), φ(ψ) with
/// ψ ~ N(θ, σ²) (LNB), or Beta(λφ, λ(1-φ)) (BB).
fn stage_prob_draw<R: Rng + ?Sized>(
    theta: f64,
    kernel: &KernelParams,
    stage: usize,
    rng: &mut R,
) -> f64 {
    match kernel {
        KernelParams::Binomial => logistic(theta),
        KernelParams::Lnb { sigma2 } => {
            let z: f64 = StandardNormal.sample(rng);
            logistic(theta + sigma2[stage].sqrt() * z)
        }
        KernelParams::Bb { lambda } => {
            let lam = lambda[stage];
            let p = logistic(theta);
            sample_beta(lam * p, lam * (1.0 - p), rng)
        }
    }
}

fn sample_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(u64::from(n), p)
        .expect("validated binomial parameters")
        .sample(rng) as u32
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Per-dose posterior predictive samples: one (m*, R*, y*) per retained draw
/// at each dose in `doses` (test dams at a dose share these draws).
pub fn posterior_predictive<R: Rng + ?Sized>(
    chain: &Chain,
    doses: &[f64],
    implant: &ImplantModel,
    rng: &mut R,
) -> Result<Vec<Vec<(u32, u32, u32)>>> {
    if chain.draws.is_empty() {
        return Err(Error::invalid("posterior_predictive needs a nonempty chain"));
    }
    let kernel = chain.spec.kernel;
    let mut out = vec![Vec::with_capacity(chain.draws.len()); doses.len()];
    for draw in &chain.draws {
        for (di, &dose) in doses.iter().enumerate() {
            out[di].push(predictive_response(&draw.params, kernel, dose, implant, rng)?);
        }
    }
    Ok(out)
}

/// Per-draw conditional pmfs at dose x: Pr(R | m) and Pr(y | m, R = r_cond),
/// the latter with the within-draw component reweighting
/// ω̃_ℓ ∝ ω_ℓ(x) · p₁(r_cond | m; θ_{1ℓ}).
pub fn conditional_pmfs(
    params: &MixtureParams,
    kernel: Kernel,
    x: f64,
    m: u32,
    r_cond: u32,
    rule: &QuadratureRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if r_cond > m {
        return Err(Error::invalid(format!(
            "conditional_pmfs: R = {r_cond} exceeds m = {m}"
        )));
    }
    let kp = params.kernel_params(kernel)?;
    let xv = covariate(x);
    let weights = params.weights_at(&xv);
    let l = weights.len();
    let first_stage: Vec<Vec<f64>> = (0..l)
        .map(|li| {
            let theta = params.theta(0, li, &xv);
            (0..=m)
                .map(|r| stage_pmf_value(r, m, theta, &kp, 0, rule))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // Pr(R | m)
    let mut r_pmf = vec![0.0; (m + 1) as usize];
    for (li, &w) in weights.iter().enumerate() {
        for (r, out) in r_pmf.iter_mut().enumerate() {
            *out += w * first_stage[li][r];
        }
    }
    // reweighted second stage
    let live = m - r_cond;
    let mut tilde: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(li, &w)| w * first_stage[li][r_cond as usize])
        .collect();
    let tilde_total: f64 = tilde.iter().sum();
    if tilde_total <= f64::MIN_POSITIVE {
        return Err(Error::numerical(
            "conditional_pmfs",
            format!("zero total mass at conditioning count R = {r_cond}"),
        ));
    }
    for t in &mut tilde {
        *t /= tilde_total;
    }
    let mut y_pmf = vec![0.0; (live + 1) as usize];
    if live == 0 {
        y_pmf[0] = 1.0;
    } else {
        for (li, &wt) in tilde.iter().enumerate() {
            let theta = params.theta(1, li, &xv);
            for (y, out) in y_pmf.iter_mut().enumerate() {
                *out += wt * stage_pmf_value(y as u32, live, theta, &kp, 1, rule)?;
            }
        }
    }
    Ok((r_pmf, y_pmf))
}

fn stage_pmf_value(
    y: u32,
    m: u32,
    theta: f64,
    kernel: &KernelParams,
    stage: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    match kernel {
        KernelParams::Binomial => Ok(binomial_pmf(y, m, logistic(theta))),
        KernelParams::Lnb { sigma2 } => {
            crate::distributions::lnb_pmf(y, m, theta, sigma2[stage], rule)
        }
        KernelParams::Bb { lambda } => crate::distributions::bb_pmf(y, m, theta, lambda[stage]),
    }
}

/// Curve draws over a dose grid, in long (draw, dose) layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveDraws {
    pub grid: Vec<f64>,
    /// values[draw][grid_point] = (D, M, r)
    pub values: Vec<Vec<(f64, f64, f64)>>,
}

impl CurveDraws {
    pub fn endpoint_values(&self, endpoint: Endpoint, grid_idx: usize) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| match endpoint {
                Endpoint::Embryolethality => row[grid_idx].0,
                Endpoint::Malformation => row[grid_idx].1,
                Endpoint::CombinedRisk => row[grid_idx].2,
            })
            .collect()
    }

    /// Posterior mean curve for one endpoint.
    pub fn mean_curve(&self, endpoint: Endpoint) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                let vals = self.endpoint_values(endpoint, i);
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    }

    /// Pointwise equal-tailed credible band for one endpoint.
    pub fn credible_band(&self, endpoint: Endpoint, level: f64) -> Vec<(f64, f64)> {
        let tail = (1.0 - level) / 2.0;
        (0..self.grid.len())
            .map(|i| {
                let mut vals = self.endpoint_values(endpoint, i);
                vals.sort_by(f64::total_cmp);
                (
                    quantile_type7(&vals, tail),
                    quantile_type7(&vals, 1.0 - tail),
                )
            })
            .collect()
    }
}

/// Evaluate the dose-response curves of every retained draw on a grid.
pub fn curve_draws(chain: &Chain, grid: &[f64], rule: &QuadratureRule) -> Result<CurveDraws> {
    let mut values = Vec::with_capacity(chain.draws.len());
    for draw in &chain.draws {
        let mut row = Vec::with_capacity(grid.len());
        for &x in grid {
            row.push(dose_response_draw(&draw.params, chain.spec.kernel, x, rule)?);
        }
        values.push(row);
    }
    Ok(CurveDraws {
        grid: grid.to_vec(),
        values,
    })
}

/// ED samples for one endpoint and BMR across a chain, with the censored
/// count (draws whose curve never reaches the benchmark response).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdSamples {
    pub endpoint: Endpoint,
    pub bmr: f64,
    pub doses: Vec<f64>,
    pub censored: usize,
}

impl EdSamples {
    pub fn censoring_fraction(&self) -> f64 {
        let total = self.doses.len() + self.censored;
        if total == 0 {
            0.0
        } else {
            self.censored as f64 / total as f64
        }
    }

    /// BMD is flagged unreliable above 5% censoring.
    pub fn bmd_unreliable(&self) -> bool {
        self.censoring_fraction() > 0.05
    }
}

/// Invert every retained draw's curve for one endpoint at one BMR.
pub fn ed_samples(
    chain: &Chain,
    endpoint: Endpoint,
    bmr: f64,
    search_max: f64,
    rule: &QuadratureRule,
) -> Result<EdSamples> {
    let kernel = chain.spec.kernel;
    let mut doses = Vec::with_capacity(chain.draws.len());
    let mut censored = 0;
    for draw in &chain.draws {
        let curve = |x: f64| -> Result<f64> {
            let (d, m, r) = dose_response_draw(&draw.params, kernel, x, rule)?;
            Ok(match endpoint {
                Endpoint::Embryolethality => d,
                Endpoint::Malformation => m,
                Endpoint::CombinedRisk => r,
            })
        };
        match effective_dose(curve, bmr, search_max)? {
            EdOutcome::Dose(d) => doses.push(d),
            EdOutcome::Censored => censored += 1,
        }
    }
    Ok(EdSamples {
        endpoint,
        bmr,
        doses,
        censored,
    })
}
