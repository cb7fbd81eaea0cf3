//! Domain types for the data and the model spectrum, plus evaluation of
//! kernels, stick-breaking weights, atoms, and prior elicitation.

use crate::distributions::{
    bb_pmf, lnb_pmf, ln_binomial_pmf, logistic, QuadratureRule,
};
use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// One pregnant animal: dose (g/kg), implant count m, non-viable count R,
/// and malformed-among-live count y, with R + y ≤ m and m ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamRecord {
    pub dose: f64,
    pub implants: u32,
    pub nonviable: u32,
    pub malformed: u32,
}

impl DamRecord {
    pub fn new(dose: f64, implants: u32, nonviable: u32, malformed: u32) -> Result<Self> {
        let rec = DamRecord {
            dose,
            implants,
            nonviable,
            malformed,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dose >= 0.0) {
            return Err(Error::invalid(format!(
                "dose must be nonnegative, got {}",
                self.dose
            )));
        }
        if self.implants < 1 {
            return Err(Error::invalid("implant count m must be at least 1"));
        }
        if self.nonviable + self.malformed > self.implants {
            return Err(Error::invalid(format!(
                "R + y = {} exceeds m = {}",
                self.nonviable + self.malformed,
                self.implants
            )));
        }
        Ok(())
    }

    /// Live implants at the second continuation stage.
    pub fn live(&self) -> u32 {
        self.implants - self.nonviable
    }
}

/// The grouped collection of dam records, with the sorted distinct dose
/// levels and per-dose group sizes derived on construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<DamRecord>,
    dose_levels: Vec<f64>,
    group_sizes: Vec<usize>,
    dose_index: Vec<usize>,
}

impl Dataset {
    pub fn new(records: Vec<DamRecord>) -> Result<Self> {
        for (i, rec) in records.iter().enumerate() {
            rec.validate().map_err(|e| {
                Error::invalid(format!("record {}: {e}", i + 1))
            })?;
        }
        let mut dose_levels: Vec<f64> = records.iter().map(|r| r.dose).collect();
        dose_levels.sort_by(f64::total_cmp);
        dose_levels.dedup();
        let dose_index: Vec<usize> = records
            .iter()
            .map(|r| {
                dose_levels
                    .binary_search_by(|d| d.total_cmp(&r.dose))
                    .expect("dose present by construction")
            })
            .collect();
        let mut group_sizes = vec![0usize; dose_levels.len()];
        for &idx in &dose_index {
            group_sizes[idx] += 1;
        }
        Ok(Dataset {
            records,
            dose_levels,
            group_sizes,
            dose_index,
        })
    }

    pub fn records(&self) -> &[DamRecord] {
        &self.records
    }

    pub fn n_dams(&self) -> usize {
        self.records.len()
    }

    pub fn dose_levels(&self) -> &[f64] {
        &self.dose_levels
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Index into `dose_levels` for each record.
    pub fn dose_index(&self) -> &[usize] {
        &self.dose_index
    }

    pub fn max_dose(&self) -> f64 {
        *self.dose_levels.last().expect("nonempty dataset")
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Covariate vector (1, dose) — the design used throughout.
pub fn covariate(dose: f64) -> Vector2<f64> {
    Vector2::new(1.0, dose)
}

/// Mixture kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    /// Product of Binomials (continuation-ratio logits kernel).
    Binomial,
    /// Product of Logistic-Normal-Binomials (overdispersed kernel).
    Lnb,
    /// Product of Beta-Binomials (parametric CR-BB only).
    Bb,
}

/// Structure of the mixture weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightStructure {
    /// One component; the parametric continuation-ratio models.
    Single,
    /// Dose-constant Dirichlet-process stick-breaking weights.
    CommonWeights,
    /// Dose-dependent logit stick-breaking (LSBP) weights.
    DoseDependent,
}

/// Kernel family × weight structure × truncation level, selecting one of the
/// seven implementable models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kernel: Kernel,
    pub weights: WeightStructure,
    pub truncation: usize,
}

impl ModelSpec {
    pub fn new(kernel: Kernel, weights: WeightStructure, truncation: usize) -> Result<Self> {
        let spec = ModelSpec {
            kernel,
            weights,
            truncation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(Error::Config("truncation level must be >= 1".into()));
        }
        match self.weights {
            WeightStructure::Single if self.truncation != 1 => {
                Err(Error::Config("single-component models require L = 1".into()))
            }
            WeightStructure::CommonWeights | WeightStructure::DoseDependent
                if self.truncation < 2 =>
            {
                Err(Error::Config("mixture models require L >= 2".into()))
            }
            _ if self.kernel == Kernel::Bb && self.weights != WeightStructure::Single => {
                Err(Error::Config(
                    "the Beta-Binomial kernel is only fitted parametrically (CR-BB)".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn cr_logits() -> Self {
        ModelSpec {
            kernel: Kernel::Binomial,
            weights: WeightStructure::Single,
            truncation: 1,
        }
    }

    pub fn cr_bb() -> Self {
        ModelSpec {
            kernel: Kernel::Bb,
            weights: WeightStructure::Single,
            truncation: 1,
        }
    }

    pub fn cr_lnb() -> Self {
        ModelSpec {
            kernel: Kernel::Lnb,
            weights: WeightStructure::Single,
            truncation: 1,
        }
    }

    pub fn cw_bin(truncation: usize) -> Self {
        ModelSpec {
            kernel: Kernel::Binomial,
            weights: WeightStructure::CommonWeights,
            truncation,
        }
    }

    pub fn gen_bin(truncation: usize) -> Self {
        ModelSpec {
            kernel: Kernel::Binomial,
            weights: WeightStructure::DoseDependent,
            truncation,
        }
    }

    pub fn cw_lnb(truncation: usize) -> Self {
        ModelSpec {
            kernel: Kernel::Lnb,
            weights: WeightStructure::CommonWeights,
            truncation,
        }
    }

    pub fn gen_lnb(truncation: usize) -> Self {
        ModelSpec {
            kernel: Kernel::Lnb,
            weights: WeightStructure::DoseDependent,
            truncation,
        }
    }

    /// Canonical short name ("gen-lnb", "cw-bin", ...).
    pub fn name(&self) -> &'static str {
        match (self.kernel, self.weights) {
            (Kernel::Binomial, WeightStructure::Single) => "cr-logits",
            (Kernel::Bb, WeightStructure::Single) => "cr-bb",
            (Kernel::Lnb, WeightStructure::Single) => "cr-lnb",
            (Kernel::Binomial, WeightStructure::CommonWeights) => "cw-bin",
            (Kernel::Binomial, WeightStructure::DoseDependent) => "gen-bin",
            (Kernel::Lnb, WeightStructure::CommonWeights) => "cw-lnb",
            (Kernel::Lnb, WeightStructure::DoseDependent) => "gen-lnb",
            _ => "invalid",
        }
    }

    /// Parse a model name, attaching the truncation level for mixtures.
    pub fn from_name(name: &str, truncation: usize) -> Result<Self> {
        let spec = match name {
            "cr-logits" => ModelSpec::cr_logits(),
            "cr-bb" => ModelSpec::cr_bb(),
            "cr-lnb" => ModelSpec::cr_lnb(),
            "cw-bin" => ModelSpec::cw_bin(truncation),
            "gen-bin" => ModelSpec::gen_bin(truncation),
            "cw-lnb" => ModelSpec::cw_lnb(truncation),
            "gen-lnb" => ModelSpec::gen_lnb(truncation),
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (expected one of cr-logits, cr-bb, cr-lnb, \
                     cw-bin, gen-bin, cw-lnb, gen-lnb)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Priors for every block of the hierarchy. Matrices are 2×2 positive
/// definite over the (intercept, dose-slope) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// LSBP coefficient prior N(γ₀, Γ₀).
    pub gamma0: Vector2<f64>,
    pub gamma0_cov: Matrix2<f64>,
    /// Normal–inverse-Wishart blocks per category j = 1, 2.
    pub mu0: [Vector2<f64>; 2],
    pub kappa0: [f64; 2],
    pub nu0: [f64; 2],
    pub lambda0: [Matrix2<f64>; 2],
    /// Inverse-gamma prior for the LNB overdispersion σ²_j.
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Gamma prior for the DP concentration α (common-weights mixtures).
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Gamma(shape, rate) prior for the CR-BB dispersion λ_j.
    pub a_bb_lambda: f64,
    pub b_bb_lambda: f64,
}

impl Hyperparameters {
    /// Dimensionally consistent defaults for a study whose largest observed
    /// dose is `max_dose`. The prior-mean dose-response curve rises from
    /// about 0.05 at dose zero to about 0.5 at `max_dose`; slope scales
    /// shrink with the dose range.
    pub fn defaults(max_dose: f64) -> Self {
        assert!(max_dose > 0.0, "max_dose must be positive");
        let intercept = logit(0.05);
        let slope = -intercept / max_dose;
        let mu0 = Vector2::new(intercept, slope);
        let lambda0 = Matrix2::new(1.0, 0.0, 0.0, (2.0 / max_dose).powi(2));
        Hyperparameters {
            gamma0: Vector2::zeros(),
            gamma0_cov: Matrix2::new(4.0, 0.0, 0.0, 4.0 / (max_dose * max_dose)),
            mu0: [mu0, mu0],
            kappa0: [1.0, 1.0],
            nu0: [4.0, 4.0],
            lambda0: [lambda0, lambda0],
            a_sigma: 3.0,
            b_sigma: 1.2,
            a_alpha: 2.0,
            b_alpha: 2.0,
            a_bb_lambda: 2.0,
            b_bb_lambda: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("Gamma0", &self.gamma0_cov),
            ("Lambda0[1]", &self.lambda0[0]),
            ("Lambda0[2]", &self.lambda0[1]),
        ] {
            if nalgebra::linalg::Cholesky::new(*m).is_none() {
                return Err(Error::Config(format!("{name} must be positive definite")));
            }
        }
        for (name, v) in [
            ("kappa0[1]", self.kappa0[0]),
            ("kappa0[2]", self.kappa0[1]),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("a_bb_lambda", self.a_bb_lambda),
            ("b_bb_lambda", self.b_bb_lambda),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for j in 0..2 {
            if self.nu0[j] < 2.0 {
                return Err(Error::Config("nu0 must be at least the dimension 2".into()));
            }
        }
        Ok(())
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// State of the mixture weights inside one parameter draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightState {
    /// Degenerate single component.
    Single,
    /// DP stick-breaking proportions V_ℓ (length L-1) plus the concentration.
    Common { v: Vec<f64>, alpha: f64 },
    /// LSBP coefficients γ_ℓ (length L-1).
    DoseDependent { gammas: Vec<Vector2<f64>> },
}

/// All structural parameters of one mixture draw: per-category atom
/// coefficients β_{jℓ}, the weight state, and the kernel dispersions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    /// betas[j][ℓ] for categories j = 0, 1 (first/second stage).
    pub betas: [Vec<Vector2<f64>>; 2],
    pub weight_state: WeightState,
    /// (σ₁², σ₂²), present iff the kernel is LNB.
    pub sigma2: Option<[f64; 2]>,
    /// (λ₁, λ₂), present iff the kernel is BB.
    pub bb_lambda: Option<[f64; 2]>,
}

impl MixtureParams {
    pub fn truncation(&self) -> usize {
        self.betas[0].len()
    }

    /// Atom value θ_{jℓ}(x) = x'β_{jℓ} for stage j ∈ {0, 1}.
    pub fn theta(&self, j: usize, l: usize, x: &Vector2<f64>) -> f64 {
        self.betas[j][l].dot(x)
    }

    /// Mixture weights at covariate x, dispatched on the weight structure.
    pub fn weights_at(&self, x: &Vector2<f64>) -> Vec<f64> {
        match &self.weight_state {
            WeightState::Single => vec![1.0],
            WeightState::Common { v, .. } => dp_weights(v),
            WeightState::DoseDependent { gammas } => lsbp_weights(x, gammas),
        }
    }

    /// Apply one permutation to components (weights and atoms together).
    pub fn permute_components(&self, perm: &[usize]) -> MixtureParams {
        let l = self.truncation();
        assert_eq!(perm.len(), l);
        let betas = [
            perm.iter().map(|&p| self.betas[0][p]).collect(),
            perm.iter().map(|&p| self.betas[1][p]).collect(),
        ];
        // stick-breaking states are not closed under permutation; the
        // callers that permute (label-invariance checks) carry explicit
        // weights instead, so only Single survives unchanged here.
        MixtureParams {
            betas,
            weight_state: self.weight_state.clone(),
            sigma2: self.sigma2,
            bb_lambda: self.bb_lambda,
        }
    }
}

/// LSBP weights at covariate x from the L-1 stick coefficients:
/// ω_ℓ = φ(x'γ_ℓ) Π_{h<ℓ} (1 - φ(x'γ_h)), with ω_L the remaining mass.
pub fn lsbp_weights(x: &Vector2<f64>, gammas: &[Vector2<f64>]) -> Vec<f64> {
    let l = gammas.len() + 1;
    let mut weights = Vec::with_capacity(l);
    let mut remaining = 1.0;
    for g in gammas {
        let brk = logistic(g.dot(x));
        weights.push(remaining * brk);
        remaining *= 1.0 - brk;
    }
    weights.push(remaining);
    weights
}

/// DP stick-breaking weights from proportions V_ℓ ∈ (0,1), with the final
/// weight the leftover stick mass.
pub fn dp_weights(v: &[f64]) -> Vec<f64> {
    let l = v.len() + 1;
    let mut weights = Vec::with_capacity(l);
    let mut remaining = 1.0;
    for &brk in v {
        debug_assert!((0.0..=1.0).contains(&brk));
        weights.push(remaining * brk);
        remaining *= 1.0 - brk;
    }
    weights.push(remaining);
    weights
}

/// Per-component kernel dispersion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelParams {
    Binomial,
    Lnb { sigma2: [f64; 2] },
    Bb { lambda: [f64; 2] },
}

impl MixtureParams {
    /// Extract the kernel dispersion block for the given kernel family.
    pub fn kernel_params(&self, kernel: Kernel) -> Result<KernelParams> {
        match kernel {
            Kernel::Binomial => Ok(KernelParams::Binomial),
            Kernel::Lnb => self
                .sigma2
                .map(|sigma2| KernelParams::Lnb { sigma2 })
                .ok_or_else(|| Error::invalid("LNB kernel requires sigma2")),
            Kernel::Bb => self
                .bb_lambda
                .map(|lambda| KernelParams::Bb { lambda })
                .ok_or_else(|| Error::invalid("BB kernel requires bb_lambda")),
        }
    }
}

/// Continuation-ratio kernel mass p(R, y | m) = p₁(R | m) p₂(y | m - R),
/// with both stages from the same family. The second factor is 1 when the
/// dam has no live implants (m - R = 0 forces y = 0).
pub fn kernel_pmf(
    r: u32,
    y: u32,
    m: u32,
    theta: [f64; 2],
    kernel: &KernelParams,
    rule: &QuadratureRule,
) -> Result<f64> {
    if r + y > m {
        return Err(Error::invalid(format!(
            "kernel_pmf: R + y = {} exceeds m = {m}",
            r + y
        )));
    }
    let live = m - r;
    let first = stage_pmf(r, m, theta[0], kernel, 0, rule)?;
    let second = if live == 0 {
        1.0
    } else {
        stage_pmf(y, live, theta[1], kernel, 1, rule)?
    };
    Ok(first * second)
}

fn stage_pmf(
    y: u32,
    m: u32,
    theta: f64,
    kernel: &KernelParams,
    stage: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    match kernel {
        KernelParams::Binomial => Ok(ln_binomial_pmf(y, m, logistic(theta)).exp()),
        KernelParams::Lnb { sigma2 } => lnb_pmf(y, m, theta, sigma2[stage], rule),
        KernelParams::Bb { lambda } => bb_pmf(y, m, theta, lambda[stage]),
    }
}

/// Mixture mass Σ_ℓ ω_ℓ(x) · kernel(R, y | m; θ_{1ℓ}(x), θ_{2ℓ}(x)).
pub fn mixture_pmf(
    r: u32,
    y: u32,
    m: u32,
    x: &Vector2<f64>,
    params: &MixtureParams,
    kernel: Kernel,
    rule: &QuadratureRule,
) -> Result<f64> {
    let kp = params.kernel_params(kernel)?;
    let weights = params.weights_at(x);
    let mut total = 0.0;
    for (l, &w) in weights.iter().enumerate() {
        let theta = [params.theta(0, l, x), params.theta(1, l, x)];
        total += w * kernel_pmf(r, y, m, theta, &kp, rule)?;
    }
    Ok(total)
}

/// Inverse-gamma prior (a, b) for σ² such that the prior-mean intracluster
/// correlation σ²/4 matches the target extra variance fraction v: b = 4v(a-1).
pub fn elicit_sigma2_prior(target_extra_variance: f64, shape: f64) -> Result<(f64, f64)> {
    if !(target_extra_variance > 0.0 && target_extra_variance < 1.0) {
        return Err(Error::invalid(format!(
            "target extra variance must lie in (0,1), got {target_extra_variance}"
        )));
    }
    if !(shape > 1.0) {
        return Err(Error::invalid(format!(
            "shape must exceed 1 for the prior mean to exist, got {shape}"
        )));
    }
    Ok((shape, 4.0 * target_extra_variance * (shape - 1.0)))
}

/// Monte Carlo prior-expected dose-response curves on a grid, for validating
/// hyperparameter choices (a monotone trend in the prior mean) before a fit.
/// Returns one (D, M, r) triple per grid point.
pub fn prior_doseresponse_check<R: rand::Rng + ?Sized>(
    hyper: &Hyperparameters,
    spec: &ModelSpec,
    grid: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64, f64)>> {
    use crate::distributions::{
        sample_beta, sample_gamma_rate, sample_inverse_gamma, sample_inverse_wishart2, sample_mvn2,
    };
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be positive"));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("grid must be sorted ascending"));
    }
    spec.validate()?;
    hyper.validate()?;
    let rule = QuadratureRule::shared();
    let l = spec.truncation;
    let mut acc = vec![(0.0, 0.0, 0.0); grid.len()];
    for _ in 0..n_draws {
        let mut betas = [Vec::with_capacity(l), Vec::with_capacity(l)];
        for j in 0..2 {
            let sigma = sample_inverse_wishart2(hyper.nu0[j], &hyper.lambda0[j], rng)?;
            let mu = sample_mvn2(&hyper.mu0[j], &(sigma / hyper.kappa0[j]), rng)?;
            for _ in 0..l {
                betas[j].push(sample_mvn2(&mu, &sigma, rng)?);
            }
        }
        let weight_state = match spec.weights {
            WeightStructure::Single => WeightState::Single,
            WeightStructure::CommonWeights => {
                let alpha = sample_gamma_rate(hyper.a_alpha, hyper.b_alpha, rng);
                let v = (0..l - 1).map(|_| sample_beta(1.0, alpha, rng)).collect();
                WeightState::Common { v, alpha }
            }
            WeightStructure::DoseDependent => {
                let gammas = (0..l - 1)
                    .map(|_| sample_mvn2(&hyper.gamma0, &hyper.gamma0_cov, rng))
                    .collect::<Result<Vec<_>>>()?;
                WeightState::DoseDependent { gammas }
            }
        };
        let sigma2 = match spec.kernel {
            Kernel::Lnb => Some([
                sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng),
                sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng),
            ]),
            _ => None,
        };
        let bb_lambda = match spec.kernel {
            Kernel::Bb => Some([
                sample_gamma_rate(hyper.a_bb_lambda, hyper.b_bb_lambda, rng),
                sample_gamma_rate(hyper.a_bb_lambda, hyper.b_bb_lambda, rng),
            ]),
            _ => None,
        };
        let params = MixtureParams {
            betas,
            weight_state,
            sigma2,
            bb_lambda,
        };
        for (i, &dose) in grid.iter().enumerate() {
            let (d, m, r) = crate::inference::dose_response_draw(&params, spec.kernel, dose, rule)?;
            acc[i].0 += d;
            acc[i].1 += m;
            acc[i].2 += r;
        }
    }
    let n = n_draws as f64;
    Ok(acc
        .into_iter()
        .map(|(d, m, r)| (d / n, m / n, r / n))
        .collect())
}
