//! Sampler validation by joint-distribution checking: the marginal
//! moments of a successive-conditional Gibbs path (parameters and data
//! redrawn together) must reproduce plain prior-predictive simulation.

use crate::distributions::polya_gamma::pg_int;
use crate::distributions::{
    logistic, sample_beta, sample_gamma_rate, sample_inverse_gamma, sample_inverse_wishart2,
    sample_mvn2, sample_std_normal,
};
use crate::model::{
    covariate, DamRecord, Dataset, Hyperparameters, Kernel, ModelSpec, WeightState,
    WeightStructure,
};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::{GibbsSampler, GibbsState};

/// A fixed experimental design: per-dam dose and implant count.
#[derive(Debug, Clone)]
pub struct Design {
    pub doses: Vec<f64>,
    pub implants: Vec<u32>,
}

/// One monitored statistic: name, the two estimates, and their standard
/// errors (prior-predictive side iid, Gibbs side batch-means).
#[derive(Debug, Clone)]
pub struct MomentComparison {
    pub name: String,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub gibbs_mean: f64,
    pub gibbs_se: f64,
}

impl MomentComparison {
    pub fn z(&self) -> f64 {
        let se = (self.prior_se.powi(2) + self.gibbs_se.powi(2)).sqrt();
        (self.prior_mean - self.gibbs_mean).abs() / se.max(1e-300)
    }

    pub fn within(&self, n_se: f64) -> bool {
        self.z() <= n_se
    }
}

#[derive(Debug, Clone)]
pub struct GewekeReport {
    pub comparisons: Vec<MomentComparison>,
}

impl GewekeReport {
    pub fn max_z(&self) -> f64 {
        self.comparisons.iter().map(|c| c.z()).fold(0.0, f64::max)
    }

    pub fn all_within(&self, n_se: f64) -> bool {
        self.comparisons.iter().all(|c| c.within(n_se))
    }
}

const N_STATS: usize = 9;

fn stat_names() -> [&'static str; N_STATS] {
    [
        "beta1_intercept",
        "beta2_intercept",
        "mu1_intercept",
        "sigma2_1",
        "sigma2_2",
        "mean_R_over_m",
        "mean_R",
        "mean_y",
        "sq_mean_R_over_m",
    ]
}

/// Run the joint-distribution check: `n` prior-predictive draws against `n`
/// successive-conditional Gibbs transitions on the same fixed design.
pub fn geweke_joint_check(
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    design: &Design,
    n: usize,
    seed: u64,
) -> Result<GewekeReport> {
    spec.validate()?;
    hyper.validate()?;
    assert_eq!(design.doses.len(), design.implants.len());

    // side A: iid prior-predictive simulation
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prior_stats = vec![[0.0f64; N_STATS]; n];
    for row in prior_stats.iter_mut() {
        let (state, data) = prior_joint_draw(spec, hyper, design, &mut rng)?;
        *row = observe(&state, &data);
    }

    // side B: the Gibbs path, started from an exact joint draw
    let mut rng_b = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEECE66D);
    let (mut state, mut records) = prior_joint_draw(spec, hyper, design, &mut rng_b)?;
    let mut gibbs_stats = vec![[0.0f64; N_STATS]; n];
    for row in gibbs_stats.iter_mut() {
        let data = Dataset::new(records.clone())?;
        let sampler = GibbsSampler::new(*spec, &data, hyper)?;
        sampler.iterate(&mut state, &mut rng_b)?;
        redraw_joint_block(spec, design, &mut state, &mut records, &mut rng_b);
        *row = observe_records(&state, &records);
    }

    let names = stat_names();
    let comparisons = (0..N_STATS)
        .map(|k| {
            let a: Vec<f64> = prior_stats.iter().map(|r| r[k]).collect();
            let b: Vec<f64> = gibbs_stats.iter().map(|r| r[k]).collect();
            let (pm, pse) = iid_mean_se(&a);
            let (gm, gse) = batch_mean_se(&b);
            MomentComparison {
                name: names[k].to_string(),
                prior_mean: pm,
                prior_se: pse,
                gibbs_mean: gm,
                gibbs_se: gse,
            }
        })
        .collect();
    Ok(GewekeReport { comparisons })
}

/// One exact draw of (hyperparameters, atoms, weights, dispersions, labels,
/// latents, data) from the generative model on the fixed design.
fn prior_joint_draw<R: Rng + ?Sized>(
    spec: &ModelSpec,
    hyper: &Hyperparameters,
    design: &Design,
    rng: &mut R,
) -> Result<(GibbsState, Vec<DamRecord>)> {
    let l = spec.truncation;
    let n = design.doses.len();
    let mut mu = [nalgebra::Vector2::zeros(); 2];
    let mut sigma_mat = [nalgebra::Matrix2::zeros(); 2];
    let mut betas = [Vec::with_capacity(l), Vec::with_capacity(l)];
    for j in 0..2 {
        sigma_mat[j] = sample_inverse_wishart2(hyper.nu0[j], &hyper.lambda0[j], rng)?;
        mu[j] = sample_mvn2(&hyper.mu0[j], &(sigma_mat[j] / hyper.kappa0[j]), rng)?;
        for _ in 0..l {
            betas[j].push(sample_mvn2(&mu[j], &sigma_mat[j], rng)?);
        }
    }
    let weight_state = match spec.weights {
        WeightStructure::Single => WeightState::Single,
        WeightStructure::CommonWeights => {
            let alpha = sample_gamma_rate(hyper.a_alpha, hyper.b_alpha, rng);
            let v = (0..l - 1)
                .map(|_| sample_beta(1.0, alpha, rng).clamp(f64::MIN_POSITIVE, 1.0 - 1e-15))
                .collect();
            WeightState::Common { v, alpha }
        }
        WeightStructure::DoseDependent => {
            let gammas = (0..l - 1)
                .map(|_| sample_mvn2(&hyper.gamma0, &hyper.gamma0_cov, rng))
                .collect::<Result<Vec<_>>>()?;
            WeightState::DoseDependent { gammas }
        }
    };
    let sigma2 = if spec.kernel == Kernel::Lnb {
        [
            sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng),
            sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng),
        ]
    } else {
        [0.0, 0.0]
    };
    let mut state = GibbsState {
        labels: vec![0; n],
        psi: if spec.kernel == Kernel::Lnb {
            vec![[0.0, 0.0]; n]
        } else {
            Vec::new()
        },
        zeta: vec![[0.0, 0.0]; n],
        xi: if spec.weights == WeightStructure::DoseDependent {
            vec![vec![0.1; l - 1]; n]
        } else {
            Vec::new()
        },
        betas,
        weight_state,
        sigma2,
        mu,
        sigma_mat,
    };
    // labels from the weights
    for i in 0..n {
        let x = covariate(design.doses[i]);
        let weights = state.weights_at(&x);
        state.labels[i] = crate::inference::sample_categorical(&weights, rng);
    }
    let mut records: Vec<DamRecord> = design
        .doses
        .iter()
        .zip(&design.implants)
        .map(|(&dose, &m)| DamRecord {
            dose,
            implants: m,
            nonviable: 0,
            malformed: 0,
        })
        .collect();
    redraw_joint_block(spec, design, &mut state, &mut records, rng);
    Ok((state, records))
}

impl GibbsState {
    fn weights_at(&self, x: &nalgebra::Vector2<f64>) -> Vec<f64> {
        match &self.weight_state {
            WeightState::Single => vec![1.0],
            WeightState::Common { v, .. } => crate::model::dp_weights(v),
            WeightState::DoseDependent { gammas } => crate::model::lsbp_weights(x, gammas),
        }
    }
}

/// Joint block redraw of (ψ, data, ζ) given atoms, labels, and dispersions:
/// generative order ψ ~ atom normal, counts ~ Binomial(φ(ψ)), then the
/// tilted Pólya-Gamma variates at the new values. Valid as one Gibbs block
/// of the augmented joint.
fn redraw_joint_block<R: Rng + ?Sized>(
    spec: &ModelSpec,
    design: &Design,
    state: &mut GibbsState,
    records: &mut [DamRecord],
    rng: &mut R,
) {
    let lnb = spec.kernel == Kernel::Lnb;
    for i in 0..design.doses.len() {
        let x = covariate(design.doses[i]);
        let li = state.labels[i];
        let m = design.implants[i];
        let t1 = state.betas[0][li].dot(&x);
        let t2 = state.betas[1][li].dot(&x);
        let (eta1, eta2) = if lnb {
            let psi1 = t1 + state.sigma2[0].sqrt() * sample_std_normal(rng);
            let psi2 = t2 + state.sigma2[1].sqrt() * sample_std_normal(rng);
            state.psi[i] = [psi1, psi2];
            (psi1, psi2)
        } else {
            (t1, t2)
        };
        let r = draw_binomial(m, logistic(eta1), rng);
        let live = m - r;
        let y = if live > 0 {
            draw_binomial(live, logistic(eta2), rng)
        } else {
            0
        };
        records[i].nonviable = r;
        records[i].malformed = y;
        state.zeta[i][0] = pg_int(m, eta1, rng);
        state.zeta[i][1] = if live > 0 { pg_int(live, eta2, rng) } else { 0.0 };
    }
}

fn draw_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(u64::from(n), p).unwrap().sample(rng) as u32
}

fn observe(state: &GibbsState, records: &[DamRecord]) -> [f64; N_STATS] {
    observe_records(state, records)
}

fn observe_records(state: &GibbsState, records: &[DamRecord]) -> [f64; N_STATS] {
    let n = records.len() as f64;
    let mean_ratio = records
        .iter()
        .map(|r| f64::from(r.nonviable) / f64::from(r.implants))
        .sum::<f64>()
        / n;
    let mean_r = records.iter().map(|r| f64::from(r.nonviable)).sum::<f64>() / n;
    let mean_y = records.iter().map(|r| f64::from(r.malformed)).sum::<f64>() / n;
    [
        state.betas[0][0][0],
        state.betas[1][0][0],
        state.mu[0][0],
        state.sigma2[0],
        state.sigma2[1],
        mean_ratio,
        mean_r,
        mean_y,
        mean_ratio * mean_ratio,
    ]
}

fn iid_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Batch-means standard error for the autocorrelated Gibbs path.
fn batch_mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let n_batches = 50.min(n);
    let batch = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let s = &values[b * batch..(b + 1) * batch];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (grand, (var / n_batches as f64).sqrt())
}
