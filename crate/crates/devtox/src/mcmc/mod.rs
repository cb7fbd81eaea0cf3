//! Blocked Gibbs sampler for the mixture models, Metropolis–Hastings for
//! CR-BB, chain management, and convergence diagnostics.

mod diagnostics;
mod gibbs;
mod io;
mod metropolis;
pub mod validation;

pub use diagnostics::{diagnostics, DiagnosticsBundle, ScalarDiagnostic};
pub use gibbs::{GibbsSampler, GibbsState};
pub use io::{read_chain, write_chain, ChainHeader};
pub use metropolis::{crbb_log_posterior, step_mh_crbb, CrBbState};

use crate::model::{Dataset, Hyperparameters, Kernel, MixtureParams, ModelSpec};
use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// MCMC schedule. Retained draws are those at iterations
/// burn_in + thin, burn_in + 2·thin, ..., so the count is
/// floor((n_iter - burn_in)/thin).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        // the reference schedule: 5000 draws kept every 2 iterations from a
        // 30000-iteration chain after a 20000-iteration burn-in
        McmcConfig {
            n_iter: 30_000,
            burn_in: 20_000,
            thin: 2,
            seed: 20260810,
            n_chains: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in {} must be below n_iter {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin < 1 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains < 1 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// SplitMix64 step, the documented master-seed-to-chain-seed splitting rule:
/// chain k runs on seed splitmix64(master + k).
pub fn chain_seed(master: u64, chain_index: usize) -> u64 {
    let mut z = master
        .wrapping_add(chain_index as u64)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One retained draw: the mixture parameters plus the hyperparameter draws
/// and two label-derived diagnostics (labels themselves are not retained).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub params: MixtureParams,
    /// (μ₁, μ₂); absent for the CR-BB Metropolis sampler.
    pub mu: Option<[Vector2<f64>; 2]>,
    /// (Σ₁, Σ₂); absent for the CR-BB Metropolis sampler.
    pub sigma: Option<[Matrix2<f64>; 2]>,
    /// Number of distinct occupied components at this iteration.
    pub n_occupied: usize,
    /// Label-invariant averages Σ_i β_{j L_i} / n per category.
    pub beta_bar: [Vector2<f64>; 2],
}

/// Retained post-burn-in, thinned draws plus run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub config: McmcConfig,
    pub draws: Vec<Draw>,
    /// Post-burn-in Metropolis acceptance rate (CR-BB only).
    pub acceptance: Option<f64>,
    #[serde(default)]
    pub wall_secs: f64,
}

/// Fit one chain of the given model. Dispatches to the blocked Gibbs
/// sampler (all Gibbs-conjugate models, including the degenerate L = 1
/// loops for CR-logits and CR-LNB) or to adaptive Metropolis–Hastings
/// for CR-BB. Deterministic given (spec, data, hyper, config).
pub fn fit(
    spec: &ModelSpec,
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &McmcConfig,
) -> Result<Chain> {
    spec.validate()?;
    hyper.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("fit requires a nonempty dataset"));
    }
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(config.seed, 0));
    let mut chain = if spec.kernel == Kernel::Bb {
        metropolis::fit_crbb(spec, data, hyper, config, &mut rng)?
    } else {
        fit_gibbs(spec, data, hyper, config, &mut rng)?
    };
    chain.wall_secs = start.elapsed().as_secs_f64();
    Ok(chain)
}

fn fit_gibbs(
    spec: &ModelSpec,
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &McmcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Chain> {
    let sampler = GibbsSampler::new(*spec, data, hyper)?;
    let mut state = sampler.init_state(rng);
    let mut draws = Vec::with_capacity(config.retained());
    for iter in 1..=config.n_iter {
        sampler
            .iterate(&mut state, rng)
            .map_err(|e| e.at_iteration(iter))?;
        if iter > config.burn_in && (iter - config.burn_in) % config.thin == 0 {
            draws.push(sampler.record(&state, iter));
        }
    }
    Ok(Chain {
        spec: *spec,
        hyper: hyper.clone(),
        config: *config,
        draws,
        acceptance: None,
        wall_secs: 0.0,
    })
}

/// Run `config.n_chains` independent chains concurrently, one thread per
/// chain, each on its own derived seed. Results arrive in chain order.
pub fn fit_multichain(
    spec: &ModelSpec,
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &McmcConfig,
) -> Result<Vec<Chain>> {
    config.validate()?;
    if config.n_chains == 1 {
        return Ok(vec![fit(spec, data, hyper, config)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|k| {
                let mut cfg = *config;
                cfg.seed = chain_seed(config.seed, k);
                cfg.n_chains = 1;
                scope.spawn(move || fit(spec, data, hyper, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count_formula() {
        let cfg = McmcConfig {
            n_iter: 30_000,
            burn_in: 20_000,
            thin: 2,
            seed: 1,
            n_chains: 1,
        };
        assert_eq!(cfg.retained(), 5000);
        for (n, b, t, want) in [(11, 3, 3, 2), (10, 0, 1, 10), (7, 6, 5, 0), (100, 10, 7, 12)] {
            let cfg = McmcConfig {
                n_iter: n,
                burn_in: b,
                thin: t,
                seed: 1,
                n_chains: 1,
            };
            assert_eq!(cfg.retained(), want, "n={n} b={b} t={t}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = McmcConfig::default();
        cfg.burn_in = cfg.n_iter;
        assert!(cfg.validate().is_err());
        let mut cfg = McmcConfig::default();
        cfg.thin = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn chain_seeds_differ() {
        let seeds: Vec<u64> = (0..8).map(|k| chain_seed(42, k)).collect();
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
