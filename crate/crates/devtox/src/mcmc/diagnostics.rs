//! Convergence diagnostics: trace extraction for label-invariant summaries,
//! effective sample size, and split-chain scale reduction.

use crate::distributions::QuadratureRule;
use crate::inference::dose_response_draw;
use crate::Result;
use serde::{Deserialize, Serialize};

use super::Chain;

/// Per-scalar convergence summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub ess: f64,
    pub rhat: f64,
    /// Constant chains: R̂ reported as 1 by convention, ESS as the draw count.
    pub degenerate: bool,
}

/// Traces plus per-scalar statistics for one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub traces: Vec<(String, Vec<f64>)>,
    pub scalars: Vec<ScalarDiagnostic>,
}

/// Monitored scalars: μ and Σ entries, σ² (or λ), the four largest mixture
/// weights at `dose`, the label-invariant β averages, and the three
/// dose-response probabilities at `dose`.
pub fn diagnostics(chain: &Chain, dose: f64, rule: &QuadratureRule) -> Result<DiagnosticsBundle> {
    if chain.draws.is_empty() {
        return Err(crate::Error::invalid("diagnostics needs a nonempty chain"));
    }
    let n = chain.draws.len();
    let mut traces: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |name: String, values: Vec<f64>| traces.push((name, values));

    if chain.draws[0].mu.is_some() {
        for j in 0..2 {
            for k in 0..2 {
                push(
                    format!("mu{}_{}", j + 1, k),
                    chain.draws.iter().map(|d| d.mu.unwrap()[j][k]).collect(),
                );
            }
        }
        for j in 0..2 {
            for (a, b) in [(0, 0), (0, 1), (1, 1)] {
                push(
                    format!("Sigma{}_{}{}", j + 1, a, b),
                    chain
                        .draws
                        .iter()
                        .map(|d| d.sigma.unwrap()[j][(a, b)])
                        .collect(),
                );
            }
        }
    }
    if chain.draws[0].params.sigma2.is_some() {
        for j in 0..2 {
            push(
                format!("sigma2_{}", j + 1),
                chain
                    .draws
                    .iter()
                    .map(|d| d.params.sigma2.unwrap()[j])
                    .collect(),
            );
        }
    }
    if chain.draws[0].params.bb_lambda.is_some() {
        for j in 0..2 {
            push(
                format!("bb_lambda_{}", j + 1),
                chain
                    .draws
                    .iter()
                    .map(|d| d.params.bb_lambda.unwrap()[j])
                    .collect(),
            );
        }
    }
    // four largest mixture weights at the chosen dose, recomputed per draw
    let x = crate::model::covariate(dose);
    let mut top_weights: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 4];
    for d in &chain.draws {
        let mut w = d.params.weights_at(&x);
        w.sort_by(|a, b| b.total_cmp(a));
        for (k, trace) in top_weights.iter_mut().enumerate() {
            trace.push(w.get(k).copied().unwrap_or(0.0));
        }
    }
    for (k, trace) in top_weights.into_iter().enumerate() {
        push(format!("weight_top{}", k + 1), trace);
    }
    for j in 0..2 {
        for k in 0..2 {
            push(
                format!("beta_bar{}_{}", j + 1, k),
                chain.draws.iter().map(|d| d.beta_bar[j][k]).collect(),
            );
        }
    }
    let mut d_trace = Vec::with_capacity(n);
    let mut m_trace = Vec::with_capacity(n);
    let mut r_trace = Vec::with_capacity(n);
    for d in &chain.draws {
        let (dv, mv, rv) = dose_response_draw(&d.params, chain.spec.kernel, dose, rule)?;
        d_trace.push(dv);
        m_trace.push(mv);
        r_trace.push(rv);
    }
    push(format!("D_at_{dose}"), d_trace);
    push(format!("M_at_{dose}"), m_trace);
    push(format!("r_at_{dose}"), r_trace);

    let scalars = traces
        .iter()
        .map(|(name, values)| {
            let (ess_v, degenerate) = ess(values);
            ScalarDiagnostic {
                name: name.clone(),
                ess: ess_v,
                rhat: split_rhat(values),
                degenerate,
            }
        })
        .collect();
    Ok(DiagnosticsBundle { traces, scalars })
}

/// Effective sample size via the initial-positive-sequence truncation of the
/// autocorrelation sum. Constant chains are flagged degenerate with ESS = n.
pub fn ess(values: &[f64]) -> (f64, bool) {
    let n = values.len();
    if n < 4 {
        return (n as f64, true);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 1e-300 {
        return (n as f64, true);
    }
    let max_lag = (n / 2).min(1000);
    let rho = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..(n - lag) {
            acc += (values[i] - mean) * (values[i + lag] - mean);
        }
        acc / (n as f64 * var)
    };
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 <= max_lag {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    ((n as f64 / tau).min(n as f64), false)
}

/// Split-chain potential scale reduction: the chain is halved and the
/// two halves treated as parallel chains. Constant chains report 1.
pub fn split_rhat(values: &[f64]) -> f64 {
    let n = values.len() / 2;
    if n < 2 {
        return 1.0;
    }
    let halves = [&values[..n], &values[values.len() - n..]];
    let means: Vec<f64> = halves
        .iter()
        .map(|h| h.iter().sum::<f64>() / n as f64)
        .collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let w = (vars[0] + vars[1]) / 2.0;
    if w <= 1e-300 {
        return 1.0;
    }
    let grand = (means[0] + means[1]) / 2.0;
    let b = n as f64 * ((means[0] - grand).powi(2) + (means[1] - grand).powi(2));
    let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_chain_is_degenerate() {
        let values = vec![2.5; 100];
        let (e, degenerate) = ess(&values);
        assert!(degenerate);
        assert_eq!(e, 100.0);
        assert_eq!(split_rhat(&values), 1.0);
    }

    #[test]
    fn iid_chain_has_near_full_ess() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let values: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let (e, degenerate) = ess(&values);
        assert!(!degenerate);
        assert!(e > 2000.0, "ess={e}");
        let r = split_rhat(&values);
        assert!((r - 1.0).abs() < 0.05, "rhat={r}");
    }

    #[test]
    fn correlated_chain_has_reduced_ess() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
        let mut x = 0.0;
        let values: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.95 * x + crate::distributions::sample_std_normal(&mut rng);
                x
            })
            .collect();
        let (e, _) = ess(&values);
        assert!(e < 1000.0, "ess={e}");
    }
}
