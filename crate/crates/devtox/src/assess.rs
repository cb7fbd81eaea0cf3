//! Cross-validated model comparison: posterior predictive loss (G, P) and
//! the interval score, with dose-stratified test splits.

use crate::inference::{quantile_type7, Endpoint};
use crate::model::Dataset;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A train/test partition, stratified by dose.
#[derive(Debug, Clone)]
pub struct CvSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub fraction: f64,
    /// Indices into the original record order that went to the test set.
    pub test_indices: Vec<usize>,
}

/// Stratified-by-dose split: per dose, round(fraction × n_d) test dams with
/// a floor of one. Every dose group must have at least two dams so both
/// sides stay populated.
pub fn cv_split<R: Rng + ?Sized>(data: &Dataset, fraction: f64, rng: &mut R) -> Result<CvSplit> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "test fraction must lie in [0,1), got {fraction}"
        )));
    }
    for (dose, &size) in data.dose_levels().iter().zip(data.group_sizes()) {
        if size < 2 {
            return Err(Error::invalid(format!(
                "dose group {dose} has {size} dam(s); need at least 2 to split"
            )));
        }
    }
    let mut test_flags = vec![false; data.n_dams()];
    let mut test_indices = Vec::new();
    for (level_idx, &size) in data.group_sizes().iter().enumerate() {
        let mut members: Vec<usize> = (0..data.n_dams())
            .filter(|&i| data.dose_index()[i] == level_idx)
            .collect();
        let n_test = ((fraction * size as f64).round() as usize).clamp(1, size - 1);
        // partial Fisher-Yates: the first n_test entries become the test set
        for k in 0..n_test {
            let j = rng.random_range(k..members.len());
            members.swap(k, j);
        }
        test_indices.extend_from_slice(&members[..n_test]);
    }
    test_indices.sort_unstable();
    for &i in &test_indices {
        test_flags[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, rec) in data.records().iter().enumerate() {
        if test_flags[i] {
            test.push(*rec);
        } else {
            train.push(*rec);
        }
    }
    Ok(CvSplit {
        train: Dataset::new(train)?,
        test: Dataset::new(test)?,
        fraction,
        test_indices,
    })
}

/// Predictive-ratio draws per dose for one endpoint, extracted from raw
/// (m*, R*, y*) samples. Draws with an empty denominator (no live implants
/// for the malformation ratio) are dropped.
pub fn predictive_ratios(
    samples: &[(u32, u32, u32)],
    endpoint: Endpoint,
) -> Vec<f64> {
    samples
        .iter()
        .filter_map(|&(m, r, y)| endpoint.ratio(m, r, y))
        .collect()
}

/// Posterior predictive loss for one endpoint: the goodness-of-fit term
/// G = Σ_d Σ_i (ratio'_di - E[ratio*_d])² over test dams (squared
/// deviations) and the complexity penalty P = Σ_d n'_d Var[ratio*_d].
/// Test dams with an empty denominator are skipped and counted.
pub fn ppl(
    test: &Dataset,
    predictive: &[Vec<(u32, u32, u32)>],
    doses: &[f64],
    endpoint: Endpoint,
) -> Result<PplResult> {
    let moments = predictive_moments(predictive, doses, endpoint)?;
    let mut g = 0.0;
    let mut p = 0.0;
    let mut skipped = 0usize;
    let mut used = vec![0usize; doses.len()];
    for rec in test.records() {
        let d = dose_position(doses, rec.dose)?;
        match endpoint.ratio(rec.implants, rec.nonviable, rec.malformed) {
            Some(ratio) => {
                g += (ratio - moments[d].0).powi(2);
                used[d] += 1;
            }
            None => skipped += 1,
        }
    }
    for (d, &n_d) in used.iter().enumerate() {
        p += n_d as f64 * moments[d].1;
    }
    Ok(PplResult {
        goodness: g,
        penalty: p,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PplResult {
    pub goodness: f64,
    pub penalty: f64,
    /// Malformation-endpoint test dams with no live implants.
    pub skipped: usize,
}

fn predictive_moments(
    predictive: &[Vec<(u32, u32, u32)>],
    doses: &[f64],
    endpoint: Endpoint,
) -> Result<Vec<(f64, f64)>> {
    if predictive.len() != doses.len() {
        return Err(Error::invalid(
            "predictive sample sets must align with the dose list",
        ));
    }
    doses
        .iter()
        .enumerate()
        .map(|(d, dose)| {
            let ratios = predictive_ratios(&predictive[d], endpoint);
            if ratios.is_empty() {
                return Err(Error::numerical(
                    "ppl",
                    format!("no usable predictive draws at dose {dose}"),
                ));
            }
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            Ok((mean, var))
        })
        .collect()
}

fn dose_position(doses: &[f64], dose: f64) -> Result<usize> {
    doses
        .iter()
        .position(|&d| d == dose)
        .ok_or_else(|| Error::invalid(format!("test dose {dose} missing from predictive doses")))
}

/// Interval score at credible level 1 - alpha: per test dam,
/// (u - l) + (2/α)(l - r)·1(r < l) + (2/α)(r - u)·1(r > u), with per-dose
/// limits the empirical α/2 and 1 - α/2 quantiles of the predictive ratios.
pub fn interval_score(
    test: &Dataset,
    predictive: &[Vec<(u32, u32, u32)>],
    doses: &[f64],
    endpoint: Endpoint,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("interval-score alpha must lie in (0,1)"));
    }
    let limits: Vec<(f64, f64)> = doses
        .iter()
        .enumerate()
        .map(|(d, dose)| {
            let mut ratios = predictive_ratios(&predictive[d], endpoint);
            if ratios.is_empty() {
                return Err(Error::numerical(
                    "interval_score",
                    format!("no usable predictive draws at dose {dose}"),
                ));
            }
            ratios.sort_by(f64::total_cmp);
            Ok((
                quantile_type7(&ratios, alpha / 2.0),
                quantile_type7(&ratios, 1.0 - alpha / 2.0),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut score = 0.0;
    for rec in test.records() {
        let d = dose_position(doses, rec.dose)?;
        let Some(ratio) = endpoint.ratio(rec.implants, rec.nonviable, rec.malformed) else {
            continue;
        };
        let (l, u) = limits[d];
        score += u - l;
        if ratio < l {
            score += 2.0 / alpha * (l - ratio);
        }
        if ratio > u {
            score += 2.0 / alpha * (ratio - u);
        }
    }
    Ok(score)
}

/// Model-comparison table: G, P, S per endpoint, one column per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<String>,
    /// rows[(endpoint, criterion)] aligned with `models`.
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub endpoint: String,
    pub criterion: String,
    pub values: Vec<f64>,
}

impl ComparisonReport {
    pub fn new(models: Vec<String>) -> Self {
        ComparisonReport {
            models,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, endpoint: Endpoint, criterion: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.models.len());
        self.rows.push(ComparisonRow {
            endpoint: endpoint.name().to_string(),
            criterion: criterion.to_string(),
            values,
        });
    }

    /// Value for one model/endpoint/criterion.
    pub fn value(&self, model: &str, endpoint: Endpoint, criterion: &str) -> Option<f64> {
        let col = self.models.iter().position(|m| m == model)?;
        self.rows
            .iter()
            .find(|r| r.endpoint == endpoint.name() && r.criterion == criterion)
            .map(|r| r.values[col])
    }

    pub fn to_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["endpoint".to_string(), "criterion".to_string()];
        header.extend(self.models.clone());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.endpoint.clone(), row.criterion.clone()];
            rec.extend(row.values.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
