//! Evaluation metrics: squared error, accuracy, rank-based ROC-AUC,
//! Gaussian negative log-likelihood, and adjusted Rand agreement for
//! clusterings.

use crate::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "{a} predictions against {b} targets"
        )));
    }
    Ok(())
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_len(predictions.len(), targets.len())?;
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("empty prediction set".into()));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

pub fn accuracy(predictions: &[i64], targets: &[i64]) -> Result<f64> {
    check_len(predictions.len(), targets.len())?;
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("empty prediction set".into()));
    }
    let hits = predictions
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Rank-based ROC-AUC with midranks for ties. Undefined (an error) when
/// either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());
    // midranks over tied score runs
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let u = positive_rank_sum - positives as f64 * (positives as f64 + 1.0) / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Mean Gaussian negative log-likelihood of targets under per-entry means
/// and log-variances.
pub fn gaussian_nll(means: &[f64], log_vars: &[f64], targets: &[f64]) -> Result<f64> {
    check_len(means.len(), targets.len())?;
    check_len(log_vars.len(), targets.len())?;
    if means.is_empty() {
        return Err(Error::InvalidArgument("empty prediction set".into()));
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(means
        .iter()
        .zip(log_vars)
        .zip(targets)
        .map(|((m, lv), t)| 0.5 * (ln_2pi + lv + (t - m) * (t - m) / lv.exp()))
        .sum::<f64>()
        / means.len() as f64)
}

/// Adjusted Rand index between two labelings of the same points; 1 for
/// identical partitions, ~0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two points".into()));
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: usize| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_cells: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return Ok(1.0); // both partitions are single clusters
    }
    Ok((sum_cells - expected) / (max_index - expected))
}
