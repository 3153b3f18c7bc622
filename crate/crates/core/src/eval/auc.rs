//! Exact ROC-AUC by the rank-sum (Mann-Whitney) statistic.

use crate::error::{Error, Result};

/// `P(score_pos > score_neg) + 0.5 * P(tie)` over every positive/negative
/// pair, or `None` when either class is absent.
///
/// Ties share their mid-rank. Working in doubled ranks keeps the whole
/// computation in integers, so the result is exact up to the final division.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", scores.len()),
            actual: format!("{}", labels.len()),
        });
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("roc_auc on empty input".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum over positives of 2 * (1-based mid-rank)
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        doubled_rank_sum += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(Some(doubled_u as f64 / (2 * n_pos * n_neg) as f64))
}
