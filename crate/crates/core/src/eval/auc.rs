use super::EvalError;

fn check(scores: &[f64], what: &str) -> Result<(), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty(what.to_string()));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(format!("{what} score {i} is {}", scores[i])));
    }
    Ok(())
}

/// AUC-ROC with in-distribution rows as negatives and OOD rows as positives:
/// the fraction of (in, ood) pairs where the OOD score is higher, ties
/// counting one half.
pub fn auc_roc(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64, EvalError> {
    check(in_scores, "in-distribution")?;
    check(ood_scores, "OOD")?;
    let mut sorted = in_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut greater, mut ties) = (0u64, 0u64);
    for &s in ood_scores {
        let below = sorted.partition_point(|&v| v < s);
        let not_above = sorted.partition_point(|&v| v <= s);
        greater += below as u64;
        ties += (not_above - below) as u64;
    }
    let pairs = (in_scores.len() * ood_scores.len()) as f64;
    Ok((greater as f64 + 0.5 * ties as f64) / pairs)
}
