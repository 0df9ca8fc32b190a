//! Softmax cross-entropy with a numerically stable log-sum-exp.

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {num_classes} logits")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("label count {labels} does not match logit rows {rows}")]
    ShapeMismatch { labels: usize, rows: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Mean cross-entropy over rows plus dLoss/dLogits = (softmax - onehot)/n.
pub fn softmax_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
) -> Result<(f64, Matrix), LossError> {
    let n = logits.rows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(LossError::ShapeMismatch {
            labels: labels.len(),
            rows: n,
        });
    }
    let k = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(LossError::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }

    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for r in 0..n {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[labels[r]];
        let grow = grad.row_mut(r);
        for c in 0..k {
            let p = (row[c] - log_z).exp();
            grow[c] = scale * (p - if c == labels[r] { 1.0 } else { 0.0 });
        }
    }
    Ok((loss * scale, grad))
}

/// Row-wise argmax prediction accuracy. Ties toward the smaller class.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if logits.rows() == 0 {
        return 0.0;
    }
    let correct = (0..logits.rows())
        .filter(|&r| {
            let row = logits.row(r);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best == labels[r]
        })
        .count();
    correct as f64 / logits.rows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        for k in [2usize, 5, 10] {
            let logits = Matrix::zeros(3, k);
            let (loss, _) = softmax_cross_entropy(&logits, &vec![0; 3]).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn confident_correct_logit_drives_loss_to_zero() {
        let mut logits = Matrix::zeros(1, 4);
        logits.row_mut(0)[2] = 1e4;
        let (loss, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let logits = Matrix::from_rows(&[vec![1e308f64.ln() * 0.9, 500.0, -500.0]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.is_finite());
        assert!(grad.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::rng::SeededRng::new(21);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.next_normal()).collect())
            .collect();
        let labels = vec![0, 3, 2, 4];
        let logits = Matrix::from_rows(&rows);
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let eps = 1e-6;
        for r in 0..4 {
            for c in 0..5 {
                let mut plus = logits.clone();
                plus.row_mut(r)[c] += eps;
                let mut minus = logits.clone();
                minus.row_mut(r)[c] -= eps;
                let (lp, _) = softmax_cross_entropy(&plus, &labels).unwrap();
                let (lm, _) = softmax_cross_entropy(&minus, &labels).unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                let g = grad.row(r)[c];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    ((fd - g) / denom).abs() < 1e-6,
                    "({r},{c}): fd={fd} g={g}"
                );
            }
        }
    }

    #[test]
    fn out_of_range_label_errors() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]).unwrap_err(),
            LossError::LabelOutOfRange { .. }
        ));
    }

    #[test]
    fn accuracy_counts_argmax() {
        let logits = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 1.0]]);
        assert!((accuracy(&logits, &[0, 1, 1]) - 2.0 / 3.0).abs() < 1e-15);
    }
}
