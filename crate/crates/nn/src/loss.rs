use crate::error::{NnError, Result};
use crate::float::Float;
use crate::layers::softmax_row;
use crate::tensor::Tensor;

/// Mean cross-entropy of a logit batch and the gradient seed for `backward`.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grad: Tensor<T>,
}

/// `mean_b(-log softmax(logits_b)[label_b])`, stabilised by max-subtraction.
pub fn cross_entropy<T: Float>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossOutput<T>> {
    let &[batch, n] = logits.shape() else {
        return Err(NnError::Data(format!(
            "cross_entropy expects [batch, classes] logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != batch {
        return Err(NnError::Data(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(NnError::Data(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(batch * n);
    let inv_b = 1.0 / batch as f64;
    for (row, &label) in logits.data().chunks(n).zip(labels) {
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let log_z = row
            .iter()
            .map(|v| (v.as_f64() - max).exp())
            .sum::<f64>()
            .ln()
            + max;
        loss += log_z - row[label].as_f64();
        for (c, v) in row.iter().enumerate() {
            let p = (v.as_f64() - log_z).exp();
            let target = if c == label { 1.0 } else { 0.0 };
            grad.push(T::of((p - target) * inv_b));
        }
    }
    Ok(LossOutput {
        loss: loss * inv_b,
        grad: Tensor::new(&[batch, n], grad)?,
    })
}

/// Row-wise softmax probabilities.
pub fn softmax<T: Float>(logits: &Tensor<T>) -> Vec<Vec<f64>> {
    let n = logits.row_len();
    logits.data().chunks(n).map(softmax_row).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<V: PartialOrd + Copy>(row: &[V]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive reference: exp and sum without stabilisation.
    fn naive(logits: &[f64], n: usize, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (row, &l) in logits.chunks(n).zip(labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            total += -(row[l].exp() / z).ln();
        }
        total / labels.len() as f64
    }

    #[test]
    fn uniform_logits_give_ln_n() {
        let t = Tensor::<f64>::zeros(&[3, 16]);
        let out = cross_entropy(&t, &[0, 5, 15]).unwrap();
        assert!((out.loss - 16f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 60.0] {
            let t = Tensor::<f64>::from_f64(&[1, 3], &[margin, 0.0, 0.0]).unwrap();
            let l = cross_entropy(&t, &[0]).unwrap().loss;
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn matches_naive_reference() {
        let vals = [
            0.3, -1.2, 2.0, 0.0, 0.7, -0.4, 1.5, 1.5, -2.5, -0.9, 0.1, 0.6,
        ];
        let labels = [2, 0, 1, 2];
        let t = Tensor::<f64>::from_f64(&[4, 3], &vals).unwrap();
        let got = cross_entropy(&t, &labels).unwrap().loss;
        let want = naive(&vals, 3, &labels);
        assert!((got - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let t = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap();
        let out = cross_entropy(&t, &[1, 2]).unwrap();
        for row in out.grad.data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        let t = Tensor::<f32>::zeros(&[1, 4]);
        assert!(matches!(cross_entropy(&t, &[4]), Err(NnError::Data(_))));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
    }
}
