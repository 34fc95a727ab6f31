use super::{sigmoid, Probabilities};
use crate::dataset::LabelRow;

/// Mean binary cross-entropy over present label cells and its gradient with
/// respect to the logits. Absent cells get an exact zero gradient; a slice
/// without present cells has loss 0.
///
/// Per cell, `-[y ln s(z) + (1-y) ln(1-s(z))]` is evaluated as
/// `max(z, 0) - z y + ln(1 + e^-|z|)`.
pub fn masked_bce(logits: &[Probabilities], truth: &[LabelRow]) -> (f64, Vec<Probabilities>) {
    assert_eq!(logits.len(), truth.len(), "one label row per logit row");
    let present = truth.iter().flatten().filter(|c| c.is_some()).count();
    let mut grad = vec![[0.0; 12]; logits.len()];
    if present == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / present as f64;
    let mut total = 0.0;
    for ((z_row, y_row), g_row) in logits.iter().zip(truth).zip(grad.iter_mut()) {
        for k in 0..z_row.len() {
            if let Some(y) = y_row[k] {
                let z = z_row[k];
                let y = f64::from(u8::from(y));
                total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                g_row[k] = (sigmoid(z) - y) * scale;
            }
        }
    }
    (total * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_masked() {
        let (loss, grad) = masked_bce(&[[3.0; 12]; 2], &[[None; 12]; 2]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn single_cell_at_zero() {
        let mut truth = [None; 12];
        truth[4] = Some(true);
        let (loss, grad) = masked_bce(&[[0.0; 12]], &[truth]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad[0][4], -0.5);
        assert_eq!(grad[0].iter().filter(|&&g| g != 0.0).count(), 1);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let mut truth = [None; 12];
        truth[0] = Some(false);
        truth[1] = Some(true);
        let mut z = [0.0; 12];
        z[0] = 800.0;
        z[1] = -800.0;
        let (loss, grad) = masked_bce(&[z], &[truth]);
        assert!((loss - 800.0).abs() < 1e-9);
        assert!(grad[0].iter().all(|g| g.is_finite()));
    }
}
