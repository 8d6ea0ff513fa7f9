use crate::error::{NnError, Result};
use crate::tensor::{Real, Tensor};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross entropy and its gradient with respect to `pred`.
pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &y) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let (p, y) = (p.as_f64(), y.as_f64());
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        // The clamp is flat outside its range.
        let d = if p == pc { (pc - y) / (pc * (1.0 - pc)) / n } else { 0.0 };
        *g = T::from_f64_lossy(d);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteValue("binary cross entropy".into()));
    }
    Ok((loss, grad))
}

/// Fraction of elements where `pred > threshold` agrees with `target > 0.5`.
pub fn pixel_accuracy<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> f64 {
    if pred.is_empty() {
        return 1.0;
    }
    let hits = pred
        .data()
        .iter()
        .zip(target.data())
        .filter(|(&p, &y)| (p.as_f64() > threshold) == (y.as_f64() > 0.5))
        .count();
    hits as f64 / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_everywhere_is_ln2() {
        let p = Tensor::full(&[4], 0.5f64);
        let y = Tensor::from_vec(&[4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (l, _) = bce_loss(&p, &y).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_quarter() {
        let p = Tensor::full(&[1], 0.25f64);
        let y = Tensor::full(&[1], 1.0f64);
        let (l, _) = bce_loss(&p, &y).unwrap();
        assert!((l - 1.386294361).abs() < 1e-8);
    }

    #[test]
    fn perfect_prediction_is_clamp_floor() {
        let y = Tensor::from_vec(&[3], vec![0.0f64, 1.0, 1.0]).unwrap();
        let (l, _) = bce_loss(&y, &y).unwrap();
        assert!(l <= -(1.0 - BCE_EPS).ln() + 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        assert!(bce_loss(&Tensor::<f32>::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn accuracy_is_one_iff_thresholded_equal() {
        let y = Tensor::from_vec(&[3], vec![0.0f32, 1.0, 1.0]).unwrap();
        let p = Tensor::from_vec(&[3], vec![0.2f32, 0.7, 0.9]).unwrap();
        assert_eq!(pixel_accuracy(&p, &y, 0.5), 1.0);
        let p = Tensor::from_vec(&[3], vec![0.2f32, 0.5, 0.9]).unwrap();
        assert!((pixel_accuracy(&p, &y, 0.5) - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bce_is_non_negative(ps in proptest::collection::vec(0.0f64..1.0, 1..20), seed in 0u64..1000) {
            let ys: Vec<f64> = ps.iter().enumerate().map(|(i, _)| ((seed >> (i % 10)) & 1) as f64).collect();
            let p = Tensor::from_vec(&[ps.len()], ps.clone()).unwrap();
            let y = Tensor::from_vec(&[ys.len()], ys).unwrap();
            let (l, _) = bce_loss(&p, &y).unwrap();
            prop_assert!(l >= 0.0);
        }
    }
}
