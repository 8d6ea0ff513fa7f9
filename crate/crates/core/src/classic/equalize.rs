use ndarray::{Array, ArrayView, Dimension};

use crate::error::{Result, SegError};

/// Maps every pixel to the empirical CDF of its histogram bin. The histogram
/// spans `[min, max]` of the input, so a constant image maps to all ones.
pub fn equalize_histogram<D: Dimension>(field: &ArrayView<f32, D>, bins: usize) -> Result<Array<f32, D>> {
    if bins < 2 {
        return Err(SegError::InvalidParams(format!("equalization needs at least 2 bins, got {bins}")));
    }
    if field.is_empty() {
        return Ok(field.to_owned());
    }
    let (lo, hi) = min_max(field);
    let bin = |v: f32| bin_of(v, lo, hi, bins);
    let mut cdf = vec![0u64; bins];
    for &v in field.iter() {
        cdf[bin(v)] += 1;
    }
    for i in 1..bins {
        cdf[i] += cdf[i - 1];
    }
    let n = field.len() as f64;
    Ok(field.mapv(|v| (cdf[bin(v)] as f64 / n) as f32))
}

pub(crate) fn min_max<D: Dimension>(field: &ArrayView<f32, D>) -> (f32, f32) {
    field.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Bin of `v` in `bins` equal bins over `[lo, hi]`; the top edge is closed.
pub(crate) fn bin_of(v: f32, lo: f32, hi: f32, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let t = ((v as f64 - lo as f64) / (hi as f64 - lo as f64) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn uniform_image_is_nearly_fixed() {
        let bins = 64;
        let n = 64 * 64;
        let f = Array2::from_shape_fn((64, 64), |(y, x)| ((y * 64 + x) as f32 + 0.5) / n as f32);
        let out = equalize_histogram(&f.view(), bins).unwrap();
        let sup = f.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(sup <= 1.0 / bins as f32 + 1e-6, "{sup}");
    }

    #[test]
    fn two_valued_image_counts() {
        let f = Array2::from_shape_fn((4, 4), |(y, _)| if y == 0 { 1.0 } else { 0.0 });
        let out = equalize_histogram(&f.view(), 256).unwrap();
        let count_le = |v: f32| f.iter().filter(|&&u| u <= v).count() as f32 / 16.0;
        for (a, b) in f.iter().zip(&out) {
            assert_eq!(*b, count_le(*a));
        }
        assert_eq!(out[[1, 0]], 0.75);
        assert_eq!(out[[0, 0]], 1.0);
    }

    #[test]
    fn constant_image_stays_constant() {
        let f = Array2::from_elem((5, 7), 0.3f32);
        let out = equalize_histogram(&f.view(), 16).unwrap();
        assert!(out.iter().all(|&v| v == out[[0, 0]]));
    }

    proptest! {
        #[test]
        fn preserves_rank_order(v in proptest::collection::vec(0f32..1.0, 2..200), bins in 2usize..300) {
            let f = Array2::from_shape_vec((1, v.len()), v.clone()).unwrap();
            let out = equalize_histogram(&f.view(), bins).unwrap();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] <= v[j] {
                        prop_assert!(out[[0, i]] <= out[[0, j]]);
                    }
                }
            }
            prop_assert!(out.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
