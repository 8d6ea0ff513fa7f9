use ndarray::{Array, ArrayView, Dimension};

use super::equalize::{bin_of, min_max};
use crate::error::{Result, SegError};

pub const OTSU_BINS: usize = 256;

/// Splits `counts` into `classes` contiguous, non-empty bin ranges maximising
/// the between-class variance, i.e. `sum_k S_k^2 / W_k` with `W_k` the mass
/// and `S_k` the index-weighted mass of class `k`.
///
/// Returns the first bin of classes 2..=`classes`. Among equally good
/// splits the one with the smallest last boundary wins, then the smallest
/// second-to-last, and so on.
pub fn multi_otsu_bins(counts: &[u64], classes: usize) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(SegError::InvalidParams(format!("multi-Otsu needs at least 2 classes, got {classes}")));
    }
    let nonempty = counts.iter().filter(|&&c| c > 0).count();
    if nonempty < classes {
        return Err(SegError::DegenerateHistogram(format!(
            "{nonempty} occupied bins cannot be split into {classes} classes"
        )));
    }
    let n = counts.len();
    let (w, s) = prefix_sums(counts);
    let cost = |a: usize, b: usize| class_score(&w, &s, a, b);
    // best[j][b]: optimum for bins 0..b split into j + 1 classes.
    let mut best = vec![vec![f64::NEG_INFINITY; n + 1]; classes];
    let mut arg = vec![vec![0usize; n + 1]; classes];
    for b in 1..=n {
        best[0][b] = cost(0, b);
    }
    for j in 1..classes {
        for b in (j + 1)..=n {
            for a in j..b {
                let v = best[j - 1][a] + cost(a, b);
                if v > best[j][b] {
                    best[j][b] = v;
                    arg[j][b] = a;
                }
            }
        }
    }
    let mut bounds = vec![0; classes - 1];
    let mut b = n;
    for j in (1..classes).rev() {
        b = arg[j][b];
        bounds[j - 1] = b;
    }
    Ok(bounds)
}

pub fn prefix_sums(counts: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![0.0; counts.len() + 1];
    let mut s = vec![0.0; counts.len() + 1];
    for (i, &c) in counts.iter().enumerate() {
        w[i + 1] = w[i] + c as f64;
        s[i + 1] = s[i] + (i as f64) * c as f64;
    }
    (w, s)
}

/// `S^2 / W` for bins `a..b`, zero for an empty class.
#[inline]
pub fn class_score(w: &[f64], s: &[f64], a: usize, b: usize) -> f64 {
    let wk = w[b] - w[a];
    if wk == 0.0 {
        0.0
    } else {
        let sk = s[b] - s[a];
        sk * sk / wk
    }
}

/// Histogram of `field` in `bins` equal bins over its value range.
pub fn histogram<D: Dimension>(field: &ArrayView<f32, D>, bins: usize) -> (Vec<u64>, f32, f32) {
    let (lo, hi) = min_max(field);
    let mut counts = vec![0u64; bins];
    for &v in field.iter() {
        counts[bin_of(v, lo, hi, bins)] += 1;
    }
    (counts, lo, hi)
}

/// `classes - 1` ascending thresholds. Each is the lower edge of the first
/// histogram bin of a class, so a pixel equal to a threshold belongs to the
/// upper class.
pub fn multi_otsu<D: Dimension>(field: &ArrayView<f32, D>, classes: usize) -> Result<Vec<f32>> {
    if field.is_empty() {
        return Err(SegError::DegenerateHistogram("empty image".into()));
    }
    let (counts, lo, hi) = histogram(field, OTSU_BINS);
    let bounds = multi_otsu_bins(&counts, classes)?;
    let width = (hi as f64 - lo as f64) / OTSU_BINS as f64;
    Ok(bounds.iter().map(|&b| (lo as f64 + b as f64 * width) as f32).collect())
}

/// 1-based class of a value: one plus the number of thresholds it reaches.
pub fn class_of(v: f32, thresholds: &[f32]) -> usize {
    1 + thresholds.iter().filter(|&&t| v >= t).count()
}

pub fn binarize_class<D: Dimension>(field: &ArrayView<f32, D>, thresholds: &[f32], fiber_class: usize) -> Array<bool, D> {
    field.mapv(|v| class_of(v, thresholds) == fiber_class)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Exhaustive search over all boundary tuples; ties resolved towards the
    /// smallest last boundary, then the next, and so on.
    pub(crate) fn exhaustive(counts: &[u64], classes: usize) -> Vec<usize> {
        let n = counts.len();
        let (w, s) = prefix_sums(counts);
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut cur = Vec::new();
        fn rec(
            start: usize,
            left: usize,
            n: usize,
            cur: &mut Vec<usize>,
            w: &[f64],
            s: &[f64],
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if left == 0 {
                let mut edges = vec![0];
                edges.extend_from_slice(cur);
                edges.push(n);
                let mut v = 0.0;
                for k in 0..edges.len() - 1 {
                    v += class_score(w, s, edges[k], edges[k + 1]);
                }
                let better = match best {
                    None => true,
                    Some((bv, bt)) => v > *bv || (v == *bv && cur.iter().rev().lt(bt.iter().rev())),
                };
                if better {
                    *best = Some((v, cur.clone()));
                }
                return;
            }
            for t in start..n {
                if n - t < left {
                    break;
                }
                cur.push(t);
                rec(t + 1, left - 1, n, cur, w, s, best);
                cur.pop();
            }
        }
        rec(1, classes - 1, n, &mut cur, &w, &s, &mut best);
        best.unwrap().1
    }

    /// Classic single-threshold Otsu by maximising w0 w1 (mu0 - mu1)^2.
    fn brute_otsu(counts: &[u64]) -> usize {
        let total: f64 = counts.iter().map(|&c| c as f64).sum();
        let mut best = (f64::NEG_INFINITY, 0);
        for t in 1..counts.len() {
            let (w0, m0) = counts[..t].iter().enumerate().fold((0.0, 0.0), |(w, m), (i, &c)| (w + c as f64, m + i as f64 * c as f64));
            let w1 = total - w0;
            if w0 == 0.0 || w1 == 0.0 {
                continue;
            }
            let m1 = counts.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum::<f64>() - m0;
            let v = w0 * w1 * (m0 / w0 - m1 / w1).powi(2);
            if v > best.0 + 1e-9 * v.abs() {
                best = (v, t);
            }
        }
        best.1
    }

    #[test]
    fn trimodal_peaks() {
        let f = Array2::from_shape_fn((30, 30), |(y, _)| [0.0, 0.5, 1.0][y % 3]);
        let t = multi_otsu(&f.view(), 3).unwrap();
        assert!(t[0] > 0.0 && t[0] <= 0.5 && t[1] > 0.5 && t[1] <= 1.0, "{t:?}");
        let (counts, _, _) = histogram(&f.view(), OTSU_BINS);
        assert_eq!(multi_otsu_bins(&counts, 3).unwrap(), exhaustive(&counts, 3));
        // Every peak lands in its own class.
        assert_eq!((class_of(0.0, &t), class_of(0.5, &t), class_of(1.0, &t)), (1, 2, 3));
    }

    #[test]
    fn bimodal_peaks() {
        let f = Array2::from_shape_fn((10, 10), |(y, _)| if y < 5 { 0.2 } else { 0.8 });
        let t = multi_otsu(&f.view(), 2).unwrap();
        assert!(t[0] > 0.2 && t[0] <= 0.8);
    }

    #[test]
    fn constant_is_degenerate() {
        let f = Array2::from_elem((4, 4), 0.5f32);
        assert!(matches!(multi_otsu(&f.view(), 2), Err(SegError::DegenerateHistogram(_))));
        let two = Array2::from_shape_fn((4, 4), |(y, _)| y as f32 % 2.0);
        assert!(matches!(multi_otsu(&two.view(), 3), Err(SegError::DegenerateHistogram(_))));
    }

    #[test]
    fn threshold_ties_go_up() {
        let t = [0.25f32, 0.5, 0.75];
        for (v, class) in [(0.25, 2), (0.5, 3), (0.75, 4), (0.2499, 1), (1.0, 4)] {
            let interval = (0..4).find(|&k| {
                let lo = if k == 0 { f32::NEG_INFINITY } else { t[k - 1] };
                let hi = if k == 3 { f32::INFINITY } else { t[k] };
                v >= lo && v < hi
            });
            assert_eq!(class_of(v, &t), interval.unwrap() + 1);
            assert_eq!(class_of(v, &t), class);
        }
        let f = Array2::from_shape_vec((1, 3), vec![0.1, 0.75, 0.9]).unwrap();
        assert_eq!(binarize_class(&f.view(), &t, 4).into_raw_vec_and_offset().0, vec![false, true, true]);
        let low = Array2::from_elem((2, 2), 0.1f32);
        assert!(binarize_class(&low.view(), &t, 4).iter().all(|&b| !b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn two_classes_match_classic_otsu(counts in proptest::collection::vec(0u64..1000, 256)) {
            prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= 2);
            let dp = multi_otsu_bins(&counts, 2).unwrap();
            prop_assert_eq!(dp, exhaustive(&counts, 2));
            let b = brute_otsu(&counts);
            let (w, s) = prefix_sums(&counts);
            let score = |t: usize| class_score(&w, &s, 0, t) + class_score(&w, &s, t, 256);
            let dp_t = multi_otsu_bins(&counts, 2).unwrap()[0];
            prop_assert!((score(dp_t) - score(b)).abs() <= 1e-9 * score(b).abs());
        }

        #[test]
        fn three_and_four_classes_match_exhaustive(counts in proptest::collection::vec(0u64..500, 64), classes in 3usize..=4) {
            prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= classes);
            prop_assert_eq!(multi_otsu_bins(&counts, classes).unwrap(), exhaustive(&counts, classes));
        }
    }
}
