//! Confusion counts, Dice, Matthews, ROC/AUC and per-slice stack evaluation.

use std::io::Write;
use std::ops::{Add, AddAssign};

use ndarray::{Array, ArrayView, Dimension};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::volume::VolumeSource;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Neither prediction nor gold has any foreground.
    pub fn both_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(SegError::ShapeMismatch(format!("prediction {a:?} vs gold {b:?}")));
    }
    Ok(())
}

pub fn confusion<D: Dimension>(pred: &ArrayView<bool, D>, gold: &ArrayView<bool, D>) -> Result<ConfusionCounts> {
    same_shape(pred.shape(), gold.shape())?;
    let mut c = ConfusionCounts::default();
    ndarray::Zip::from(pred).and(gold).for_each(|&p, &g| match (p, g) {
        (true, true) => c.tp += 1,
        (true, false) => c.fp += 1,
        (false, false) => c.tn += 1,
        (false, true) => c.fn_ += 1,
    });
    Ok(c)
}

/// `2 TP / (2 TP + FP + FN)`; 1.0 when both masks are empty (see
/// [`ConfusionCounts::both_empty`]).
pub fn dice(c: &ConfusionCounts) -> f64 {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / den as f64
    }
}

/// Matthews correlation; 0.0 when any marginal is empty.
pub fn matthews(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as u128, c.fp as u128, c.tn as u128, c.fn_ as u128);
    let num = (tp * tn) as i128 - (fp * fn_) as i128;
    let a = (tp + fp) * (tp + fn_);
    let b = (tn + fp) * (tn + fn_);
    if a == 0 || b == 0 {
        return 0.0;
    }
    num as f64 / ((a as f64) * (b as f64)).sqrt()
}

/// Strictly-above rule: `value > t` is foreground.
pub fn threshold<D: Dimension>(pred: &ArrayView<f32, D>, t: f32) -> Array<bool, D> {
    pred.mapv(|v| v > t)
}

/// Per-voxel category: 0 = TN, 1 = TP, 2 = FP, 3 = FN.
pub fn category_map<D: Dimension>(pred: &ArrayView<bool, D>, gold: &ArrayView<bool, D>) -> Result<Array<u8, D>> {
    same_shape(pred.shape(), gold.shape())?;
    let mut out = Array::zeros(pred.raw_dim());
    ndarray::Zip::from(&mut out).and(pred).and(gold).for_each(|o, &p, &g| {
        *o = match (p, g) {
            (false, false) => 0,
            (true, true) => 1,
            (true, false) => 2,
            (false, true) => 3,
        }
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// From (0, 0) to (1, 1), non-decreasing in both rates.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Builds the curve from `(score, positives, negatives)` groups sorted by
/// descending score. The trapezoidal area is accumulated in integers, so it
/// equals the rank statistic with ties counted as one half.
fn roc_from_groups(groups: impl Iterator<Item = (f64, u64, u64)>, pos: u64, neg: u64) -> Result<Roc> {
    if pos == 0 || neg == 0 {
        return Err(SegError::SingleClassGold);
    }
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    for (s, dp, dn) in groups {
        area2 += dn as u128 * (2 * tp as u128 + dp as u128);
        tp += dp;
        fp += dn;
        points.push(RocPoint { threshold: s, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    let auc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(Roc { points, auc })
}

/// Exact ROC sweeping every distinct score.
pub fn roc_auc<D: Dimension>(scores: &ArrayView<f32, D>, gold: &ArrayView<bool, D>) -> Result<Roc> {
    same_shape(scores.shape(), gold.shape())?;
    let mut pairs: Vec<(f32, bool)> = scores.iter().copied().zip(gold.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = pairs.iter().filter(|p| p.1).count() as u64;
    let neg = pairs.len() as u64 - pos;
    let mut groups = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        let (mut dp, mut dn) = (0, 0);
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                dp += 1;
            } else {
                dn += 1;
            }
            i += 1;
        }
        groups.push((s as f64, dp, dn));
    }
    roc_from_groups(groups.into_iter(), pos, neg)
}

pub const POOLED_BINS: usize = 1 << 16;

/// Volume-wide ROC from scores quantised to 2^16 levels, so memory stays
/// constant however many slices are added.
#[derive(Clone, Debug)]
pub struct PooledRoc {
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl Default for PooledRoc {
    fn default() -> Self {
        Self { pos: vec![0; POOLED_BINS], neg: vec![0; POOLED_BINS] }
    }
}

impl PooledRoc {
    fn bin(s: f32) -> usize {
        ((s.clamp(0.0, 1.0) as f64) * (POOLED_BINS - 1) as f64).round() as usize
    }

    pub fn add<D: Dimension>(&mut self, scores: &ArrayView<f32, D>, gold: &ArrayView<bool, D>) -> Result<()> {
        same_shape(scores.shape(), gold.shape())?;
        for (&s, &g) in scores.iter().zip(gold.iter()) {
            if g {
                self.pos[Self::bin(s)] += 1;
            } else {
                self.neg[Self::bin(s)] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &PooledRoc) {
        for (a, b) in self.pos.iter_mut().zip(&other.pos) {
            *a += b;
        }
        for (a, b) in self.neg.iter_mut().zip(&other.neg) {
            *a += b;
        }
    }

    pub fn finish(&self) -> Result<Roc> {
        let pos = self.pos.iter().sum();
        let neg = self.neg.iter().sum();
        let groups = (0..POOLED_BINS)
            .rev()
            .filter(|&b| self.pos[b] + self.neg[b] > 0)
            .map(|b| (b as f64 / (POOLED_BINS - 1) as f64, self.pos[b], self.neg[b]));
        roc_from_groups(groups, pos, neg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// Divide by n - 1.
    #[default]
    Sample,
    /// Divide by n.
    Population,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and standard deviation; the std of fewer than two sample values is 0.
pub fn mean_std(values: &[f64], conv: StdConvention) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let div = match conv {
        StdConvention::Sample => n.saturating_sub(1),
        StdConvention::Population => n,
    };
    let std = if div == 0 { 0.0 } else { (ss / div as f64).sqrt() };
    MeanStd { mean, std, n }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub z: usize,
    pub confusion: ConfusionCounts,
    pub dice: f64,
    pub matthews: f64,
    pub both_empty: bool,
    /// `None` when the gold slice holds a single class.
    pub auc: Option<f64>,
    #[serde(skip)]
    pub roc: Option<Roc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold: f32,
    pub std: StdConvention,
    pub pooled_roc: bool,
    /// Keep every per-slice ROC curve in the report.
    pub keep_curves: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { threshold: 0.5, std: StdConvention::Sample, pooled_roc: false, keep_curves: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub options: EvalOptions,
    pub slices: Vec<SliceMetrics>,
    pub totals: ConfusionCounts,
    pub dice: MeanStd,
    /// Dice over slices where prediction or gold has foreground.
    pub dice_excluding_empty: MeanStd,
    pub matthews: MeanStd,
    pub auc: MeanStd,
    pub pooled: Option<Roc>,
}

pub fn slice_metrics(z: usize, scores: &ArrayView<f32, ndarray::Ix2>, gold: &ArrayView<bool, ndarray::Ix2>, opts: &EvalOptions) -> Result<SliceMetrics> {
    let pred = threshold(scores, opts.threshold);
    let c = confusion(&pred.view(), gold)?;
    let roc = match roc_auc(scores, gold) {
        Ok(r) => Some(r),
        Err(SegError::SingleClassGold) => None,
        Err(e) => return Err(e),
    };
    Ok(SliceMetrics {
        z,
        confusion: c,
        dice: dice(&c),
        matthews: matthews(&c),
        both_empty: c.both_empty(),
        auc: roc.as_ref().map(|r| r.auc),
        roc: if opts.keep_curves { roc } else { None },
    })
}

/// Slice-by-slice comparison of a probability stack with a gold stack.
///
/// Each worker holds one prediction and one gold slice at a time; results
/// are assembled in slice order whatever the completion order.
pub fn evaluate_stack(pred: &dyn VolumeSource, gold: &dyn VolumeSource, opts: &EvalOptions) -> Result<MetricsReport> {
    same_shape(&pred.shape(), &gold.shape())?;
    let depth = pred.shape()[0];
    let per_slice: Vec<(SliceMetrics, Option<PooledRoc>)> = (0..depth)
        .into_par_iter()
        .map(|z| {
            let s = pred.read_slice(z)?;
            let g = gold.read_mask_slice(z)?;
            let m = slice_metrics(z, &s.view(), &g.view(), opts)?;
            let pooled = if opts.pooled_roc {
                let mut p = PooledRoc::default();
                p.add(&s.view(), &g.view())?;
                Some(p)
            } else {
                None
            };
            Ok((m, pooled))
        })
        .collect::<Result<_>>()?;
    let mut pooled_acc = opts.pooled_roc.then(PooledRoc::default);
    let mut slices = Vec::with_capacity(depth);
    for (m, p) in per_slice {
        if let (Some(acc), Some(p)) = (pooled_acc.as_mut(), p) {
            acc.merge(&p);
        }
        slices.push(m);
    }
    let pooled = match pooled_acc {
        Some(acc) => match acc.finish() {
            Ok(r) => Some(r),
            Err(SegError::SingleClassGold) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(summarize(slices, pooled, opts))
}

pub fn summarize(slices: Vec<SliceMetrics>, pooled: Option<Roc>, opts: &EvalOptions) -> MetricsReport {
    let totals = slices.iter().fold(ConfusionCounts::default(), |a, s| a + s.confusion);
    let dices: Vec<f64> = slices.iter().map(|s| s.dice).collect();
    let nonempty: Vec<f64> = slices.iter().filter(|s| !s.both_empty).map(|s| s.dice).collect();
    let mccs: Vec<f64> = slices.iter().map(|s| s.matthews).collect();
    let aucs: Vec<f64> = slices.iter().filter_map(|s| s.auc).collect();
    MetricsReport {
        options: opts.clone(),
        totals,
        dice: mean_std(&dices, opts.std),
        dice_excluding_empty: mean_std(&nonempty, opts.std),
        matthews: mean_std(&mccs, opts.std),
        auc: mean_std(&aucs, opts.std),
        pooled,
        slices,
    }
}

impl MetricsReport {
    pub fn write_slice_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "z,tp,fp,tn,fn,dice,matthews,both_empty,auc")?;
        for s in &self.slices {
            let c = s.confusion;
            let auc = s.auc.map(|a| format!("{a:.12}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{:.12},{:.12},{},{}",
                s.z, c.tp, c.fp, c.tn, c.fn_, s.dice, s.matthews, s.both_empty, auc
            )?;
        }
        Ok(())
    }

    /// Per-slice curves (when kept) and the pooled curve (slice column `pooled`).
    pub fn write_roc_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "slice,threshold,fpr,tpr")?;
        for s in &self.slices {
            if let Some(r) = &s.roc {
                for p in &r.points {
                    writeln!(w, "{},{},{:.12},{:.12}", s.z, p.threshold, p.fpr, p.tpr)?;
                }
            }
        }
        if let Some(r) = &self.pooled {
            for p in &r.points {
                writeln!(w, "pooled,{},{:.12},{:.12}", p.threshold, p.fpr, p.tpr)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Volume, VoxelData};
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    fn mann_whitney(s: &[f32], g: &[bool]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if g[i] && !g[j] {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn confusion_examples() {
        let gold = Array2::from_shape_fn((10, 10), |(y, _)| y < 3);
        assert_eq!(confusion(&gold.view(), &gold.view()).unwrap(), counts(30, 0, 70, 0));
        let neg = gold.mapv(|b| !b);
        let c = confusion(&neg.view(), &gold.view()).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        let small = Array2::from_elem((3, 3), true);
        assert!(matches!(confusion(&small.view(), &gold.view()), Err(SegError::ShapeMismatch(_))));
    }

    #[test]
    fn dice_examples() {
        assert_eq!(dice(&counts(2, 1, 0, 1)), 2.0 / 3.0);
        assert_eq!(dice(&counts(5, 0, 9, 0)), 1.0);
        assert_eq!(dice(&counts(0, 3, 9, 0)), 0.0);
        let empty = counts(0, 0, 9, 0);
        assert!(empty.both_empty());
        assert_eq!(dice(&empty), 1.0);
    }

    #[test]
    fn matthews_examples() {
        assert_eq!(matthews(&counts(10, 0, 20, 0)), 1.0);
        assert_eq!(matthews(&counts(25, 25, 25, 25)), 0.0);
        // Marginals are 3, 3, 97 and 97, so the denominator is 3 * 97.
        assert!((matthews(&counts(2, 1, 96, 1)) - 191.0 / 291.0).abs() < 1e-15);
        assert_eq!(matthews(&counts(0, 0, 10, 0)), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let f = Array2::from_shape_vec((1, 3), vec![0.5f32, 0.50001, 0.9]).unwrap();
        assert_eq!(threshold(&f.view(), 0.5).into_raw_vec_and_offset().0, vec![false, true, true]);
        let f = Array2::from_elem((2, 2), 0.1f32);
        assert!(threshold(&f.view(), 0.0).iter().all(|&b| b));
    }

    #[test]
    fn auc_examples() {
        let g = Array2::from_shape_fn((4, 4), |(y, _)| y < 2);
        let s = g.mapv(|b| if b { 1.0f32 } else { 0.0 });
        assert_eq!(roc_auc(&s.view(), &g.view()).unwrap().auc, 1.0);
        let c = Array2::from_elem((4, 4), 0.3f32);
        assert_eq!(roc_auc(&c.view(), &g.view()).unwrap().auc, 0.5);
        let one = Array2::from_elem((4, 4), true);
        assert!(matches!(roc_auc(&c.view(), &one.view()), Err(SegError::SingleClassGold)));

        let s: Vec<f32> = (1..=8).map(|i| i as f32 / 10.0).collect();
        // Top three scores are positive, except 0.7 is swapped with 0.5.
        let g = vec![false, false, false, false, true, false, true, true];
        let sa = Array2::from_shape_vec((1, 8), s.clone()).unwrap();
        let ga = Array2::from_shape_vec((1, 8), g.clone()).unwrap();
        let auc = roc_auc(&sa.view(), &ga.view()).unwrap().auc;
        assert!((auc - mann_whitney(&s, &g)).abs() < 1e-12);
        assert!((auc - 14.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn two_slice_aggregate() {
        let v = mean_std(&[1.0, 0.5], StdConvention::Sample);
        assert_eq!(v.mean, 0.75);
        assert!((v.std - 0.353553390593).abs() < 1e-9);
        assert!((mean_std(&[1.0, 0.5], StdConvention::Population).std - 0.25).abs() < 1e-12);
    }

    fn stack(data: Array3<u8>) -> Volume {
        Volume::new("s", VoxelData::U8(data)).unwrap()
    }

    #[test]
    fn identical_stacks_score_perfectly() {
        let g = Array3::from_shape_fn((3, 8, 8), |(z, y, x)| if (y + x + z) % 3 == 0 { 255u8 } else { 0 });
        let r = evaluate_stack(&stack(g.clone()), &stack(g), &EvalOptions { pooled_roc: true, ..Default::default() }).unwrap();
        assert_eq!((r.dice.mean, r.dice.std, r.matthews.mean, r.matthews.std), (1.0, 0.0, 1.0, 0.0));
        assert_eq!(r.pooled.unwrap().auc, 1.0);
    }

    #[test]
    fn constructed_corruption() {
        // Slice z has 20 gold pixels of which z * 3 are dropped from the prediction.
        let gold = Array3::from_shape_fn((4, 10, 10), |(_, y, _)| if y < 2 { 255u8 } else { 0 });
        let pred = Array3::from_shape_fn((4, 10, 10), |(z, y, x)| if y < 2 && !(y == 0 && x < 3 * z) { 255u8 } else { 0 });
        let r = evaluate_stack(&stack(pred), &stack(gold), &EvalOptions::default()).unwrap();
        for s in &r.slices {
            let dropped = (3 * s.z) as f64;
            assert_eq!(s.dice, 2.0 * (20.0 - dropped) / (2.0 * (20.0 - dropped) + dropped));
        }
        let sum = r.slices.iter().fold(ConfusionCounts::default(), |a, s| a + s.confusion);
        assert_eq!(r.totals, sum);
        assert_eq!(r.totals.total(), 400);
    }

    #[test]
    fn mismatched_stacks() {
        let a = stack(Array3::zeros((2, 4, 4)));
        let b = stack(Array3::zeros((3, 4, 4)));
        assert!(matches!(evaluate_stack(&a, &b, &EvalOptions::default()), Err(SegError::ShapeMismatch(_))));
    }

    #[test]
    fn pooled_matches_exact_on_coarse_scores() {
        let s = Array2::from_shape_fn((16, 16), |(y, x)| ((y * 16 + x) % 11) as f32 / 10.0);
        let g = Array2::from_shape_fn((16, 16), |(y, x)| (y * 3 + x * 5) % 7 < 3);
        let mut p = PooledRoc::default();
        p.add(&s.view(), &g.view()).unwrap();
        let exact = roc_auc(&s.view(), &g.view()).unwrap().auc;
        assert!((p.finish().unwrap().auc - exact).abs() < 1e-12);
    }

    fn pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
        (proptest::collection::vec(any::<bool>(), 64), proptest::collection::vec(any::<bool>(), 64))
    }

    proptest! {
        #[test]
        fn dice_and_mcc_are_symmetric((p, g) in pair()) {
            let p = Array2::from_shape_vec((8, 8), p).unwrap();
            let g = Array2::from_shape_vec((8, 8), g).unwrap();
            let a = confusion(&p.view(), &g.view()).unwrap();
            let b = confusion(&g.view(), &p.view()).unwrap();
            prop_assert_eq!(dice(&a), dice(&b));
            prop_assert_eq!(matthews(&a), matthews(&b));
            let (np, ng) = (p.mapv(|v| !v), g.mapv(|v| !v));
            let n = confusion(&np.view(), &ng.view()).unwrap();
            prop_assert!((matthews(&a) - matthews(&n)).abs() < 1e-15);
            prop_assert_eq!(a.total(), 64);
            // F1 from precision and recall.
            if a.tp > 0 {
                let prec = a.tp as f64 / (a.tp + a.fp) as f64;
                let rec = a.tp as f64 / (a.tp + a.fn_) as f64;
                prop_assert!((dice(&a) - 2.0 * prec * rec / (prec + rec)).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_flips(s in proptest::collection::vec(0u8..20, 40), g in proptest::collection::vec(any::<bool>(), 40)) {
            prop_assume!(g.iter().any(|&b| b) && g.iter().any(|&b| !b));
            let s: Vec<f32> = s.iter().map(|&v| v as f32 / 19.0).collect();
            let sa = Array2::from_shape_vec((1, 40), s.clone()).unwrap();
            let ga = Array2::from_shape_vec((1, 40), g.clone()).unwrap();
            let r = roc_auc(&sa.view(), &ga.view()).unwrap();
            prop_assert!((r.auc - mann_whitney(&s, &g)).abs() < 1e-12);
            let flipped = roc_auc(&sa.mapv(|v| 1.0 - v).view(), &ga.mapv(|b| !b).view()).unwrap();
            prop_assert!((r.auc - flipped.auc).abs() < 1e-12);
            let inverted = roc_auc(&sa.mapv(|v| 1.0 - v).view(), &ga.view()).unwrap();
            prop_assert!((r.auc - (1.0 - inverted.auc)).abs() < 1e-12);
            for w in r.points.windows(2) {
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
            let last = r.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        }
    }
}
