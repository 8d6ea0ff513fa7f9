//! The unsupervised pipeline: histogram equalization, TV denoising,
//! multi-Otsu thresholding, binarization and WUSEM fiber separation.

pub mod equalize;
pub mod morphology;
pub mod otsu;
pub mod tv;
pub mod watershed;
pub mod wusem;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use equalize::equalize_histogram;
pub use morphology::{erode_disk, squared_edt};
pub use otsu::{binarize_class, multi_otsu, multi_otsu_bins};
pub use tv::{denoise_tv_chambolle, total_variation, TvResult};
pub use watershed::watershed;
pub use wusem::wusem;

use crate::error::{Result, SegError};

/// Circular region of interest in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub center_y: f64,
    pub center_x: f64,
    pub radius: f64,
}

impl Roi {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (y as f64 - self.center_y).powi(2) + (x as f64 - self.center_x).powi(2) <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicParams {
    pub equalize_bins: usize,
    pub tv_weight: f64,
    pub tv_max_iter: usize,
    pub tv_tol: f64,
    pub otsu_classes: usize,
    /// 1-based; `None` selects the brightest class.
    pub fiber_class: Option<usize>,
    pub wusem_initial_radius: usize,
    pub wusem_delta_radius: usize,
    pub watershed_line: bool,
    pub roi: Option<Roi>,
}

impl Default for ClassicParams {
    fn default() -> Self {
        Self {
            equalize_bins: 256,
            tv_weight: 0.3,
            tv_max_iter: 200,
            tv_tol: 2e-4,
            otsu_classes: 4,
            fiber_class: None,
            wusem_initial_radius: 0,
            wusem_delta_radius: 2,
            watershed_line: true,
            roi: None,
        }
    }
}

impl ClassicParams {
    pub fn fiber_class(&self) -> usize {
        self.fiber_class.unwrap_or(self.otsu_classes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SegError::InvalidParams(m));
        if self.otsu_classes < 2 {
            return bad(format!("otsu_classes = {} (need at least 2)", self.otsu_classes));
        }
        let fc = self.fiber_class();
        if fc < 1 || fc > self.otsu_classes {
            return bad(format!("fiber_class = {fc} outside 1..={}", self.otsu_classes));
        }
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return bad(format!("tv_weight = {}", self.tv_weight));
        }
        if self.wusem_delta_radius < 1 {
            return bad("wusem_delta_radius must be at least 1".into());
        }
        if self.equalize_bins < 2 {
            return bad(format!("equalize_bins = {}", self.equalize_bins));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicOutput {
    pub labels: Array2<u32>,
    pub count: usize,
    pub thresholds: Vec<f32>,
    pub mask: Array2<bool>,
    pub tv_converged: bool,
}

/// Runs the full pipeline on one slice with values in `[0, 1]`.
///
/// A slice whose histogram is too flat for the requested number of classes
/// (for instance an all-background slice) yields zero labels.
pub fn segment_classic(slice: &ArrayView2<f32>, params: &ClassicParams) -> Result<ClassicOutput> {
    params.validate()?;
    let eq = equalize_histogram(slice, params.equalize_bins)?;
    let tv = denoise_tv_chambolle(&eq.view(), params.tv_weight, params.tv_max_iter, params.tv_tol)?;
    let thresholds = match multi_otsu(&tv.image.view(), params.otsu_classes) {
        Ok(t) => t,
        Err(SegError::DegenerateHistogram(_)) => {
            return Ok(ClassicOutput {
                labels: Array2::zeros(slice.dim()),
                count: 0,
                thresholds: vec![],
                mask: Array2::from_elem(slice.dim(), false),
                tv_converged: tv.converged,
            })
        }
        Err(e) => return Err(e),
    };
    let mut mask = binarize_class(&tv.image.view(), &thresholds, params.fiber_class());
    if let Some(roi) = &params.roi {
        for ((y, x), m) in mask.indexed_iter_mut() {
            *m &= roi.contains(y, x);
        }
    }
    let (labels, count) =
        wusem(&mask.view(), params.wusem_initial_radius, params.wusem_delta_radius, params.watershed_line)?;
    Ok(ClassicOutput { labels, count, thresholds, mask, tv_converged: tv.converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = ClassicParams::default();
        assert_eq!((p.tv_weight, p.otsu_classes, p.fiber_class()), (0.3, 4, 4));
        assert_eq!((p.wusem_initial_radius, p.wusem_delta_radius, p.watershed_line), (0, 2, true));
        p.validate().unwrap();
    }

    #[test]
    fn invalid_params() {
        let p = ClassicParams { fiber_class: Some(5), ..Default::default() };
        assert!(p.validate().is_err());
        let p = ClassicParams { otsu_classes: 1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ClassicParams { wusem_delta_radius: 0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn blank_slice_has_no_labels() {
        let f = Array2::from_elem((32, 32), 0.2f32);
        assert_eq!(segment_classic(&f.view(), &ClassicParams::default()).unwrap().count, 0);
    }

    #[test]
    fn roi_restricts_labels() {
        let f = Array2::from_shape_fn((40, 40), |(y, x)| {
            let a = (y as f64 - 10.0).powi(2) + (x as f64 - 10.0).powi(2) < 36.0;
            let b = (y as f64 - 30.0).powi(2) + (x as f64 - 30.0).powi(2) < 36.0;
            if a || b { 0.8 } else { 0.2 + ((x * 7 + y * 3) % 5) as f32 * 0.01 }
        });
        let p = ClassicParams { otsu_classes: 2, ..Default::default() };
        assert_eq!(segment_classic(&f.view(), &p).unwrap().count, 2);
        let p = ClassicParams { otsu_classes: 2, roi: Some(Roi { center_y: 10.0, center_x: 10.0, radius: 12.0 }), ..Default::default() };
        let out = segment_classic(&f.view(), &p).unwrap();
        assert_eq!(out.count, 1);
        assert_eq!(out.labels[[30, 30]], 0);
    }
}
