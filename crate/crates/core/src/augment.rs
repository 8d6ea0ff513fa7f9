//! Geometric augmentation shared by an image and its label.
//!
//! Transforms act in the x-y plane about the frame centre. Images are
//! resampled bilinearly and labels by nearest neighbour; everything mapped
//! from outside the frame is 0. 3D data gets the same in-plane transform on
//! every z slice plus an optional flip along z.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Degrees; the angle is drawn from `[-r, r]`.
    pub rotation_range: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Fractions of the width/height.
    pub width_shift: f64,
    pub height_shift: f64,
    /// Scale factors are drawn from `[1 - z, 1 + z]` per axis.
    pub zoom_range: f64,
    /// Degrees.
    pub shear_range: f64,
    /// 3D only.
    pub z_flip: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range: 10.0,
            horizontal_flip: true,
            vertical_flip: true,
            width_shift: 0.05,
            height_shift: 0.05,
            zoom_range: 0.1,
            shear_range: 5.0,
            z_flip: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every range zero and every flip off.
    pub fn none() -> Self {
        Self {
            rotation_range: 0.0,
            horizontal_flip: false,
            vertical_flip: false,
            width_shift: 0.0,
            height_shift: 0.0,
            zoom_range: 0.0,
            shear_range: 0.0,
            z_flip: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.rotation_range) && ok(self.shear_range) && ok(self.zoom_range)) {
            return Err(SegError::InvalidParams("augmentation ranges must be finite and non-negative".into()));
        }
        if !(ok(self.width_shift) && self.width_shift < 1.0 && ok(self.height_shift) && self.height_shift < 1.0) {
            return Err(SegError::InvalidParams("shifts must lie in [0, 1)".into()));
        }
        if self.zoom_range >= 1.0 {
            return Err(SegError::InvalidParams(format!("zoom range {} leaves (0, 2)", self.zoom_range)));
        }
        Ok(())
    }
}

/// Sampled transform parameters; the matrix depends on the frame size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugTransform {
    pub angle_deg: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub zoom_x: f64,
    pub zoom_y: f64,
    pub shear_deg: f64,
    pub flip_h: bool,
    pub flip_v: bool,
    pub flip_z: bool,
}

impl AugTransform {
    pub fn identity() -> Self {
        Self {
            angle_deg: 0.0,
            shift_x: 0.0,
            shift_y: 0.0,
            zoom_x: 1.0,
            zoom_y: 1.0,
            shear_deg: 0.0,
            flip_h: false,
            flip_v: false,
            flip_z: false,
        }
    }

    /// Forward map on homogeneous `(x, y, 1)` pixel coordinates:
    /// shift . rotate . shear . zoom . flip, about the frame centre.
    pub fn matrix(&self, height: usize, width: usize) -> [[f64; 3]; 3] {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let sh = self.shear_deg.to_radians();
        let flip = [[if self.flip_h { -1.0 } else { 1.0 }, 0.0, 0.0], [0.0, if self.flip_v { -1.0 } else { 1.0 }, 0.0], [0.0, 0.0, 1.0]];
        let zoom = [[self.zoom_x, 0.0, 0.0], [0.0, self.zoom_y, 0.0], [0.0, 0.0, 1.0]];
        let shear = [[1.0, -sh.sin(), 0.0], [0.0, sh.cos(), 0.0], [0.0, 0.0, 1.0]];
        let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let to_origin = [[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]];
        let back = [[1.0, 0.0, cx + self.shift_x * width as f64], [0.0, 1.0, cy + self.shift_y * height as f64], [0.0, 0.0, 1.0]];
        [back, rot, shear, zoom, flip, to_origin].into_iter().reduce(|a, b| mat_mul(&a, &b)).unwrap()
    }

    /// 3D form on `(x, y, z, 1)`; z is only ever reflected.
    pub fn matrix_3d(&self, depth: usize, height: usize, width: usize) -> [[f64; 4]; 4] {
        let m = self.matrix(height, width);
        let (fz, tz) = if self.flip_z { (-1.0, depth as f64 - 1.0) } else { (1.0, 0.0) };
        [
            [m[0][0], m[0][1], 0.0, m[0][2]],
            [m[1][0], m[1][1], 0.0, m[1][2]],
            [0.0, 0.0, fz, tz],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn invert_affine(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
    [[a, b, -(a * m[0][2] + b * m[1][2])], [c, d, -(c * m[0][2] + d * m[1][2])], [0.0, 0.0, 1.0]]
}

/// Draws one transform. The number of random draws is fixed, so streams
/// stay aligned whatever the configuration.
pub fn sample_transform(cfg: &AugmentConfig, rng: &mut impl Rng) -> AugTransform {
    let mut sym = |r: f64| (2.0 * rng.random::<f64>() - 1.0) * r;
    let angle_deg = sym(cfg.rotation_range);
    let shift_x = sym(cfg.width_shift);
    let shift_y = sym(cfg.height_shift);
    let zoom_x = 1.0 + sym(cfg.zoom_range);
    let zoom_y = 1.0 + sym(cfg.zoom_range);
    let shear_deg = sym(cfg.shear_range);
    let flip_h = rng.random_bool(0.5) && cfg.horizontal_flip;
    let flip_v = rng.random_bool(0.5) && cfg.vertical_flip;
    let flip_z = rng.random_bool(0.5) && cfg.z_flip;
    AugTransform { angle_deg, shift_x, shift_y, zoom_x, zoom_y, shear_deg, flip_h, flip_v, flip_z }
}

/// Rounds coordinates within 1e-9 of an integer so that flips and
/// quarter turns resample exactly.
#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn bilinear(img: &ArrayView2<f32>, y: f64, x: f64) -> f32 {
    let (h, w) = img.dim();
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            img[[yy as usize, xx as usize]] as f64
        }
    };
    let mut v = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wy * wx;
            if wgt != 0.0 {
                v += wgt * at(y0 + dy, x0 + dx);
            }
        }
    }
    v as f32
}

fn nearest<T: Copy + Default>(lab: &ArrayView2<T>, y: f64, x: f64) -> T {
    let (h, w) = lab.dim();
    let (yy, xx) = (y.round(), x.round());
    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
        T::default()
    } else {
        lab[[yy as usize, xx as usize]]
    }
}

/// Warps an image (bilinear) and its label (nearest neighbour) with the
/// same in-plane transform.
pub fn apply<T: Copy + Default>(t: &AugTransform, image: &ArrayView2<f32>, label: &ArrayView2<T>) -> Result<(Array2<f32>, Array2<T>)> {
    if image.dim() != label.dim() {
        return Err(SegError::ShapeMismatch(format!("image {:?} vs label {:?}", image.dim(), label.dim())));
    }
    let (h, w) = image.dim();
    let inv = invert_affine(&t.matrix(h, w));
    let mut img = Array2::zeros((h, w));
    let mut lab = Array2::from_elem((h, w), T::default());
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let sx = snap(inv[0][0] * xf + inv[0][1] * yf + inv[0][2]);
            let sy = snap(inv[1][0] * xf + inv[1][1] * yf + inv[1][2]);
            img[[y, x]] = bilinear(image, sy, sx);
            lab[[y, x]] = nearest(label, sy, sx);
        }
    }
    Ok((img, lab))
}

/// 3D form of [`apply`]: the in-plane warp on every slice, then the z flip.
pub fn apply_3d<T: Copy + Default>(t: &AugTransform, image: &ArrayView3<f32>, label: &ArrayView3<T>) -> Result<(Array3<f32>, Array3<T>)> {
    if image.dim() != label.dim() {
        return Err(SegError::ShapeMismatch(format!("image {:?} vs label {:?}", image.dim(), label.dim())));
    }
    let (d, h, w) = image.dim();
    let mut img = Array3::zeros((d, h, w));
    let mut lab = Array3::from_elem((d, h, w), T::default());
    for z in 0..d {
        let (i2, l2) = apply(t, &image.index_axis(Axis(0), z), &label.index_axis(Axis(0), z))?;
        let dz = if t.flip_z { d - 1 - z } else { z };
        img.index_axis_mut(Axis(0), dz).assign(&i2);
        lab.index_axis_mut(Axis(0), dz).assign(&l2);
    }
    Ok((img, lab))
}
