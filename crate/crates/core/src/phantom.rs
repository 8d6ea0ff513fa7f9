//! Synthetic fiber beds with exact ground truth.
//!
//! Fibers are straight cylinders along z with radii drawn from a range,
//! placed by rejection sampling so that no two touch and each lies fully
//! inside the frame. Bright fibers sit on a darker background with additive
//! Gaussian noise; defect slices are wiped to background plus noise while
//! the gold labels still describe the fibers.

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::volume::{quantize_u8, Volume, VoxelData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub name: String,
    pub n_fibers: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub background: f32,
    pub foreground: f32,
    pub noise: f32,
    /// Minimum empty gap between fiber surfaces, in pixels.
    pub min_gap: f64,
    pub defect_slices: Vec<usize>,
    /// Placement draws allowed per fiber.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            name: "phantom".into(),
            n_fibers: 200,
            radius_min: 6.5,
            radius_max: 10.0,
            depth: 64,
            height: 512,
            width: 512,
            background: 0.2,
            foreground: 0.8,
            noise: 0.05,
            min_gap: 2.0,
            defect_slices: vec![],
            max_attempts: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub center_y: f64,
    pub center_x: f64,
    pub radius: f64,
}

impl Fiber {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (y as f64 - self.center_y).powi(2) + (x as f64 - self.center_x).powi(2) <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub config: PhantomConfig,
    /// Intensities in `[0, 1]`, indexed `[z, y, x]`.
    pub image: Array3<f32>,
    /// Fiber `k` (0-based in `fibers`) carries label `k + 1` on every slice.
    pub labels: Array3<u32>,
    pub fibers: Vec<Fiber>,
}

impl Phantom {
    pub fn gold_mask(&self) -> Array3<bool> {
        self.labels.mapv(|l| l != 0)
    }

    pub fn image_volume(&self) -> Volume {
        let mut v = Volume::new(self.config.name.clone(), VoxelData::U8(quantize_u8(&self.image))).expect("non-empty");
        v.spacing_um = 1.0;
        v
    }

    pub fn label_volume(&self) -> Volume {
        Volume::new(format!("{}-gold", self.config.name), VoxelData::U32(self.labels.clone())).expect("non-empty")
    }

    pub fn slice(&self, z: usize) -> (Array2<f32>, Array2<u32>) {
        (self.image.index_axis(Axis(0), z).to_owned(), self.labels.index_axis(Axis(0), z).to_owned())
    }

    /// Metadata for a sidecar JSON file.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "fibers": self.fibers,
            "defect_slices": self.config.defect_slices,
        })
    }
}

fn validate(cfg: &PhantomConfig) -> Result<()> {
    if cfg.depth == 0 || cfg.height == 0 || cfg.width == 0 {
        return Err(SegError::InvalidParams("phantom extents must be positive".into()));
    }
    if !(cfg.radius_min > 0.0 && cfg.radius_min <= cfg.radius_max) {
        return Err(SegError::InvalidParams(format!("radius range [{}, {}]", cfg.radius_min, cfg.radius_max)));
    }
    if !(cfg.noise >= 0.0) || cfg.min_gap < 0.0 {
        return Err(SegError::InvalidParams("noise and gap must be non-negative".into()));
    }
    if let Some(&z) = cfg.defect_slices.iter().find(|&&z| z >= cfg.depth) {
        return Err(SegError::IndexOutOfRange { index: z, len: cfg.depth });
    }
    Ok(())
}

pub fn place_fibers(cfg: &PhantomConfig, rng: &mut impl Rng) -> Result<Vec<Fiber>> {
    let mut fibers: Vec<Fiber> = Vec::with_capacity(cfg.n_fibers);
    for placed in 0..cfg.n_fibers {
        let mut ok = false;
        for _ in 0..cfg.max_attempts {
            let radius = rng.random_range(cfg.radius_min..=cfg.radius_max);
            // Keep one pixel of background between the disk and the border.
            let lo = radius + 1.0;
            let (hi_y, hi_x) = (cfg.height as f64 - 2.0 - radius, cfg.width as f64 - 2.0 - radius);
            if hi_y < lo || hi_x < lo {
                return Err(SegError::PlacementFailure { placed, requested: cfg.n_fibers });
            }
            let f = Fiber { center_y: rng.random_range(lo..=hi_y), center_x: rng.random_range(lo..=hi_x), radius };
            let clear = fibers.iter().all(|g| {
                let d = ((f.center_y - g.center_y).powi(2) + (f.center_x - g.center_x).powi(2)).sqrt();
                d >= f.radius + g.radius + cfg.min_gap
            });
            if clear {
                fibers.push(f);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SegError::PlacementFailure { placed, requested: cfg.n_fibers });
        }
    }
    Ok(fibers)
}

/// Rasterises fibers into a 2D label image.
pub fn rasterize(fibers: &[Fiber], height: usize, width: usize) -> Array2<u32> {
    let mut labels = Array2::zeros((height, width));
    for (k, f) in fibers.iter().enumerate() {
        let y0 = (f.center_y - f.radius).floor().max(0.0) as usize;
        let y1 = ((f.center_y + f.radius).ceil() as usize).min(height - 1);
        let x0 = (f.center_x - f.radius).floor().max(0.0) as usize;
        let x1 = ((f.center_x + f.radius).ceil() as usize).min(width - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if f.contains(y, x) {
                    labels[[y, x]] = k as u32 + 1;
                }
            }
        }
    }
    labels
}

pub fn generate(cfg: &PhantomConfig) -> Result<Phantom> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fibers = place_fibers(cfg, &mut rng)?;
    let plane = rasterize(&fibers, cfg.height, cfg.width);
    let noise = Normal::new(0.0f32, cfg.noise).map_err(|e| SegError::InvalidParams(e.to_string()))?;
    let mut image = Array3::zeros((cfg.depth, cfg.height, cfg.width));
    let mut labels = Array3::zeros((cfg.depth, cfg.height, cfg.width));
    for z in 0..cfg.depth {
        labels.index_axis_mut(Axis(0), z).assign(&plane);
        let defect = cfg.defect_slices.contains(&z);
        let mut sl = image.index_axis_mut(Axis(0), z);
        for ((y, x), v) in sl.indexed_iter_mut() {
            let base = if !defect && plane[[y, x]] != 0 { cfg.foreground } else { cfg.background };
            *v = (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(Phantom { config: cfg.clone(), image, labels, fibers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::label_components;

    fn small(n: usize) -> PhantomConfig {
        PhantomConfig { n_fibers: n, depth: 3, height: 96, width: 96, seed: 2, ..Default::default() }
    }

    #[test]
    fn no_fibers_is_pure_noise() {
        let p = generate(&small(0)).unwrap();
        assert!(p.labels.iter().all(|&l| l == 0));
        let mean = p.image.iter().map(|&v| v as f64).sum::<f64>() / p.image.len() as f64;
        assert!((mean - 0.2).abs() < 0.01);
    }

    #[test]
    fn full_size_bookkeeping() {
        let cfg = PhantomConfig { depth: 2, ..Default::default() };
        let p = generate(&cfg).unwrap();
        assert_eq!(p.fibers.len(), 200);
        for z in 0..2 {
            let mask = p.labels.index_axis(Axis(0), z).mapv(|l| l != 0);
            assert_eq!(label_components(&mask.view()).1, 200);
            let max = p.labels.index_axis(Axis(0), z).iter().copied().max().unwrap();
            assert_eq!(max, 200);
        }
        assert!(p.fibers.iter().all(|f| (6.5..=10.0).contains(&f.radius)));
    }

    #[test]
    fn defect_slice_is_wiped() {
        let cfg = PhantomConfig { defect_slices: vec![1], ..small(10) };
        let p = generate(&cfg).unwrap();
        assert_eq!(p.metadata()["defect_slices"], serde_json::json!([1]));
        let mask = p.gold_mask();
        let fg_mean = |z: usize| {
            let vals: Vec<f32> = p.image.index_axis(Axis(0), z).iter().zip(mask.index_axis(Axis(0), z)).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
            vals.iter().sum::<f32>() / vals.len() as f32
        };
        assert!(fg_mean(0) > 0.7);
        assert!(fg_mean(1) < 0.3);
        assert!(p.labels.index_axis(Axis(0), 1).iter().any(|&l| l != 0));
    }

    #[test]
    fn overcrowding_fails() {
        let cfg = PhantomConfig { n_fibers: 500, max_attempts: 200, ..small(0) };
        assert!(matches!(generate(&cfg), Err(SegError::PlacementFailure { requested: 500, .. })));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&small(5)).unwrap(), generate(&small(5)).unwrap());
        assert_ne!(generate(&small(5)).unwrap().fibers, generate(&PhantomConfig { seed: 3, ..small(5) }).unwrap().fibers);
    }
}
