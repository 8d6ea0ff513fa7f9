//! Tile-wise inference over whole volumes, thresholding and instance labels.
//!
//! 2D models run slice by slice: each slice is zero-padded, cut into tiles,
//! pushed through the network in batches and stitched from tile centres. 3D
//! models run over z-slabs one chunk tall so that only one slab of padded
//! input is held in memory at a time.

use std::io::Write;
use std::time::Instant;

use ndarray::{s, Array, Array2, Array3, ArrayView, ArrayView3, Axis, Dimension};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::wusem::wusem;
use crate::error::{Result, SegError};
use crate::labeling::{fiber_stats, label_components, FiberStats};
use crate::nn::{SegNet, Tensor};
use crate::tiler::{stitch, tile_grid, Tile, TileSpec};
use crate::volume::{pad_with, VolumeSource};

/// Anything that maps a batch `[N, 1, spatial..]` to same-shaped
/// probabilities.
pub trait Segmenter: Sync {
    fn dims(&self) -> usize;

    /// Spatial tile extents must be multiples of this.
    fn size_multiple(&self) -> usize {
        1
    }

    fn predict_batch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Segmenter for SegNet {
    fn dims(&self) -> usize {
        self.spec.dims
    }

    fn size_multiple(&self) -> usize {
        self.spec.size_multiple()
    }

    fn predict_batch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.net.infer(x)?)
    }
}

/// Outputs the same value everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantSegmenter {
    pub dims: usize,
    pub value: f32,
}

impl Segmenter for ConstantSegmenter {
    fn dims(&self) -> usize {
        self.dims
    }

    fn predict_batch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(Tensor::full(x.shape(), self.value))
    }
}

/// Applies a function to every voxel independently.
#[derive(Clone, Copy, Debug)]
pub struct PointwiseSegmenter {
    pub dims: usize,
    pub f: fn(f32) -> f32,
}

impl Segmenter for PointwiseSegmenter {
    fn dims(&self) -> usize {
        self.dims
    }

    fn predict_batch(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(x.map(self.f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub tile: TileSpec,
    pub threshold: f32,
    /// Tiles per network call.
    pub batch_size: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Round extents up to a stride multiple before tiling. When off, every
    /// axis is padded by the margin only and must then fit the grid exactly.
    pub auto_pad: bool,
}

impl PredictConfig {
    pub fn default_2d() -> Self {
        Self { tile: TileSpec::default_2d(), threshold: 0.5, batch_size: 4, workers: 0, auto_pad: true }
    }

    pub fn default_3d() -> Self {
        Self { tile: TileSpec::default_3d(), threshold: 0.5, batch_size: 2, workers: 0, auto_pad: true }
    }

    pub fn validate(&self, seg: &dyn Segmenter) -> Result<()> {
        if self.tile.ndim() != seg.dims() {
            return Err(SegError::GeometryMismatch(format!(
                "{}-axis tile spec for a {}D model",
                self.tile.ndim(),
                seg.dims()
            )));
        }
        let m = seg.size_multiple();
        if self.tile.tile.iter().any(|t| t % m != 0) {
            return Err(SegError::GeometryMismatch(format!("tile {:?} is not a multiple of {m}", self.tile.tile)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(SegError::InvalidParams(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.batch_size == 0 {
            return Err(SegError::InvalidParams("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn padding(&self, unpadded: &[usize]) -> (Vec<usize>, Vec<usize>) {
        if self.auto_pad {
            self.tile.auto_padding(unpadded)
        } else {
            let m = self.tile.margin();
            (m.clone(), m)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SliceTiming {
    pub z: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// Fiber probability per voxel, `[z, y, x]`.
    pub probability: Array3<f32>,
    pub timings: Vec<SliceTiming>,
}

impl Prediction {
    pub fn binary(&self, threshold: f32) -> Array3<bool> {
        self.probability.mapv(|p| p > threshold)
    }

    pub fn write_timing_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "z,seconds")?;
        for t in &self.timings {
            writeln!(w, "{},{:.6}", t.z, t.seconds)?;
        }
        Ok(())
    }
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SegError::InvalidParams(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every tile through the model, `batch` tiles per call.
fn run_tiles<D: Dimension>(tiles: Vec<Tile<f32, D>>, seg: &dyn Segmenter, batch: usize) -> Result<Vec<Tile<f32, D>>> {
    let groups: Vec<Vec<Tile<f32, D>>> = tiles
        .par_chunks(batch)
        .map(|group| {
            let mut shape = vec![group.len(), 1];
            shape.extend_from_slice(group[0].data.shape());
            let mut data = Vec::with_capacity(shape.iter().product());
            for t in group {
                data.extend(t.data.iter().copied());
            }
            let x = Tensor::from_vec(&shape, data)?;
            let y = seg.predict_batch(&x)?;
            if y.shape() != shape.as_slice() {
                return Err(SegError::ShapeMismatch(format!("model returned {:?} for input {shape:?}", y.shape())));
            }
            group
                .iter()
                .zip(y.unstack())
                .map(|(t, out)| {
                    let data = Array::from_shape_vec(t.data.raw_dim(), out.into_data())
                        .map_err(|e| SegError::ShapeMismatch(e.to_string()))?;
                    Ok(Tile { data, anchor: t.anchor.clone(), grid_index: t.grid_index.clone() })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}

/// Probability map of one 2D slice.
pub fn predict_slice(slice: &ArrayView<f32, ndarray::Ix2>, seg: &dyn Segmenter, cfg: &PredictConfig) -> Result<Array2<f32>> {
    let shape = slice.shape().to_vec();
    let (before, after) = cfg.padding(&shape);
    let padded = pad_with(slice, &before, &after);
    let tiles = tile_grid(&padded.view(), &cfg.tile)?;
    stitch(&run_tiles(tiles, seg, cfg.batch_size)?, &cfg.tile, &shape)
}

/// Probability map of an in-memory 3D block.
pub fn predict_block(vol: &ArrayView3<f32>, seg: &dyn Segmenter, cfg: &PredictConfig) -> Result<Array3<f32>> {
    let shape = vol.shape().to_vec();
    let (before, after) = cfg.padding(&shape);
    let padded = pad_with(vol, &before, &after);
    let tiles = tile_grid(&padded.view(), &cfg.tile)?;
    stitch(&run_tiles(tiles, seg, cfg.batch_size)?, &cfg.tile, &shape)
}

/// Fiber probability for every voxel of `src`.
pub fn predict_volume(src: &dyn VolumeSource, seg: &dyn Segmenter, cfg: &PredictConfig) -> Result<Prediction> {
    cfg.validate(seg)?;
    with_pool(cfg.workers, || match seg.dims() {
        2 => predict_2d(src, seg, cfg),
        _ => predict_3d(src, seg, cfg),
    })?
}

fn predict_2d(src: &dyn VolumeSource, seg: &dyn Segmenter, cfg: &PredictConfig) -> Result<Prediction> {
    let [d, h, w] = src.shape();
    let slices: Vec<(Array2<f32>, f64)> = (0..d)
        .into_par_iter()
        .map(|z| {
            let start = Instant::now();
            let p = predict_slice(&src.read_slice(z)?.view(), seg, cfg)?;
            Ok((p, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mut probability = Array3::zeros((d, h, w));
    let mut timings = Vec::with_capacity(d);
    for (z, (p, seconds)) in slices.into_iter().enumerate() {
        probability.index_axis_mut(Axis(0), z).assign(&p);
        timings.push(SliceTiming { z, seconds });
    }
    Ok(Prediction { probability, timings })
}

fn predict_3d(src: &dyn VolumeSource, seg: &dyn Segmenter, cfg: &PredictConfig) -> Result<Prediction> {
    let [d, h, w] = src.shape();
    let (before, after) = cfg.padding(&[d, h, w]);
    let (t, st) = (cfg.tile.tile[0], cfg.tile.stride[0]);
    let slab_spec = TileSpec::new(&cfg.tile.tile, &cfg.tile.stride)?;
    let padded_plane = [h + before[1] + after[1], w + before[2] + after[2]];
    // The full padded extent must fit the grid even though it is never built.
    cfg.tile.grid_shape(&[d + before[0] + after[0], padded_plane[0], padded_plane[1]])?;
    let mut probability = Array3::zeros((d, h, w));
    let mut timings = Vec::with_capacity(d);
    for gz in 0..d.div_ceil(st) {
        let start = Instant::now();
        let mut slab = Array3::zeros((t, padded_plane[0], padded_plane[1]));
        for k in 0..t {
            let z = (gz * st + k).checked_sub(before[0]).filter(|&z| z < d);
            if let Some(z) = z {
                let sl = src.read_slice(z)?;
                slab.slice_mut(s![k, before[1]..before[1] + h, before[2]..before[2] + w]).assign(&sl);
            }
        }
        let rows = st.min(d - gz * st);
        let tiles = tile_grid(&slab.view(), &slab_spec)?;
        let out = stitch(&run_tiles(tiles, seg, cfg.batch_size)?, &slab_spec, &[rows, h, w])?;
        probability.slice_mut(s![gz * st..gz * st + rows, .., ..]).assign(&out);
        let per = start.elapsed().as_secs_f64() / rows as f64;
        timings.extend((0..rows).map(|k| SliceTiming { z: gz * st + k, seconds: per }));
    }
    Ok(Prediction { probability, timings })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instances<D: Dimension> {
    pub labels: Array<u32, D>,
    pub count: usize,
    pub stats: Vec<FiberStats>,
}

/// Face-connected fiber instances with per-label statistics.
pub fn label_instances<D: Dimension>(mask: &ArrayView<bool, D>, spacing_um: f64) -> Instances<D> {
    let (labels, count) = label_components(mask);
    let stats = fiber_stats(&labels.view(), spacing_um);
    Instances { labels, count, stats }
}

/// Slice-wise instances with touching fibers split by successive erosions.
/// Returns the label volume and the label count of every slice.
pub fn label_slices_wusem(mask: &ArrayView3<bool>, initial_radius: usize, delta_radius: usize) -> Result<(Array3<u32>, Vec<usize>)> {
    let per: Vec<(Array2<u32>, usize)> = (0..mask.len_of(Axis(0)))
        .into_par_iter()
        .map(|z| wusem(&mask.index_axis(Axis(0), z), initial_radius, delta_radius, true))
        .collect::<Result<_>>()?;
    let mut labels = Array3::zeros(mask.raw_dim());
    let mut counts = Vec::with_capacity(per.len());
    for (z, (l, k)) in per.into_iter().enumerate() {
        labels.index_axis_mut(Axis(0), z).assign(&l);
        counts.push(k);
    }
    Ok((labels, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build, ArchSpec, Family};
    use crate::volume::{Volume, VoxelData};
    use proptest::prelude::*;

    fn vol(d: usize, h: usize, w: usize) -> Volume {
        let data = Array3::from_shape_fn((d, h, w), |(z, y, x)| ((z * 31 + y * 7 + x * 3) % 251) as u8);
        Volume::new("v", VoxelData::U8(data)).unwrap()
    }

    fn small_2d() -> PredictConfig {
        PredictConfig { tile: TileSpec::uniform(2, 24, 16).unwrap(), ..PredictConfig::default_2d() }
    }

    fn small_3d() -> PredictConfig {
        PredictConfig { tile: TileSpec::uniform(3, 16, 8).unwrap(), ..PredictConfig::default_3d() }
    }

    #[test]
    fn constant_stub_fills_the_volume() {
        let seg = ConstantSegmenter { dims: 2, value: 0.9 };
        let p = predict_volume(&vol(3, 40, 50), &seg, &small_2d()).unwrap();
        assert_eq!(p.probability.dim(), (3, 40, 50));
        assert!(p.probability.iter().all(|&v| v == 0.9));
        assert_eq!(p.timings.len(), 3);
        let p3 = predict_volume(&vol(13, 20, 9), &ConstantSegmenter { dims: 3, value: 0.9 }, &small_3d()).unwrap();
        assert!(p3.probability.iter().all(|&v| v == 0.9));
        assert_eq!(p3.timings.iter().map(|t| t.z).collect::<Vec<_>>(), (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn timing_csv() {
        let p = predict_volume(&vol(2, 8, 8), &ConstantSegmenter { dims: 2, value: 0.1 }, &small_2d()).unwrap();
        let mut buf = Vec::new();
        p.write_timing_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("z,seconds\n0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn network_prediction_is_deterministic_and_bounded() {
        let net = build(&ArchSpec::desk(Family::Unet, 2), 3).unwrap();
        let v = vol(2, 30, 37);
        let a = predict_volume(&v, &net, &small_2d()).unwrap();
        let b = predict_volume(&v, &net, &PredictConfig { workers: 1, ..small_2d() }).unwrap();
        assert_eq!(a.probability, b.probability);
        assert!(a.probability.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn tile_must_suit_the_model() {
        let net = build(&ArchSpec::desk(Family::Unet, 2), 3).unwrap();
        let cfg = PredictConfig { tile: TileSpec::uniform(2, 22, 16).unwrap(), ..small_2d() };
        assert!(matches!(predict_volume(&vol(1, 8, 8), &net, &cfg), Err(SegError::GeometryMismatch(_))));
        let cfg = PredictConfig { tile: TileSpec::uniform(3, 16, 8).unwrap(), ..small_2d() };
        assert!(predict_volume(&vol(1, 8, 8), &net, &cfg).is_err());
    }

    #[test]
    fn without_auto_pad_geometry_must_fit() {
        let seg = ConstantSegmenter { dims: 2, value: 0.5 };
        let cfg = PredictConfig { auto_pad: false, ..small_2d() };
        assert!(predict_volume(&vol(1, 32, 48), &seg, &cfg).is_ok());
        assert!(matches!(predict_volume(&vol(1, 30, 48), &seg, &cfg), Err(SegError::GeometryMismatch(_))));
    }

    #[test]
    fn label_examples() {
        let empty = Array2::from_elem((9, 9), false);
        assert_eq!(label_instances(&empty.view(), 1.0).count, 0);
        let disk = Array2::from_shape_fn((31, 31), |(y, x)| (y as f64 - 15.0).powi(2) + (x as f64 - 15.0).powi(2) <= 42.25);
        let inst = label_instances(&disk.view(), 1.0);
        assert_eq!(inst.count, 1);
        assert!((inst.stats[0].equivalent_radius - 6.5).abs() < 0.25);
    }

    #[test]
    fn wusem_slices_split_touching_disks() {
        let m = Array3::from_shape_fn((2, 40, 60), |(_, y, x)| {
            let d = |cx: f64| (y as f64 - 20.0).powi(2) + (x as f64 - cx).powi(2) <= 100.0;
            d(20.0) || d(37.0)
        });
        let (labels, counts) = label_slices_wusem(&m.view(), 0, 2).unwrap();
        assert_eq!(counts, vec![2, 2]);
        assert!(labels.iter().zip(&m).all(|(&l, &b)| l == 0 || b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn tiled_pointwise_prediction_equals_direct(d in 1usize..4, h in 1usize..40, w in 1usize..40) {
            let v = vol(d, h, w);
            let f: fn(f32) -> f32 = |x| (x * 3.0).sin().abs();
            let direct = v.to_f32().mapv(f);
            let p2 = predict_volume(&v, &PointwiseSegmenter { dims: 2, f }, &small_2d()).unwrap();
            prop_assert_eq!(&p2.probability, &direct);
            let p3 = predict_volume(&v, &PointwiseSegmenter { dims: 3, f }, &small_3d()).unwrap();
            prop_assert_eq!(&p3.probability, &direct);
        }

        #[test]
        fn pipeline_labels_are_disjoint_and_inside_the_mask(bits in proptest::collection::vec(any::<bool>(), 2 * 12 * 12)) {
            let m = Array3::from_shape_vec((2, 12, 12), bits).unwrap();
            let inst = label_instances(&m.view(), 1.0);
            let again = label_instances(&m.view(), 1.0);
            prop_assert_eq!(&inst, &again);
            for (&l, &b) in inst.labels.iter().zip(&m) {
                prop_assert!(l == 0 || b);
                prop_assert!(!b || l != 0);
            }
            prop_assert_eq!(inst.stats.iter().map(|s| s.voxels).sum::<u64>(), m.iter().filter(|&&b| b).count() as u64);
        }
    }
}
