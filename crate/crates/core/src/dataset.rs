//! Training sets for the networks: 2D slices or 3D chunks paired with binary
//! masks, augmented afresh every epoch.

use ndarray::{Array2, Array3, ArrayView3, Axis, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{apply, apply_3d, sample_transform, AugmentConfig};
use crate::error::{Result, SegError};
use crate::nn::{self, Dataset, Tensor};
use crate::phantom::Phantom;
use crate::tiler::window;

fn item_rng(seed: u64, index: usize, epoch: usize) -> ChaCha8Rng {
    let mut s = seed ^ 0x5851_f42d_4c95_7f2d;
    for v in [index as u64, epoch as u64] {
        s = s.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(v.wrapping_add(1));
    }
    ChaCha8Rng::seed_from_u64(s)
}

fn to_tensor<D: Dimension>(a: ndarray::Array<f32, D>) -> nn::Result<Tensor<f32>> {
    let mut shape = vec![1];
    shape.extend_from_slice(a.shape());
    let (v, _) = a.as_standard_layout().to_owned().into_raw_vec_and_offset();
    Tensor::from_vec(&shape, v)
}

fn check_pairs<D: Dimension>(images: &[ndarray::Array<f32, D>], masks: &[ndarray::Array<f32, D>]) -> Result<()> {
    if images.len() != masks.len() {
        return Err(SegError::ShapeMismatch(format!("{} images but {} masks", images.len(), masks.len())));
    }
    for (i, (a, b)) in images.iter().zip(masks).enumerate() {
        if a.shape() != b.shape() {
            return Err(SegError::ShapeMismatch(format!("pair {i}: image {:?} vs mask {:?}", a.shape(), b.shape())));
        }
    }
    Ok(())
}

/// 2D images with 0/1 masks.
pub struct SliceDataset {
    pub images: Vec<Array2<f32>>,
    pub masks: Vec<Array2<f32>>,
    pub augment: AugmentConfig,
}

impl SliceDataset {
    pub fn new(images: Vec<Array2<f32>>, masks: Vec<Array2<f32>>, augment: AugmentConfig) -> Result<Self> {
        check_pairs(&images, &masks)?;
        augment.validate()?;
        Ok(Self { images, masks, augment })
    }

    /// Every slice of every phantom.
    pub fn from_phantoms(phantoms: &[Phantom], augment: AugmentConfig) -> Result<Self> {
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for p in phantoms {
            for z in 0..p.config.depth {
                let (img, lab) = p.slice(z);
                images.push(img);
                masks.push(lab.mapv(|l| (l != 0) as u8 as f32));
            }
        }
        Self::new(images, masks, augment)
    }
}

impl Dataset for SliceDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn item(&self, index: usize, epoch: usize) -> nn::Result<(Tensor<f32>, Tensor<f32>)> {
        let mut rng = item_rng(self.augment.seed, index, epoch);
        let t = sample_transform(&self.augment, &mut rng);
        let (x, y) = apply(&t, &self.images[index].view(), &self.masks[index].view())
            .map_err(|e| nn::NnError::InvalidConfig(e.to_string()))?;
        Ok((to_tensor(x)?, to_tensor(y)?))
    }
}

/// 3D chunks with 0/1 masks.
pub struct ChunkDataset {
    pub images: Vec<Array3<f32>>,
    pub masks: Vec<Array3<f32>>,
    pub augment: AugmentConfig,
}

impl ChunkDataset {
    pub fn new(images: Vec<Array3<f32>>, masks: Vec<Array3<f32>>, augment: AugmentConfig) -> Result<Self> {
        check_pairs(&images, &masks)?;
        augment.validate()?;
        Ok(Self { images, masks, augment })
    }

    /// Crops of `size` every `step` voxels that lie fully inside each phantom.
    pub fn from_phantoms(phantoms: &[Phantom], size: [usize; 3], step: [usize; 3], augment: AugmentConfig) -> Result<Self> {
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for p in phantoms {
            let mask = p.labels.mapv(|l| (l != 0) as u8 as f32);
            images.extend(crops(&p.image.view(), size, step)?);
            masks.extend(crops(&mask.view(), size, step)?);
        }
        Self::new(images, masks, augment)
    }
}

impl Dataset for ChunkDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn item(&self, index: usize, epoch: usize) -> nn::Result<(Tensor<f32>, Tensor<f32>)> {
        let mut rng = item_rng(self.augment.seed, index, epoch);
        let t = sample_transform(&self.augment, &mut rng);
        let (x, y) = apply_3d(&t, &self.images[index].view(), &self.masks[index].view())
            .map_err(|e| nn::NnError::InvalidConfig(e.to_string()))?;
        Ok((to_tensor(x)?, to_tensor(y)?))
    }
}

/// Crops of `size` at every multiple of `step` that fits, row-major.
pub fn crops(vol: &ArrayView3<f32>, size: [usize; 3], step: [usize; 3]) -> Result<Vec<Array3<f32>>> {
    let shape = vol.shape();
    if size.iter().zip(shape).any(|(s, n)| s > n) || size.contains(&0) || step.contains(&0) {
        return Err(SegError::InvalidParams(format!("crop {size:?} / step {step:?} for a {shape:?} volume")));
    }
    let counts: Vec<usize> = (0..3).map(|a| (shape[a] - size[a]) / step[a] + 1).collect();
    let mut out = Vec::with_capacity(counts.iter().product());
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let origin = [i * step[0], j * step[1], k * step[2]];
                out.push(window(vol, &origin, &size).to_owned());
            }
        }
    }
    Ok(out)
}

/// Slice `z` of a 3D training crop, for inspection.
pub fn crop_slice(chunk: &Array3<f32>, z: usize) -> Array2<f32> {
    chunk.index_axis(Axis(0), z).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomConfig};

    fn tiny() -> Phantom {
        generate(&PhantomConfig { n_fibers: 3, depth: 8, height: 32, width: 32, radius_min: 4.0, radius_max: 5.0, seed: 1, ..Default::default() }).unwrap()
    }

    #[test]
    fn slices_are_channel_first_and_binary() {
        let ds = SliceDataset::from_phantoms(&[tiny()], AugmentConfig::default()).unwrap();
        assert_eq!(ds.len(), 8);
        let (x, y) = ds.item(3, 0).unwrap();
        assert_eq!(x.shape(), &[1, 32, 32]);
        assert_eq!(y.shape(), &[1, 32, 32]);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn items_are_reproducible_and_vary_by_epoch() {
        let ds = SliceDataset::from_phantoms(&[tiny()], AugmentConfig::default()).unwrap();
        assert_eq!(ds.item(2, 1).unwrap(), ds.item(2, 1).unwrap());
        assert_ne!(ds.item(2, 1).unwrap().0, ds.item(2, 2).unwrap().0);
    }

    #[test]
    fn no_augmentation_returns_the_data() {
        let p = tiny();
        let ds = SliceDataset::from_phantoms(std::slice::from_ref(&p), AugmentConfig::none()).unwrap();
        let (x, _) = ds.item(5, 3).unwrap();
        assert_eq!(x.data(), p.slice(5).0.as_slice().unwrap());
    }

    #[test]
    fn chunk_crops() {
        let ds = ChunkDataset::from_phantoms(&[tiny()], [8, 16, 16], [8, 8, 8], AugmentConfig::none()).unwrap();
        assert_eq!(ds.len(), 9);
        let (x, y) = ds.item(4, 0).unwrap();
        assert_eq!(x.shape(), &[1, 8, 16, 16]);
        assert_eq!(y.shape(), x.shape());
        assert_eq!(crop_slice(&ds.images[4], 0), tiny().image.slice(ndarray::s![0, 8..24, 8..24]).to_owned());
    }

    #[test]
    fn oversized_crop_is_rejected() {
        assert!(crops(&Array3::zeros((2, 4, 4)).view(), [3, 4, 4], [1, 1, 1]).is_err());
    }
}
