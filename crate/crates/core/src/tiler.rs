//! Overlapping tiles (2D) and chunks (3D) with crop-to-center stitching.
//!
//! A tile at grid index `g` starts at `g * stride` in the padded field. Only its
//! central `stride`-sized window, offset by `margin = (tile - stride) / 2`,
//! contributes to the stitched output, so every unpadded voxel is taken from
//! exactly one tile.

use ndarray::{Array, ArrayView, ArrayViewMut, Dimension, Slice};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile: Vec<usize>,
    pub stride: Vec<usize>,
}

impl TileSpec {
    pub fn new(tile: &[usize], stride: &[usize]) -> Result<Self> {
        if tile.len() != stride.len() || tile.is_empty() {
            return Err(SegError::InvalidParams(format!("tile {tile:?} and stride {stride:?} differ in rank")));
        }
        for (&t, &s) in tile.iter().zip(stride) {
            if !(t > s && s > 0) {
                return Err(SegError::InvalidParams(format!("tile {t} must exceed stride {s} > 0")));
            }
            if (t - s) % 2 != 0 {
                return Err(SegError::InvalidParams(format!("tile {t} minus stride {s} must be even")));
            }
        }
        Ok(Self { tile: tile.to_vec(), stride: stride.to_vec() })
    }

    pub fn uniform(ndim: usize, tile: usize, stride: usize) -> Result<Self> {
        Self::new(&vec![tile; ndim], &vec![stride; ndim])
    }

    /// 288-pixel tiles every 256 pixels.
    pub fn default_2d() -> Self {
        Self::uniform(2, 288, 256).expect("valid")
    }

    /// 64-voxel chunks every 32 voxels.
    pub fn default_3d() -> Self {
        Self::uniform(3, 64, 32).expect("valid")
    }

    pub fn ndim(&self) -> usize {
        self.tile.len()
    }

    pub fn margin(&self) -> Vec<usize> {
        self.tile.iter().zip(&self.stride).map(|(t, s)| (t - s) / 2).collect()
    }

    /// Tiles per axis for a padded extent.
    pub fn grid_shape(&self, padded: &[usize]) -> Result<Vec<usize>> {
        if padded.len() != self.ndim() {
            return Err(SegError::GeometryMismatch(format!(
                "field has {} axes, tile spec has {}",
                padded.len(),
                self.ndim()
            )));
        }
        let extra: Vec<usize> = padded
            .iter()
            .zip(self.tile.iter().zip(&self.stride))
            .map(|(&e, (&t, &s))| if e < t { t - e } else { (s - (e - t) % s) % s })
            .collect();
        if extra.iter().any(|&x| x > 0) {
            return Err(SegError::GeometryMismatch(format!(
                "padded extent {padded:?} does not fit tile {:?} / stride {:?}; add {extra:?} voxels of padding per axis",
                self.tile, self.stride
            )));
        }
        Ok(padded.iter().zip(self.tile.iter().zip(&self.stride)).map(|(&e, (&t, &s))| (e - t) / s + 1).collect())
    }

    pub fn tile_count(&self, padded: &[usize]) -> Result<usize> {
        Ok(self.grid_shape(padded)?.iter().product())
    }

    /// Zero padding `(before, after)` per axis that makes an arbitrary
    /// unpadded extent tileable: each axis is rounded up to a multiple of the
    /// stride, then the margin is added on both sides.
    pub fn auto_padding(&self, unpadded: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let m = self.margin();
        let before = m.clone();
        let after = unpadded
            .iter()
            .zip(&self.stride)
            .zip(&m)
            .map(|((&u, &s), &m)| m + (u.max(1).div_ceil(s) * s - u))
            .collect();
        (before, after)
    }

    /// `(grid_index, anchor)` pairs in row-major order.
    pub fn origins(&self, padded: &[usize]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let grid = self.grid_shape(padded)?;
        let n: usize = grid.iter().product();
        let mut out = Vec::with_capacity(n);
        for flat in 0..n {
            let mut idx = vec![0; grid.len()];
            let mut rem = flat;
            for a in (0..grid.len()).rev() {
                idx[a] = rem % grid[a];
                rem /= grid[a];
            }
            let anchor = idx.iter().zip(&self.stride).map(|(i, s)| i * s).collect();
            out.push((idx, anchor));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tile<A, D: Dimension> {
    pub data: Array<A, D>,
    /// Origin in padded source coordinates.
    pub anchor: Vec<usize>,
    pub grid_index: Vec<usize>,
}

/// Cuts a padded field into overlapping tiles, row-major.
pub fn tile_grid<A: Clone, D: Dimension>(field: &ArrayView<A, D>, spec: &TileSpec) -> Result<Vec<Tile<A, D>>> {
    let origins = spec.origins(field.shape())?;
    Ok(origins
        .into_iter()
        .map(|(grid_index, anchor)| Tile { data: window(field, &anchor, &spec.tile).to_owned(), anchor, grid_index })
        .collect())
}

/// 3D counterpart of [`tile_grid`].
pub fn chunk_grid<A: Clone>(vol: &ndarray::ArrayView3<A>, spec: &TileSpec) -> Result<Vec<Tile<A, ndarray::Ix3>>> {
    tile_grid(vol, spec)
}

pub(crate) fn window<'a, A, D: Dimension>(field: &'a ArrayView<A, D>, origin: &[usize], shape: &[usize]) -> ArrayView<'a, A, D> {
    field.slice_each_axis(|ax| {
        let i = ax.axis.index();
        Slice::from(origin[i]..origin[i] + shape[i])
    })
}

fn window_mut<'a, A, D: Dimension>(
    field: &'a mut ArrayViewMut<A, D>,
    origin: &[usize],
    shape: &[usize],
) -> ArrayViewMut<'a, A, D> {
    field.slice_each_axis_mut(|ax| {
        let i = ax.axis.index();
        Slice::from(origin[i]..origin[i] + shape[i])
    })
}

/// Copies the central window of a tile into `out` (unpadded coordinates),
/// clipping at the output border.
pub fn place_center<A: Clone, D: Dimension>(
    out: &mut ArrayViewMut<A, D>,
    tile: &ArrayView<A, D>,
    grid_index: &[usize],
    spec: &TileSpec,
) {
    let m = spec.margin();
    let dest: Vec<usize> = grid_index.iter().zip(&spec.stride).map(|(g, s)| g * s).collect();
    let len: Vec<usize> = dest.iter().zip(&spec.stride).zip(out.shape()).map(|((&d, &s), &n)| s.min(n.saturating_sub(d))).collect();
    if len.contains(&0) {
        return;
    }
    let src = window(tile, &m, &len);
    window_mut(out, &dest, &len).assign(&src);
}

/// Reassembles per-tile results into an unpadded field of `out_shape`.
///
/// `out_shape` may be smaller than the grid's coverage, in which case the
/// trailing auto-padding is cropped away.
pub fn stitch<A: Clone + Default, D: Dimension>(
    tiles: &[Tile<A, D>],
    spec: &TileSpec,
    out_shape: &[usize],
) -> Result<Array<A, D>> {
    let grid = grid_from_output(spec, out_shape)?;
    let n: usize = grid.iter().product();
    let mut seen = vec![false; n];
    for t in tiles {
        if t.grid_index.len() != grid.len() || t.grid_index.iter().zip(&grid).any(|(i, g)| i >= g) {
            return Err(SegError::GeometryMismatch(format!("grid index {:?} outside grid {grid:?}", t.grid_index)));
        }
        if t.data.shape() != spec.tile.as_slice() {
            return Err(SegError::ShapeMismatch(format!("tile {:?} has shape {:?}, expected {:?}", t.grid_index, t.data.shape(), spec.tile)));
        }
        let flat = t.grid_index.iter().zip(&grid).fold(0, |acc, (i, g)| acc * g + i);
        if std::mem::replace(&mut seen[flat], true) {
            return Err(SegError::DuplicateTile(t.grid_index.clone()));
        }
    }
    if let Some(flat) = seen.iter().position(|s| !s) {
        let mut idx = vec![0; grid.len()];
        let mut rem = flat;
        for a in (0..grid.len()).rev() {
            idx[a] = rem % grid[a];
            rem /= grid[a];
        }
        return Err(SegError::MissingTile(idx));
    }
    let dim = D::zeros(out_shape.len());
    let mut out = Array::from_elem(shape_as::<D>(dim, out_shape), A::default());
    for t in tiles {
        place_center(&mut out.view_mut(), &t.data.view(), &t.grid_index, spec);
    }
    Ok(out)
}

/// Grid that covers an unpadded extent.
pub fn grid_from_output(spec: &TileSpec, out_shape: &[usize]) -> Result<Vec<usize>> {
    if out_shape.len() != spec.ndim() || out_shape.contains(&0) {
        return Err(SegError::GeometryMismatch(format!("output shape {out_shape:?} for a {}-axis tile spec", spec.ndim())));
    }
    Ok(out_shape.iter().zip(&spec.stride).map(|(&u, &s)| u.div_ceil(s)).collect())
}

fn shape_as<D: Dimension>(mut dim: D, shape: &[usize]) -> D {
    for (i, &s) in shape.iter().enumerate() {
        dim[i] = s;
    }
    dim
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::pad;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    #[test]
    fn hundred_tiles_for_a_2560_slice() {
        let spec = TileSpec::default_2d();
        assert_eq!(spec.margin(), vec![16, 16]);
        assert_eq!(spec.tile_count(&[2592, 2592]).unwrap(), 100);
        assert_eq!(spec.tile_count(&[288, 288]).unwrap(), 1);
    }

    #[test]
    fn mismatch_reports_fix() {
        let err = TileSpec::default_2d().grid_shape(&[2591, 2591]).unwrap_err();
        match err {
            SegError::GeometryMismatch(m) => assert!(m.contains("[1, 1]"), "{m}"),
            e => panic!("{e:?}"),
        }
        assert!(TileSpec::default_2d().grid_shape(&[200, 288]).is_err());
    }

    #[test]
    fn chunk_counts() {
        let spec = TileSpec::default_3d();
        assert_eq!(spec.tile_count(&[96, 96, 96]).unwrap(), 8);
        assert_eq!(spec.tile_count(&[64, 64, 64]).unwrap(), 1);
        // Enumeration oracle on a large synthetic extent.
        let mut per_axis = 0;
        let mut a = 0;
        while a + 64 <= 2592 {
            per_axis += 1;
            a += 32;
        }
        assert_eq!(spec.grid_shape(&[2592, 2592, 2592]).unwrap(), vec![per_axis; 3]);
        assert_eq!(per_axis, 80);
    }

    #[test]
    fn invalid_specs() {
        assert!(TileSpec::uniform(2, 10, 0).is_err());
        assert!(TileSpec::uniform(2, 10, 7).is_err());
        assert!(TileSpec::uniform(2, 8, 10).is_err());
    }

    #[test]
    fn missing_and_duplicate_tiles() {
        let spec = TileSpec::uniform(2, 6, 4).unwrap();
        let f = Array2::<f32>::ones((10, 10));
        let mut tiles = tile_grid(&f.view(), &spec).unwrap();
        assert_eq!(tiles.len(), 4);
        let first = tiles.remove(0);
        assert!(matches!(stitch(&tiles, &spec, &[8, 8]), Err(SegError::MissingTile(i)) if i == vec![0, 0]));
        tiles.push(first.clone());
        tiles.push(first);
        assert!(matches!(stitch(&tiles, &spec, &[8, 8]), Err(SegError::DuplicateTile(_))));
    }

    #[test]
    fn parity_checkerboard() {
        let spec = TileSpec::uniform(2, 6, 4).unwrap();
        let f = Array2::<u8>::zeros((3 * 4 + 2, 3 * 4 + 2));
        let tiles: Vec<_> = tile_grid(&f.view(), &spec)
            .unwrap()
            .into_iter()
            .map(|mut t| {
                let parity = ((t.grid_index[0] + t.grid_index[1]) % 2) as u8;
                t.data.fill(parity);
                t
            })
            .collect();
        let out = stitch(&tiles, &spec, &[12, 12]).unwrap();
        let oracle = Array2::from_shape_fn((12, 12), |(y, x)| ((y / 4 + x / 4) % 2) as u8);
        assert_eq!(out, oracle);
    }

    #[test]
    fn auto_padding_crops_back() {
        let spec = TileSpec::uniform(2, 12, 8).unwrap();
        let f = Array2::from_shape_fn((13, 5), |(y, x)| (y * 5 + x) as f32);
        let (before, after) = spec.auto_padding(&[13, 5]);
        let p = crate::volume::pad_with(&f.view(), &before, &after);
        assert_eq!(p.dim(), (16 + 4, 8 + 4));
        let tiles = tile_grid(&p.view(), &spec).unwrap();
        assert_eq!(stitch(&tiles, &spec, &[13, 5]).unwrap(), f);
    }

    #[test]
    fn round_trip_3d() {
        let spec = TileSpec::default_3d();
        let v = Array3::from_shape_fn((64, 64, 64), |(z, y, x)| (z * 4096 + y * 64 + x) as u32);
        let p = pad(&v.view(), 16);
        let chunks = chunk_grid(&p.view(), &spec).unwrap();
        assert_eq!(chunks.len(), 8);
        assert_eq!(stitch(&chunks, &spec, &[64, 64, 64]).unwrap(), v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stitch_inverts_tiling_2d(gy in 1usize..5, gx in 1usize..5, s in 1usize..6, m in 1usize..4, seed in any::<u32>()) {
            let spec = TileSpec::uniform(2, s + 2 * m, s).unwrap();
            let (h, w) = (gy * s, gx * s);
            let f = Array2::from_shape_fn((h, w), |(y, x)| seed.wrapping_add((y * 131 + x) as u32));
            let p = pad(&f.view(), m);
            let tiles = tile_grid(&p.view(), &spec).unwrap();
            prop_assert_eq!(tiles.len(), gy * gx);
            prop_assert_eq!(stitch(&tiles, &spec, &[h, w]).unwrap(), f);
        }

        #[test]
        fn stitch_inverts_tiling_3d(g in proptest::collection::vec(1usize..4, 3), s in 1usize..4, m in 1usize..3) {
            let spec = TileSpec::uniform(3, s + 2 * m, s).unwrap();
            let shape = (g[0] * s, g[1] * s, g[2] * s);
            let v = Array3::from_shape_fn(shape, |(z, y, x)| (z * 10000 + y * 100 + x) as i64);
            let p = pad(&v.view(), m);
            let tiles = tile_grid(&p.view(), &spec).unwrap();
            prop_assert_eq!(tiles.len(), g.iter().product::<usize>());
            prop_assert_eq!(stitch(&tiles, &spec, &[shape.0, shape.1, shape.2]).unwrap(), v);
        }

        #[test]
        fn central_windows_partition(gy in 1usize..5, gx in 1usize..5, s in 1usize..6, m in 1usize..4) {
            let spec = TileSpec::uniform(2, s + 2 * m, s).unwrap();
            let (h, w) = (gy * s, gx * s);
            let mut count = Array2::<u32>::zeros((h, w));
            for (g, _) in spec.origins(&[h + 2 * m, w + 2 * m]).unwrap() {
                for y in g[0] * s..(g[0] + 1) * s {
                    for x in g[1] * s..(g[1] + 1) * s {
                        count[[y, x]] += 1;
                    }
                }
            }
            prop_assert!(count.iter().all(|&c| c == 1));
        }

        #[test]
        fn count_formula(e in proptest::collection::vec(0usize..6, 3), s in 1usize..5, m in 1usize..3) {
            let spec = TileSpec::uniform(3, s + 2 * m, s).unwrap();
            let ext: Vec<usize> = e.iter().map(|k| s + 2 * m + k * s).collect();
            let expect: usize = ext.iter().map(|x| (x - s - 2 * m) / s + 1).product();
            prop_assert_eq!(spec.tile_count(&ext).unwrap(), expect);
            prop_assert_eq!(spec.origins(&ext).unwrap().len(), expect);
        }
    }
}
