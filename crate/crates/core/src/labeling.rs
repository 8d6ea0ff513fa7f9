//! Connected components with face connectivity (4 in 2D, 6 in 3D) and
//! per-instance statistics.

use std::collections::VecDeque;

use ndarray::{Array, ArrayView, Dimension};
use serde::Serialize;

/// Row-major strides of a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Calls `f` with the flat index of every face neighbour of `i`.
#[inline]
pub(crate) fn for_each_face_neighbor(i: usize, shape: &[usize], strides: &[usize], mut f: impl FnMut(usize)) {
    for a in 0..shape.len() {
        let c = (i / strides[a]) % shape[a];
        if c > 0 {
            f(i - strides[a]);
        }
        if c + 1 < shape[a] {
            f(i + strides[a]);
        }
    }
}

/// Calls `f` with the flat index of every neighbour of `i` sharing at least a
/// corner (8 in 2D, 26 in 3D).
pub(crate) fn for_each_full_neighbor(i: usize, shape: &[usize], strides: &[usize], mut f: impl FnMut(usize)) {
    let nd = shape.len();
    let coords: Vec<usize> = (0..nd).map(|a| (i / strides[a]) % shape[a]).collect();
    let total = 3usize.pow(nd as u32);
    'outer: for code in 0..total {
        if code == total / 2 {
            continue;
        }
        let mut j = i as isize;
        let mut c = code;
        for a in (0..nd).rev() {
            let d = (c % 3) as isize - 1;
            c /= 3;
            let n = coords[a] as isize + d;
            if n < 0 || n >= shape[a] as isize {
                continue 'outer;
            }
            j += d * strides[a] as isize;
        }
        f(j as usize);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// 4 in 2D, 6 in 3D.
    Face,
    /// 8 in 2D, 26 in 3D.
    Full,
}

/// Labels foreground components 1..=K in raster order of their first voxel,
/// with face connectivity.
pub fn label_components<D: Dimension>(mask: &ArrayView<bool, D>) -> (Array<u32, D>, usize) {
    label_components_with(mask, Connectivity::Face)
}

pub fn label_components_with<D: Dimension>(mask: &ArrayView<bool, D>, conn: Connectivity) -> (Array<u32, D>, usize) {
    let shape = mask.shape().to_vec();
    let st = strides(&shape);
    let flat: Vec<bool> = mask.iter().copied().collect();
    let mut labels = vec![0u32; flat.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..flat.len() {
        if !flat[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let visit = |j: usize| {
                if flat[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            match conn {
                Connectivity::Face => for_each_face_neighbor(i, &shape, &st, visit),
                Connectivity::Full => for_each_full_neighbor(i, &shape, &st, visit),
            }
        }
    }
    let out = Array::from_shape_vec(mask.raw_dim(), labels).expect("same size");
    (out, next as usize)
}

/// Renumbers non-zero labels to 1..=K in raster order of first occurrence.
pub fn relabel_sequential<D: Dimension>(labels: &mut Array<u32, D>) -> usize {
    let mut map = std::collections::HashMap::new();
    let mut next = 0u32;
    for v in labels.iter_mut() {
        if *v == 0 {
            continue;
        }
        *v = *map.entry(*v).or_insert_with(|| {
            next += 1;
            next
        });
    }
    next as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberStats {
    pub label: u32,
    pub voxels: u64,
    /// Voxel-index centroid, axis order as in the array (`[y, x]` or `[z, y, x]`).
    pub centroid: Vec<f64>,
    /// Radius of the disk with the same cross-sectional area, in physical units.
    /// For 3D labels the area is the voxel count divided by the label's z extent.
    pub equivalent_radius: f64,
}

/// Per-label statistics for labels 1..=K.
pub fn fiber_stats<D: Dimension>(labels: &ArrayView<u32, D>, spacing: f64) -> Vec<FiberStats> {
    let ndim = labels.ndim();
    let k = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut count = vec![0u64; k + 1];
    let mut sum = vec![vec![0f64; ndim]; k + 1];
    let mut zmin = vec![usize::MAX; k + 1];
    let mut zmax = vec![0usize; k + 1];
    for (idx, &l) in labels.indexed_iter() {
        if l == 0 {
            continue;
        }
        let l = l as usize;
        count[l] += 1;
        let idx = idx.into_pattern_slice(ndim);
        for (s, &c) in sum[l].iter_mut().zip(&idx) {
            *s += c as f64;
        }
        zmin[l] = zmin[l].min(idx[0]);
        zmax[l] = zmax[l].max(idx[0]);
    }
    (1..=k)
        .filter(|&l| count[l] > 0)
        .map(|l| {
            let n = count[l] as f64;
            let area = if ndim == 3 { n / (zmax[l] - zmin[l] + 1) as f64 } else { n };
            FiberStats {
                label: l as u32,
                voxels: count[l],
                centroid: sum[l].iter().map(|s| s / n).collect(),
                equivalent_radius: (area / std::f64::consts::PI).sqrt() * spacing,
            }
        })
        .collect()
}

trait PatternSlice {
    fn into_pattern_slice(self, ndim: usize) -> Vec<usize>;
}

impl<P: ndarray::IntoDimension> PatternSlice for P {
    fn into_pattern_slice(self, ndim: usize) -> Vec<usize> {
        let d = self.into_dimension();
        (0..ndim).map(|i| d[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;

    pub(crate) fn disk(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> Array2<bool> {
        Array2::from_shape_fn((h, w), |(y, x)| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
    }

    #[test]
    fn empty_mask() {
        let m = Array2::<bool>::from_elem((5, 5), false);
        assert_eq!(label_components(&m.view()).1, 0);
        assert!(fiber_stats(&Array2::<u32>::zeros((3, 3)).view(), 1.0).is_empty());
    }

    #[test]
    fn thirteen_pixel_disk_radius() {
        let m = disk(31, 31, 15.0, 15.0, 6.5);
        let (l, k) = label_components(&m.view());
        assert_eq!(k, 1);
        let s = &fiber_stats(&l.view(), 1.0)[0];
        assert!((s.equivalent_radius - 6.5).abs() < 0.25, "{}", s.equivalent_radius);
        assert_eq!(s.centroid, vec![15.0, 15.0]);
    }

    #[test]
    fn two_disks_with_centroids() {
        let a = disk(40, 60, 10.0, 12.0, 5.0);
        let b = disk(40, 60, 28.0, 45.0, 7.0);
        let m = Array2::from_shape_fn((40, 60), |i| a[i] || b[i]);
        let (l, k) = label_components(&m.view());
        assert_eq!(k, 2);
        let s = fiber_stats(&l.view(), 0.65);
        assert_eq!(s[0].centroid, vec![10.0, 12.0]);
        assert_eq!(s[1].centroid, vec![28.0, 45.0]);
        assert!((s[1].equivalent_radius / 0.65 - 7.0).abs() < 0.3);
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let mut m = Array2::from_elem((3, 3), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        assert_eq!(label_components(&m.view()).1, 2);
    }

    #[test]
    fn diagonal_pixels_join_with_full_connectivity() {
        let mut m = Array2::from_elem((3, 3), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        m[[2, 0]] = true;
        assert_eq!(label_components_with(&m.view(), Connectivity::Full).1, 1);
        let mut v = Array3::from_elem((2, 2, 2), false);
        v[[0, 0, 0]] = true;
        v[[1, 1, 1]] = true;
        assert_eq!(label_components_with(&v.view(), Connectivity::Full).1, 1);
        assert_eq!(label_components(&v.view()).1, 2);
    }

    #[test]
    fn cylinder_in_3d() {
        let d = disk(20, 20, 9.0, 9.0, 4.0);
        let v = Array3::from_shape_fn((6, 20, 20), |(_, y, x)| d[[y, x]]);
        let (l, k) = label_components(&v.view());
        assert_eq!(k, 1);
        let s = &fiber_stats(&l.view(), 1.0)[0];
        assert_eq!(s.voxels, 6 * d.iter().filter(|&&b| b).count() as u64);
        assert!((s.equivalent_radius - 4.0).abs() < 0.3);
    }

    proptest! {
        #[test]
        fn labels_partition_the_mask(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = Array2::from_shape_vec((8, 8), bits).unwrap();
            let (l, k) = label_components(&m.view());
            for (i, &b) in m.indexed_iter() {
                prop_assert_eq!(b, l[i] != 0);
            }
            // Adjacent foreground pixels share a label.
            for y in 0..8 {
                for x in 0..8 {
                    if x + 1 < 8 && m[[y, x]] && m[[y, x + 1]] { prop_assert_eq!(l[[y, x]], l[[y, x + 1]]); }
                    if y + 1 < 8 && m[[y, x]] && m[[y + 1, x]] { prop_assert_eq!(l[[y, x]], l[[y + 1, x]]); }
                }
            }
            let mut relabeled = l.clone();
            prop_assert_eq!(relabel_sequential(&mut relabeled), k);
            prop_assert_eq!(relabeled, l);
        }
    }
}
