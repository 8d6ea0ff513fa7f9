use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};

use crate::labeling::{for_each_face_neighbor, strides};

#[derive(PartialEq)]
struct Key(f64, u64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

/// Marker-seeded priority flood on `surface` (lower floods first, ties in
/// insertion order), 4-connected and restricted to `mask`.
///
/// With `line` set, a pixel that touches an already flooded pixel of another
/// basin is left at 0 and floods no further, so distinct labels are never
/// 4-adjacent.
pub fn watershed(surface: &ArrayView2<f64>, markers: &ArrayView2<u32>, mask: &ArrayView2<bool>, line: bool) -> Array2<u32> {
    let shape = [surface.nrows(), surface.ncols()];
    let st = strides(&shape);
    let surf: Vec<f64> = surface.iter().copied().collect();
    let inside: Vec<bool> = mask.iter().copied().collect();
    let mut labels: Vec<u32> = markers.iter().zip(&inside).map(|(&m, &i)| if i { m } else { 0 }).collect();
    let is_marker: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let mut queued = is_marker.clone();
    let mut done = vec![false; labels.len()];
    let mut heap = BinaryHeap::new();
    let mut age = 0u64;
    for (i, &m) in is_marker.iter().enumerate() {
        if m {
            heap.push(Reverse(Key(surf[i], age, i)));
            age += 1;
        }
    }
    while let Some(Reverse(Key(_, _, i))) = heap.pop() {
        done[i] = true;
        if line && !is_marker[i] {
            let own = labels[i];
            let mut clash = false;
            for_each_face_neighbor(i, &shape, &st, |j| clash |= done[j] && labels[j] != 0 && labels[j] != own);
            if clash {
                labels[i] = 0;
                continue;
            }
        }
        let own = labels[i];
        for_each_face_neighbor(i, &shape, &st, |j| {
            if inside[j] && !queued[j] {
                queued[j] = true;
                labels[j] = own;
                heap.push(Reverse(Key(surf[j], age, j)));
                age += 1;
            }
        });
    }
    Array2::from_shape_vec((shape[0], shape[1]), labels).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_basins_meet_with_a_line() {
        // A valley at each end of a strip.
        let surface = Array2::from_shape_fn((1, 9), |(_, x)| -((x as f64 - 4.0).abs()));
        let mut markers = Array2::zeros((1, 9));
        markers[[0, 0]] = 1;
        markers[[0, 8]] = 2;
        let mask = Array2::from_elem((1, 9), true);
        let with = watershed(&surface.view(), &markers.view(), &mask.view(), true);
        assert_eq!(with.row(0).to_vec(), vec![1, 1, 1, 1, 0, 2, 2, 2, 2]);
        let without = watershed(&surface.view(), &markers.view(), &mask.view(), false);
        assert!(without.iter().all(|&l| l != 0));
    }

    #[test]
    fn flooding_stays_in_mask() {
        let surface = Array2::zeros((3, 3));
        let mut markers = Array2::zeros((3, 3));
        markers[[0, 0]] = 1;
        let mask = Array2::from_shape_fn((3, 3), |(y, _)| y < 2);
        let out = watershed(&surface.view(), &markers.view(), &mask.view(), true);
        assert_eq!(out.row(2).sum(), 0);
        assert_eq!(out.row(0).sum() + out.row(1).sum(), 6);
    }
}
