use ndarray::{Array2, ArrayView2};

use super::morphology::squared_edt;
use super::watershed::watershed;
use crate::error::{Result, SegError};
use crate::labeling::{for_each_face_neighbor, label_components_with, relabel_sequential, strides, Connectivity};

/// Watershed using successive erosions.
///
/// The mask is eroded by disks of radius `initial_radius`,
/// `initial_radius + delta_radius`, ... until nothing survives. Components
/// (8-connected) of the first erosion seed the markers; at every further radius a marker is
/// replaced by the eroded components it contains, or kept if none remain, so
/// touching objects split once their necks erode away. The markers then
/// flood `-EDT^2` of the mask.
pub fn wusem(mask: &ArrayView2<bool>, initial_radius: usize, delta_radius: usize, watershed_line: bool) -> Result<(Array2<u32>, usize)> {
    if delta_radius == 0 {
        return Err(SegError::InvalidParams("WUSEM delta radius must be at least 1".into()));
    }
    let edt = squared_edt(mask);
    let erode = |r: usize| edt.mapv(|d| d > (r * r) as i64);
    let components = |m: &Array2<bool>| label_components_with(&m.view(), Connectivity::Full).0;
    let mut markers = components(&erode(initial_radius));
    let mut r = initial_radius + delta_radius;
    loop {
        let eroded = erode(r);
        if !eroded.iter().any(|&b| b) {
            break;
        }
        markers = refine(&markers, &components(&eroded));
        r += delta_radius;
    }
    let surface = edt.mapv(|d| -(d as f64));
    let mut labels = watershed(&surface.view(), &markers.view(), mask, watershed_line);
    keep_largest_piece(&mut labels);
    let k = relabel_sequential(&mut labels);
    Ok((labels, k))
}

/// A marker joined only through a corner can flood into 4-disconnected
/// pieces; each label keeps its largest piece (the first in raster order on
/// ties).
fn keep_largest_piece(labels: &mut Array2<u32>) {
    let shape = [labels.nrows(), labels.ncols()];
    let st = strides(&shape);
    let flat = labels.as_slice_mut().expect("standard layout");
    let mut piece = vec![0usize; flat.len()];
    let mut sizes = vec![0usize];
    let mut owner = vec![0u32];
    let mut stack = Vec::new();
    for start in 0..flat.len() {
        if flat[start] == 0 || piece[start] != 0 {
            continue;
        }
        let id = sizes.len();
        let l = flat[start];
        let mut size = 0;
        piece[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            for_each_face_neighbor(i, &shape, &st, |j| {
                if flat[j] == l && piece[j] == 0 {
                    piece[j] = id;
                    stack.push(j);
                }
            });
        }
        sizes.push(size);
        owner.push(l);
    }
    let max_label = owner.iter().copied().max().unwrap_or(0) as usize;
    let mut best = vec![0usize; max_label + 1];
    for id in 1..sizes.len() {
        let l = owner[id] as usize;
        if best[l] == 0 || sizes[id] > sizes[best[l]] {
            best[l] = id;
        }
    }
    for (v, &p) in flat.iter_mut().zip(&piece) {
        if *v != 0 && best[*v as usize] != p {
            *v = 0;
        }
    }
}

/// Replaces every marker that contains at least one child component by those
/// children.
fn refine(markers: &Array2<u32>, children: &Array2<u32>) -> Array2<u32> {
    let k = markers.iter().copied().max().unwrap_or(0) as usize;
    let mut has_child = vec![false; k + 1];
    for (&m, &c) in markers.iter().zip(children) {
        if c != 0 {
            has_child[m as usize] = true;
        }
    }
    let mut out = Array2::zeros(markers.dim());
    // Children get ids above any surviving parent id.
    let offset = k as u32;
    for ((o, &m), &c) in out.iter_mut().zip(markers).zip(children) {
        if m != 0 && !has_child[m as usize] {
            *o = m;
        } else if c != 0 {
            *o = offset + c;
        }
    }
    out
}
