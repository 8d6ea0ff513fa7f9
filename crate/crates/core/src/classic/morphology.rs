use ndarray::{Array2, ArrayView2};

const FAR: i64 = i64::MAX / 4;

/// Exact squared Euclidean distance from every pixel to the nearest
/// background pixel; everything outside the frame counts as background.
pub fn squared_edt(mask: &ArrayView2<bool>) -> Array2<i64> {
    let (h, w) = mask.dim();
    // One ring of background stands in for the whole outside.
    let (ph, pw) = (h + 2, w + 2);
    let mut d = vec![FAR; ph * pw];
    for y in 0..ph {
        for x in 0..pw {
            let inside = y >= 1 && y <= h && x >= 1 && x <= w && mask[[y - 1, x - 1]];
            if !inside {
                d[y * pw + x] = 0;
            }
        }
    }
    let mut f = vec![0i64; ph.max(pw)];
    let mut out = vec![0i64; ph.max(pw)];
    for y in 0..ph {
        f[..pw].copy_from_slice(&d[y * pw..(y + 1) * pw]);
        dt_1d(&f[..pw], &mut out[..pw]);
        d[y * pw..(y + 1) * pw].copy_from_slice(&out[..pw]);
    }
    for x in 0..pw {
        for y in 0..ph {
            f[y] = d[y * pw + x];
        }
        dt_1d(&f[..ph], &mut out[..ph]);
        for y in 0..ph {
            d[y * pw + x] = out[y];
        }
    }
    Array2::from_shape_fn((h, w), |(y, x)| d[(y + 1) * pw + x + 1])
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn dt_1d(f: &[i64], d: &mut [i64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        match first {
            None => {
                first = Some(q);
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            }
            Some(_) => loop {
                let p = v[k];
                let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2.0 * (q as f64 - p as f64));
                if s <= z[k] {
                    if k == 0 {
                        v[0] = q;
                        z[1] = f64::INFINITY;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            },
        }
    }
    if first.is_none() {
        d.fill(FAR);
        return;
    }
    let mut k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as i64 - v[k] as i64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Erosion by the disk `{(dy, dx) : dy^2 + dx^2 <= r^2}`; radius 0 is the
/// identity. Pixels outside the frame are background.
pub fn erode_disk(mask: &ArrayView2<bool>, radius: usize) -> Array2<bool> {
    let r2 = (radius * radius) as i64;
    squared_edt(mask).mapv(|d| d > r2)
}

/// Offsets of the disk structuring element.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                out.push((dy, dx));
            }
        }
    }
    out
}
