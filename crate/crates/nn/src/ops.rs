//! Forward and backward kernels for every layer kind.
//!
//! All spatial kernels work on `[N, C, D, H, W]` memory; 2D tensors are the
//! `D = 1` case, so one implementation serves conv2d and conv3d alike.

use crate::error::{NnError, Result};
use crate::tensor::{gemm, Geometry, Real, Tensor};

/// Spatial extents of a convolution kernel (each odd).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Kernel {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl Kernel {
    fn of_weight(shape: &[usize]) -> Result<(usize, usize, Self)> {
        match *shape {
            [co, ci, height, width] => Ok((co, ci, Self { depth: 1, height, width })),
            [co, ci, depth, height, width] => Ok((co, ci, Self { depth, height, width })),
            _ => Err(NnError::ShapeMismatch(format!("bad kernel shape {shape:?}"))),
        }
    }

    fn volume(&self) -> usize {
        self.depth * self.height * self.width
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(src: &[T], channels: usize, g: &Geometry, k: &Kernel, cols: &mut [T]) {
    let (d, h, w) = (g.depth as isize, g.height as isize, g.width as isize);
    let plane = g.voxels();
    let (pd, ph, pw) = ((k.depth / 2) as isize, (k.height / 2) as isize, (k.width / 2) as isize);
    let mut row = 0;
    for c in 0..channels {
        let chan = &src[c * plane..(c + 1) * plane];
        for a in 0..k.depth as isize {
            for b in 0..k.height as isize {
                for e in 0..k.width as isize {
                    let out = &mut cols[row * plane..(row + 1) * plane];
                    let dx = e - pw;
                    let x0 = (-dx).max(0).min(w) as usize;
                    let x1 = (w - dx).min(w).max(0) as usize;
                    for z in 0..d {
                        let sz = z + a - pd;
                        for y in 0..h {
                            let sy = y + b - ph;
                            let o = (z * h + y) as usize * w as usize;
                            let dst = &mut out[o..o + w as usize];
                            if sz < 0 || sz >= d || sy < 0 || sy >= h || x0 >= x1 {
                                dst.fill(T::zero());
                                continue;
                            }
                            let base = (sz * h + sy) * w + dx;
                            let (s0, s1) = ((base + x0 as isize) as usize, (base + x1 as isize) as usize);
                            dst[..x0].fill(T::zero());
                            dst[x1..].fill(T::zero());
                            dst[x0..x1].copy_from_slice(&chan[s0..s1]);
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], channels: usize, g: &Geometry, k: &Kernel, dst: &mut [T]) {
    let (d, h, w) = (g.depth as isize, g.height as isize, g.width as isize);
    let plane = g.voxels();
    let (pd, ph, pw) = ((k.depth / 2) as isize, (k.height / 2) as isize, (k.width / 2) as isize);
    let mut row = 0;
    for c in 0..channels {
        let chan = &mut dst[c * plane..(c + 1) * plane];
        for a in 0..k.depth as isize {
            for b in 0..k.height as isize {
                for e in 0..k.width as isize {
                    let col = &cols[row * plane..(row + 1) * plane];
                    let dx = e - pw;
                    let x0 = (-dx).max(0).min(w) as usize;
                    let x1 = (w - dx).min(w).max(0) as usize;
                    for z in 0..d {
                        let sz = z + a - pd;
                        if sz < 0 || sz >= d {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y + b - ph;
                            if sy < 0 || sy >= h || x0 >= x1 {
                                continue;
                            }
                            let o = (z * h + y) as usize * w as usize;
                            let base = (sz * h + sy) * w + dx;
                            let (s0, s1) = ((base + x0 as isize) as usize, (base + x1 as isize) as usize);
                            for (t, &v) in chan[s0..s1].iter_mut().zip(&col[o + x0..o + x1]) {
                                *t = *t + v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn check_conv(x: &Tensor<impl Real>, w_shape: &[usize]) -> Result<(Geometry, usize, Kernel)> {
    let g = Geometry::of(x.shape())?;
    let (co, ci, k) = Kernel::of_weight(w_shape)?;
    if w_shape.len() != x.shape().len() || ci != g.channels {
        return Err(NnError::ShapeMismatch(format!(
            "conv kernel {w_shape:?} on input {:?}",
            x.shape()
        )));
    }
    if k.depth % 2 == 0 || k.height % 2 == 0 || k.width % 2 == 0 {
        return Err(NnError::ShapeMismatch(format!("same-padding kernel must be odd, got {w_shape:?}")));
    }
    Ok((g, co, k))
}

/// Stride-1 zero-padded ("same") convolution. Weight `[Co, Ci, (kd,) kh, kw]`, bias `[Co]`.
pub fn conv_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (g, co, k) = check_conv(x, weight.shape())?;
    if bias.len() != co {
        return Err(NnError::ShapeMismatch(format!("bias {:?} for {co} outputs", bias.shape())));
    }
    let p = g.voxels();
    let kk = g.channels * k.volume();
    let out_g = Geometry { channels: co, ..g };
    let mut out = Tensor::zeros(&out_g.shape_like(x.shape()));
    let mut cols = vec![T::zero(); kk * p];
    let in_stride = g.channels * p;
    for n in 0..g.batch {
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], g.channels, &g, &k, &mut cols);
        let y = &mut out.data_mut()[n * co * p..(n + 1) * co * p];
        for (c, row) in y.chunks_mut(p).enumerate() {
            row.fill(bias.data()[c]);
        }
        gemm(co, kk, p, weight.data(), false, &cols, false, T::one(), y);
    }
    Ok(out)
}

/// Accumulates kernel and bias gradients; returns the input gradient.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    dweight: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (g, co, k) = check_conv(x, weight.shape())?;
    let p = g.voxels();
    let kk = g.channels * k.volume();
    let mut dx = Tensor::zeros(x.shape());
    let mut cols = vec![T::zero(); kk * p];
    let in_stride = g.channels * p;
    for n in 0..g.batch {
        let dy_n = &dy.data()[n * co * p..(n + 1) * co * p];
        im2col(&x.data()[n * in_stride..(n + 1) * in_stride], g.channels, &g, &k, &mut cols);
        gemm(co, p, kk, dy_n, false, &cols, true, T::one(), dweight.data_mut());
        for (c, row) in dy_n.chunks(p).enumerate() {
            let s: T = row.iter().copied().sum();
            dbias.data_mut()[c] = dbias.data()[c] + s;
        }
        gemm(kk, co, p, weight.data(), true, dy_n, false, T::zero(), &mut cols);
        col2im(&cols, g.channels, &g, &k, &mut dx.data_mut()[n * in_stride..(n + 1) * in_stride]);
    }
    Ok(dx)
}

/// Pooling/upsampling factor per spatial axis: `(1, 2, 2)` in 2D, `(2, 2, 2)` in 3D.
fn factor(rank: usize) -> (usize, usize, usize) {
    if rank == 4 {
        (1, 2, 2)
    } else {
        (2, 2, 2)
    }
}

/// Non-overlapping max pooling by 2 per spatial axis. Returns the output and the
/// flat input index of each maximum.
pub fn maxpool_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let g = Geometry::of(x.shape())?;
    let (fd, fh, fw) = factor(x.shape().len());
    if g.depth % fd != 0 || g.height % fh != 0 || g.width % fw != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "max pooling needs even spatial extents, got {:?}",
            x.shape()
        )));
    }
    let og = Geometry { depth: g.depth / fd, height: g.height / fh, width: g.width / fw, ..g };
    let mut out = Tensor::zeros(&og.shape_like(x.shape()));
    let mut arg = vec![0usize; out.len()];
    let src = x.data();
    let mut o = 0;
    for plane in 0..g.batch * g.channels {
        let base = plane * g.voxels();
        for z in 0..og.depth {
            for y in 0..og.height {
                for xx in 0..og.width {
                    let mut best = T::neg_infinity();
                    let mut best_i = 0;
                    for a in 0..fd {
                        for b in 0..fh {
                            for c in 0..fw {
                                let i = base
                                    + ((z * fd + a) * g.height + y * fh + b) * g.width
                                    + xx * fw
                                    + c;
                                if src[i] > best {
                                    best = src[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out.data_mut()[o] = best;
                    arg[o] = best_i;
                    o += 1;
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool_backward<T: Real>(input_shape: &[usize], argmax: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] = dx.data()[i] + g;
    }
    dx
}

fn check_upconv(x: &Tensor<impl Real>, w_shape: &[usize]) -> Result<(Geometry, usize)> {
    let g = Geometry::of(x.shape())?;
    let (fd, fh, fw) = factor(x.shape().len());
    let expected_tail: Vec<usize> = if x.shape().len() == 4 { vec![fh, fw] } else { vec![fd, fh, fw] };
    if w_shape.len() != x.shape().len() || w_shape[0] != g.channels || w_shape[2..] != expected_tail[..] {
        return Err(NnError::ShapeMismatch(format!(
            "transposed conv kernel {w_shape:?} on input {:?}",
            x.shape()
        )));
    }
    Ok((g, w_shape[1]))
}

/// Transposed convolution with kernel 2 and stride 2 per spatial axis.
/// Weight `[Ci, Co, (2,) 2, 2]`, bias `[Co]`.
pub fn upconv_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (g, co) = check_upconv(x, weight.shape())?;
    if bias.len() != co {
        return Err(NnError::ShapeMismatch(format!("bias {:?} for {co} outputs", bias.shape())));
    }
    let (fd, fh, fw) = factor(x.shape().len());
    let kv = fd * fh * fw;
    let p = g.voxels();
    let og = Geometry { channels: co, depth: g.depth * fd, height: g.height * fh, width: g.width * fw, ..g };
    let mut out = Tensor::zeros(&og.shape_like(x.shape()));
    let mut tmp = vec![T::zero(); co * kv * p];
    let op = og.voxels();
    for n in 0..g.batch {
        let x_n = &x.data()[n * g.channels * p..(n + 1) * g.channels * p];
        gemm(co * kv, g.channels, p, weight.data(), true, x_n, false, T::zero(), &mut tmp);
        let y = &mut out.data_mut()[n * co * op..(n + 1) * co * op];
        for c in 0..co {
            let b = bias.data()[c];
            for a in 0..fd {
                for bb in 0..fh {
                    for e in 0..fw {
                        let row = &tmp[(c * kv + (a * fh + bb) * fw + e) * p..][..p];
                        for z in 0..g.depth {
                            for yy in 0..g.height {
                                let orow = c * op + ((z * fd + a) * og.height + yy * fh + bb) * og.width + e;
                                let irow = (z * g.height + yy) * g.width;
                                for xx in 0..g.width {
                                    y[orow + xx * fw] = row[irow + xx] + b;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn upconv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    dweight: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (g, co) = check_upconv(x, weight.shape())?;
    let (fd, fh, fw) = factor(x.shape().len());
    let kv = fd * fh * fw;
    let p = g.voxels();
    let (oh, ow) = (g.height * fh, g.width * fw);
    let op = g.depth * fd * oh * ow;
    let mut dtmp = vec![T::zero(); co * kv * p];
    let mut dx = Tensor::zeros(x.shape());
    for n in 0..g.batch {
        let dy_n = &dy.data()[n * co * op..(n + 1) * co * op];
        for c in 0..co {
            let mut s = T::zero();
            for &v in &dy_n[c * op..(c + 1) * op] {
                s = s + v;
            }
            dbias.data_mut()[c] = dbias.data()[c] + s;
            for a in 0..fd {
                for bb in 0..fh {
                    for e in 0..fw {
                        let row = &mut dtmp[(c * kv + (a * fh + bb) * fw + e) * p..][..p];
                        for z in 0..g.depth {
                            for yy in 0..g.height {
                                let orow = c * op + ((z * fd + a) * oh + yy * fh + bb) * ow + e;
                                let irow = (z * g.height + yy) * g.width;
                                for xx in 0..g.width {
                                    row[irow + xx] = dy_n[orow + xx * fw];
                                }
                            }
                        }
                    }
                }
            }
        }
        let x_n = &x.data()[n * g.channels * p..(n + 1) * g.channels * p];
        gemm(g.channels, p, co * kv, x_n, false, &dtmp, true, T::one(), dweight.data_mut());
        let dx_n = &mut dx.data_mut()[n * g.channels * p..(n + 1) * g.channels * p];
        gemm(g.channels, co * kv, p, weight.data(), false, &dtmp, false, T::zero(), dx_n);
    }
    Ok(dx)
}

/// Cached quantities from a training-mode batch-norm pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel batch statistics `(mean, biased variance)`.
pub fn channel_stats<T: Real>(x: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = Geometry::of(x.shape())?;
    let p = g.voxels();
    let count = (g.batch * p) as f64;
    let mut mean = vec![0.0; g.channels];
    let mut var = vec![0.0; g.channels];
    for c in 0..g.channels {
        let mut s = 0.0;
        for n in 0..g.batch {
            let off = (n * g.channels + c) * p;
            s += x.data()[off..off + p].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = s / count;
        let mut ss = 0.0;
        for n in 0..g.batch {
            let off = (n * g.channels + c) * p;
            ss += x.data()[off..off + p].iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>();
        }
        mean[c] = m;
        var[c] = ss / count;
    }
    Ok((mean, var))
}

/// Applies `y = gamma * (x - mean) * inv_std + beta` per channel.
pub fn batchnorm_apply<T: Real>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = Geometry::of(x.shape())?;
    if gamma.len() != g.channels || mean.len() != g.channels {
        return Err(NnError::ShapeMismatch(format!(
            "batch norm over {} channels on input {:?}",
            gamma.len(),
            x.shape()
        )));
    }
    let p = g.voxels();
    let mut norm = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    for n in 0..g.batch {
        for c in 0..g.channels {
            let off = (n * g.channels + c) * p;
            let (m, s, ga, be) = (mean[c], inv_std[c], gamma[c], beta[c]);
            for i in off..off + p {
                let xh = (x.data()[i] - m) * s;
                norm.data_mut()[i] = xh;
                out.data_mut()[i] = ga * xh + be;
            }
        }
    }
    Ok((out, norm))
}

/// Returns `dx` and accumulates `dgamma`, `dbeta`.
pub fn batchnorm_backward<T: Real>(
    dy: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Result<Tensor<T>> {
    let g = Geometry::of(dy.shape())?;
    let p = g.voxels();
    let m = T::from_f64_lossy((g.batch * p) as f64);
    let xh = cache.normalized.data();
    let mut dx = Tensor::zeros(dy.shape());
    for c in 0..g.channels {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for n in 0..g.batch {
            let off = (n * g.channels + c) * p;
            for i in off..off + p {
                sum_dy = sum_dy + dy.data()[i];
                sum_dy_xh = sum_dy_xh + dy.data()[i] * xh[i];
            }
        }
        dgamma[c] = dgamma[c] + sum_dy_xh;
        dbeta[c] = dbeta[c] + sum_dy;
        let scale = gamma[c] * cache.inv_std[c] / m;
        for n in 0..g.batch {
            let off = (n * g.channels + c) * p;
            for i in off..off + p {
                dx.data_mut()[i] = scale * (m * dy.data()[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    }
    Ok(dx)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *d = *d * s * (T::one() - s);
    }
    dx
}

/// Concatenates along the channel axis.
pub fn concat<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = Geometry::of(parts[0].shape())?;
    let mut total = 0;
    for t in parts {
        let g = Geometry::of(t.shape())?;
        if t.shape().len() != parts[0].shape().len()
            || (g.batch, g.depth, g.height, g.width) != (first.batch, first.depth, first.height, first.width)
        {
            return Err(NnError::ShapeMismatch(format!(
                "concat {:?} with {:?}",
                parts[0].shape(),
                t.shape()
            )));
        }
        total += g.channels;
    }
    let og = Geometry { channels: total, ..first };
    let p = first.voxels();
    let mut data = Vec::with_capacity(og.batch * total * p);
    for n in 0..first.batch {
        for t in parts {
            let c = t.shape()[1];
            data.extend_from_slice(&t.data()[n * c * p..(n + 1) * c * p]);
        }
    }
    Tensor::from_vec(&og.shape_like(parts[0].shape()), data)
}

/// Splits a channel-concatenated gradient back into per-input gradients.
pub fn concat_backward<T: Real>(dy: &Tensor<T>, channel_counts: &[usize]) -> Result<Vec<Tensor<T>>> {
    let g = Geometry::of(dy.shape())?;
    let p = g.voxels();
    let mut outs: Vec<Vec<T>> = channel_counts.iter().map(|c| Vec::with_capacity(g.batch * c * p)).collect();
    for n in 0..g.batch {
        let mut off = n * g.channels * p;
        for (o, &c) in outs.iter_mut().zip(channel_counts) {
            o.extend_from_slice(&dy.data()[off..off + c * p]);
            off += c * p;
        }
    }
    outs.into_iter()
        .zip(channel_counts)
        .map(|(data, &c)| Tensor::from_vec(&Geometry { channels: c, ..g }.shape_like(dy.shape()), data))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::from_vec(&[1, 1, 3, 4], (0..12).map(|v| v as f32).collect()).unwrap();
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let b = Tensor::zeros(&[1]);
        assert_eq!(conv_forward(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // 1 input channel, 2 output channels, 3x3 kernel on a 4x5 image.
        let x: Vec<f64> = (0..20).map(|v| (v as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..18).map(|v| (v as f64 * 0.71).cos()).collect();
        let xt = Tensor::from_vec(&[1, 1, 4, 5], x.clone()).unwrap();
        let wt = Tensor::from_vec(&[2, 1, 3, 3], w.clone()).unwrap();
        let bt = Tensor::from_vec(&[2], vec![0.5, -0.25]).unwrap();
        let y = conv_forward(&xt, &wt, &bt).unwrap();
        for co in 0..2 {
            for i in 0..4isize {
                for j in 0..5isize {
                    let mut s = bt.data()[co];
                    for a in 0..3isize {
                        for b in 0..3isize {
                            let (si, sj) = (i + a - 1, j + b - 1);
                            if (0..4).contains(&si) && (0..5).contains(&sj) {
                                s += x[(si * 5 + sj) as usize] * w[co * 9 + (a * 3 + b) as usize];
                            }
                        }
                    }
                    let got = y.data()[co * 20 + (i * 5 + j) as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maxpool_constant_halves_extent() {
        let x = Tensor::full(&[1, 2, 4, 6], 0.3f32);
        let (y, _) = maxpool_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 0.3));
        let x3 = Tensor::full(&[1, 1, 4, 4, 4], 1.0f32);
        assert_eq!(maxpool_forward(&x3).unwrap().0.shape(), &[1, 1, 2, 2, 2]);
    }

    #[test]
    fn maxpool_rejects_odd_extent() {
        assert!(maxpool_forward(&Tensor::<f32>::zeros(&[1, 1, 3, 4])).is_err());
    }

    #[test]
    fn upconv_scatters_kernel() {
        // Single input pixel of value 2 with a 1→1 kernel [[1,2],[3,4]].
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0f32]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let y = upconv_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let y = sigmoid(&Tensor::<f32>::zeros(&[1, 1, 2, 2]));
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn concat_then_split() {
        let a = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2, 1, 2], vec![5.0f32, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3, 1, 2]);
        assert_eq!(&c.data()[..6], &[1.0, 2.0, 5.0, 6.0, 7.0, 8.0]);
        let parts = concat_backward(&c, &[1, 2]).unwrap();
        assert_eq!(parts, vec![a, b]);
    }
}
