use ndarray::{Array, ArrayView, Dimension};

use crate::error::{Result, SegError};
use crate::labeling::strides;

#[derive(Clone, Debug, PartialEq)]
pub struct TvResult<D: Dimension> {
    pub image: Array<f32, D>,
    pub iterations: usize,
    pub converged: bool,
}

/// Chambolle's projection algorithm for
/// `min_u |u - f|^2 / (2 weight) + TV(u)` with isotropic forward-difference TV.
///
/// Iteration stops once `|p_new - p| / |p_new| < tol` for the dual field `p`,
/// or after `max_iter` steps; the last iterate is returned either way.
pub fn denoise_tv_chambolle<D: Dimension>(
    field: &ArrayView<f32, D>,
    weight: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TvResult<D>> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(SegError::InvalidParams(format!("TV weight {weight}")));
    }
    if weight == 0.0 || field.is_empty() {
        return Ok(TvResult { image: field.to_owned(), iterations: 0, converged: true });
    }
    let shape = field.shape().to_vec();
    let st = strides(&shape);
    let nd = shape.len();
    let n = field.len();
    let f: Vec<f64> = field.iter().map(|&v| v as f64).collect();
    let tau = 1.0 / (2.0 * nd as f64);
    let mut p = vec![vec![0.0f64; n]; nd];
    let mut g = vec![vec![0.0f64; n]; nd];
    let mut out = f.clone();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        primal(&f, &p, &shape, &st, &mut out);
        gradient(&out, &shape, &st, &mut g);
        let (mut change, mut norm_new) = (0.0, 0.0);
        for i in 0..n {
            let gn = (0..nd).map(|a| g[a][i] * g[a][i]).sum::<f64>().sqrt();
            let denom = 1.0 + tau / weight * gn;
            for a in 0..nd {
                let np = (p[a][i] - tau * g[a][i]) / denom;
                change += (np - p[a][i]).powi(2);
                norm_new += np * np;
                p[a][i] = np;
            }
        }
        if change.sqrt() <= tol * norm_new.sqrt().max(f64::MIN_POSITIVE) || change == 0.0 {
            converged = true;
            break;
        }
    }
    primal(&f, &p, &shape, &st, &mut out);
    let image = Array::from_shape_vec(field.raw_dim(), out.into_iter().map(|v| v as f32).collect()).expect("same size");
    Ok(TvResult { image, iterations, converged })
}

/// `out = f - div p` with the backward-difference divergence adjoint to the
/// forward-difference gradient.
fn primal(f: &[f64], p: &[Vec<f64>], shape: &[usize], st: &[usize], out: &mut [f64]) {
    for i in 0..f.len() {
        let mut d = 0.0;
        for a in 0..shape.len() {
            let c = (i / st[a]) % shape[a];
            if c + 1 < shape[a] {
                d -= p[a][i];
            }
            if c > 0 {
                d += p[a][i - st[a]];
            }
        }
        out[i] = f[i] + d;
    }
}

fn gradient(u: &[f64], shape: &[usize], st: &[usize], g: &mut [Vec<f64>]) {
    for i in 0..u.len() {
        for a in 0..shape.len() {
            let c = (i / st[a]) % shape[a];
            g[a][i] = if c + 1 < shape[a] { u[i + st[a]] - u[i] } else { 0.0 };
        }
    }
}

/// Isotropic total variation with forward differences (zero at the far border).
pub fn total_variation<D: Dimension>(field: &ArrayView<f32, D>) -> f64 {
    let shape = field.shape().to_vec();
    let st = strides(&shape);
    let u: Vec<f64> = field.iter().map(|&v| v as f64).collect();
    let mut g = vec![vec![0.0; u.len()]; shape.len()];
    gradient(&u, &shape, &st, &mut g);
    (0..u.len()).map(|i| g.iter().map(|ga| ga[i] * ga[i]).sum::<f64>().sqrt()).sum()
}
