//! Central finite-difference gradient checking.
//!
//! The numerical side only calls the forward pass, so it is independent of
//! every hand-written backward kernel it is used to verify.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::Network;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub name: String,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂, 1e-8)`. The floor
    /// keeps structurally zero gradients (e.g. a conv bias followed by batch
    /// norm) from turning round-off into a large ratio.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

fn rel_error(a: &[f64], n: &[f64]) -> (f64, f64) {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    (diff / na.max(nn).max(1e-8), na)
}

/// Compares backpropagated gradients of `L = Σ rᵢ·yᵢ` (fixed random `r`)
/// against central differences with step `h`, for every parameter tensor and
/// for the input. The network runs in training mode; dropout masks are held
/// fixed by reseeding before every pass.
pub fn check_network(net: &mut Network<f64>, input: &Tensor<f64>, h: f64, seed: u64) -> Result<Vec<GradReport>> {
    let out_shape = net.infer(input)?.shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = out_shape.iter().product();
    let weights = Tensor::from_vec(&out_shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let objective = |net: &mut Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        net.reseed_dropout(seed);
        let y = net.forward(x, true)?;
        Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    };

    net.zero_grad();
    net.reseed_dropout(seed);
    net.forward(input, true)?;
    let input_grad = net.backward(&weights)?;

    let mut reports = Vec::new();
    for p in 0..net.params().len() {
        let analytic = net.params()[p].grad.data().to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = net.params()[p].value.data()[i];
            net.params_mut()[p].value.data_mut()[i] = orig + h;
            let up = objective(net, input)?;
            net.params_mut()[p].value.data_mut()[i] = orig - h;
            let down = objective(net, input)?;
            net.params_mut()[p].value.data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let (rel_error, analytic_norm) = rel_error(&analytic, &numeric);
        reports.push(GradReport { name: net.params()[p].name.clone(), rel_error, analytic_norm });
    }

    let mut x = input.clone();
    let mut numeric = vec![0.0; x.len()];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = objective(net, &x)?;
        x.data_mut()[i] = orig - h;
        let down = objective(net, &x)?;
        x.data_mut()[i] = orig;
        *slot = (up - down) / (2.0 * h);
    }
    let (rel_error, analytic_norm) = rel_error(input_grad.data(), &numeric);
    reports.push(GradReport { name: "input".into(), rel_error, analytic_norm });
    Ok(reports)
}
