//! Layer graphs with explicit reverse-mode differentiation.
//!
//! A [`Network`] is a list of nodes in topological order. The training-mode
//! forward pass keeps every activation plus the per-layer quantities backward
//! needs; [`Network::backward`] then walks the list in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::ops::{self, BatchNormCache};
use crate::tensor::{Real, Tensor};

pub type NodeId = usize;

/// Public description of a layer, used for introspection and weight-file headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Input,
    Conv { out_channels: usize, kernel: usize },
    MaxPool,
    UpConv { out_channels: usize },
    BatchNorm,
    Dropout { rate: f64 },
    Relu,
    Sigmoid,
    Concat,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Conv { weight: usize, bias: usize },
    MaxPool,
    UpConv { weight: usize, bias: usize },
    BatchNorm { gamma: usize, beta: usize, mean: usize, var: usize },
    Dropout { rate: f64 },
    Relu,
    Sigmoid,
    Concat,
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    kind: LayerKind,
    inputs: Vec<NodeId>,
    channels: usize,
    tag: Option<String>,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// A non-trainable tensor that is still part of the model state (batch-norm
/// running statistics).
#[derive(Clone, Debug)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LayerInfo {
    pub id: NodeId,
    pub kind: LayerKind,
    pub inputs: Vec<NodeId>,
    pub tag: Option<String>,
}

#[derive(Clone, Debug)]
enum Saved<T> {
    Nothing,
    Pool(Vec<usize>),
    Mask(Vec<T>),
    Norm(BatchNormCache<T>),
}

#[derive(Clone, Debug)]
struct Trace<T> {
    acts: Vec<Tensor<T>>,
    saved: Vec<Saved<T>>,
}

#[derive(Clone, Debug)]
pub struct Network<T = f32> {
    dims: usize,
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    output: NodeId,
    bn_momentum: f64,
    bn_eps: f64,
    rng: ChaCha8Rng,
    trace: Option<Trace<T>>,
}

impl<T: Real> Network<T> {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn in_channels(&self) -> usize {
        self.nodes[0].channels
    }

    pub fn out_channels(&self) -> usize {
        self.nodes[self.output].channels
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| LayerInfo { id, kind: n.kind.clone(), inputs: n.inputs.clone(), tag: n.tag.clone() })
            .collect()
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    pub fn set_bn_momentum(&mut self, momentum: f64) {
        self.bn_momentum = momentum;
    }

    /// Reseeds the dropout mask stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Runs the network. With `training` set, dropout is active, batch norm
    /// uses batch statistics (and updates running statistics), and the
    /// activations are retained for [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let mut rng = self.rng.clone();
        let (trace, stats) = self.run(input, training, Some(&mut rng))?;
        self.rng = rng;
        for (mean_buf, var_buf, mean, var) in stats {
            let m = self.bn_momentum;
            let mb = &mut self.buffers[mean_buf].value;
            for (r, &v) in mb.data_mut().iter_mut().zip(&mean) {
                *r = T::from_f64_lossy(m * r.as_f64() + (1.0 - m) * v);
            }
            let vb = &mut self.buffers[var_buf].value;
            for (r, &v) in vb.data_mut().iter_mut().zip(&var) {
                *r = T::from_f64_lossy(m * r.as_f64() + (1.0 - m) * v);
            }
        }
        let out = trace.acts[self.output].clone();
        self.trace = training.then_some(trace);
        Ok(out)
    }

    /// Inference-mode forward pass. Does not touch network state, so one set
    /// of weights can be shared by concurrent workers.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (mut trace, _) = self.run(input, false, None)?;
        Ok(trace.acts.swap_remove(self.output))
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        input: &Tensor<T>,
        training: bool,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Trace<T>, Vec<(usize, usize, Vec<f64>, Vec<f64>)>)> {
        let rank = self.dims + 2;
        if input.shape().len() != rank || input.shape()[1] != self.in_channels() {
            return Err(NnError::ShapeMismatch(format!(
                "network expects {}D input with {} channels, got {:?}",
                self.dims,
                self.in_channels(),
                input.shape()
            )));
        }
        input.check_finite("network input")?;
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut saved = Vec::with_capacity(self.nodes.len());
        let mut stats = Vec::new();
        for node in &self.nodes {
            let x = node.inputs.first().map(|&i| &acts[i]);
            let (y, s) = match &node.op {
                Op::Input => (input.clone(), Saved::Nothing),
                Op::Conv { weight, bias } => (
                    ops::conv_forward(x.unwrap(), &self.params[*weight].value, &self.params[*bias].value)?,
                    Saved::Nothing,
                ),
                Op::UpConv { weight, bias } => (
                    ops::upconv_forward(x.unwrap(), &self.params[*weight].value, &self.params[*bias].value)?,
                    Saved::Nothing,
                ),
                Op::MaxPool => {
                    let (y, arg) = ops::maxpool_forward(x.unwrap())?;
                    (y, if training { Saved::Pool(arg) } else { Saved::Nothing })
                }
                Op::BatchNorm { gamma, beta, mean, var } => {
                    let x = x.unwrap();
                    let eps = self.bn_eps;
                    let gamma_v = self.params[*gamma].value.data();
                    let beta_v = self.params[*beta].value.data();
                    if training {
                        let (bm, bv) = ops::channel_stats(x)?;
                        let mean_t: Vec<T> = bm.iter().map(|&v| T::from_f64_lossy(v)).collect();
                        let inv: Vec<T> = bv.iter().map(|&v| T::from_f64_lossy(1.0 / (v + eps).sqrt())).collect();
                        let (y, normalized) = ops::batchnorm_apply(x, &mean_t, &inv, gamma_v, beta_v)?;
                        let count = (x.len() / x.shape()[1]) as f64;
                        let unbiased: Vec<f64> =
                            bv.iter().map(|&v| if count > 1.0 { v * count / (count - 1.0) } else { v }).collect();
                        stats.push((*mean, *var, bm, unbiased));
                        (y, Saved::Norm(BatchNormCache { normalized, inv_std: inv }))
                    } else {
                        let rm = self.buffers[*mean].value.data();
                        let inv: Vec<T> = self.buffers[*var]
                            .value
                            .data()
                            .iter()
                            .map(|&v| T::from_f64_lossy(1.0 / (v.as_f64() + eps).sqrt()))
                            .collect();
                        let (y, _) = ops::batchnorm_apply(x, rm, &inv, gamma_v, beta_v)?;
                        (y, Saved::Nothing)
                    }
                }
                Op::Dropout { rate } => {
                    let x = x.unwrap();
                    if training && *rate > 0.0 {
                        let rng = rng.as_deref_mut().expect("training pass owns an rng");
                        let keep = 1.0 - rate;
                        let scale = T::from_f64_lossy(1.0 / keep);
                        let mask: Vec<T> = (0..x.len())
                            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                            .collect();
                        let mut y = x.clone();
                        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                            *v = *v * m;
                        }
                        (y, Saved::Mask(mask))
                    } else {
                        (x.clone(), Saved::Nothing)
                    }
                }
                Op::Relu => (ops::relu(x.unwrap()), Saved::Nothing),
                Op::Sigmoid => (ops::sigmoid(x.unwrap()), Saved::Nothing),
                Op::Concat => {
                    let parts: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &acts[i]).collect();
                    (ops::concat(&parts)?, Saved::Nothing)
                }
            };
            acts.push(y);
            saved.push(s);
        }
        acts[self.output].check_finite("forward pass")?;
        Ok((Trace { acts, saved }, stats))
    }

    /// Backpropagates `grad_output` (the loss gradient w.r.t. the network
    /// output) through the last training-mode forward pass. Parameter gradients
    /// are accumulated into [`Param::grad`]; the input gradient is returned.
    pub fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        let trace = self
            .trace
            .take()
            .ok_or_else(|| NnError::InvalidConfig("backward without a training forward pass".into()))?;
        if grad_output.shape() != trace.acts[self.output].shape() {
            return Err(NnError::ShapeMismatch(format!(
                "output gradient {:?} for output {:?}",
                grad_output.shape(),
                trace.acts[self.output].shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[self.output] = Some(grad_output.clone());
        let mut input_grad = None;
        for id in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let x = node.inputs.first().map(|&i| &trace.acts[i]);
            let dxs: Vec<Tensor<T>> = match &node.op {
                Op::Input => {
                    input_grad = Some(dy);
                    continue;
                }
                Op::Conv { weight, bias } => {
                    let (w, b) = two_mut(&mut self.params, *weight, *bias);
                    vec![ops::conv_backward(x.unwrap(), &w.value, &dy, &mut w.grad, &mut b.grad)?]
                }
                Op::UpConv { weight, bias } => {
                    let (w, b) = two_mut(&mut self.params, *weight, *bias);
                    vec![ops::upconv_backward(x.unwrap(), &w.value, &dy, &mut w.grad, &mut b.grad)?]
                }
                Op::MaxPool => match &trace.saved[id] {
                    Saved::Pool(arg) => vec![ops::maxpool_backward(x.unwrap().shape(), arg, &dy)],
                    _ => unreachable!("pool trace"),
                },
                Op::BatchNorm { gamma, beta, .. } => {
                    let Saved::Norm(cache) = &trace.saved[id] else { unreachable!("norm trace") };
                    let (g, b) = two_mut(&mut self.params, *gamma, *beta);
                    vec![ops::batchnorm_backward(&dy, cache, g.value.data(), g.grad.data_mut(), b.grad.data_mut())?]
                }
                Op::Dropout { .. } => match &trace.saved[id] {
                    Saved::Mask(mask) => {
                        let mut dx = dy;
                        for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                            *v = *v * m;
                        }
                        vec![dx]
                    }
                    _ => vec![dy],
                },
                Op::Relu => vec![ops::relu_backward(&trace.acts[id], &dy)],
                Op::Sigmoid => vec![ops::sigmoid_backward(&trace.acts[id], &dy)],
                Op::Concat => {
                    let counts: Vec<usize> = node.inputs.iter().map(|&i| trace.acts[i].shape()[1]).collect();
                    ops::concat_backward(&dy, &counts)?
                }
            };
            for (&src, dx) in node.inputs.iter().zip(dxs) {
                match &mut grads[src] {
                    Some(acc) => acc.add_assign(&dx)?,
                    slot => *slot = Some(dx),
                }
            }
        }
        for p in &self.params {
            p.grad.check_finite(&format!("gradient of {}", p.name))?;
        }
        input_grad.ok_or_else(|| NnError::InvalidConfig("input is not connected to the output".into()))
    }

    /// Copies every parameter and buffer into a network of another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            dims: self.dims,
            nodes: self.nodes.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), grad: p.grad.cast() })
                .collect(),
            buffers: self.buffers.iter().map(|b| Buffer { name: b.name.clone(), value: b.value.cast() }).collect(),
            output: self.output,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
            rng: self.rng.clone(),
            trace: None,
        }
    }
}

fn two_mut<T>(items: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert!(a < b, "parameters are allocated in order");
    let (lo, hi) = items.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

/// Incrementally assembles a [`Network`]; node ids are returned in topological order.
pub struct NetworkBuilder<T = f32> {
    dims: usize,
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    init_rng: ChaCha8Rng,
    seed: u64,
}

impl<T: Real> NetworkBuilder<T> {
    /// Starts a network for `dims`-dimensional inputs with `in_channels`
    /// channels. Node 0 is the input.
    pub fn new(dims: usize, in_channels: usize, seed: u64) -> Result<Self> {
        if dims != 2 && dims != 3 {
            return Err(NnError::InvalidSpec(format!("only 2D and 3D networks are supported, got {dims}")));
        }
        Ok(Self {
            dims,
            nodes: vec![Node { op: Op::Input, kind: LayerKind::Input, inputs: vec![], channels: in_channels, tag: None }],
            params: Vec::new(),
            buffers: Vec::new(),
            init_rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        })
    }

    pub fn input(&self) -> NodeId {
        0
    }

    pub fn channels(&self, id: NodeId) -> usize {
        self.nodes[id].channels
    }

    fn push(&mut self, op: Op, kind: LayerKind, inputs: Vec<NodeId>, channels: usize) -> NodeId {
        self.nodes.push(Node { op, kind, inputs, channels, tag: None });
        self.nodes.len() - 1
    }

    fn param(&mut self, name: String, value: Tensor<T>) -> usize {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        self.params.len() - 1
    }

    fn he_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let limit = (6.0 / fan_in as f64).sqrt();
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| T::from_f64_lossy(self.init_rng.random_range(-limit..limit))).collect();
        Tensor::from_vec(shape, data).expect("shape matches length")
    }

    fn spatial(&self, k: usize) -> Vec<usize> {
        vec![k; self.dims]
    }

    /// Same-padded convolution with an odd cubic/square `kernel`.
    pub fn conv(&mut self, x: NodeId, out_channels: usize, kernel: usize) -> Result<NodeId> {
        if kernel % 2 == 0 || out_channels == 0 {
            return Err(NnError::InvalidSpec(format!("conv kernel {kernel} with {out_channels} outputs")));
        }
        let ci = self.nodes[x].channels;
        let mut shape = vec![out_channels, ci];
        shape.extend(self.spatial(kernel));
        let fan_in = ci * kernel.pow(self.dims as u32);
        let id = self.nodes.len();
        let w = self.he_uniform(&shape, fan_in);
        let weight = self.param(format!("n{id}.conv.weight"), w);
        let bias = self.param(format!("n{id}.conv.bias"), Tensor::zeros(&[out_channels]));
        Ok(self.push(Op::Conv { weight, bias }, LayerKind::Conv { out_channels, kernel }, vec![x], out_channels))
    }

    pub fn maxpool(&mut self, x: NodeId) -> NodeId {
        let c = self.nodes[x].channels;
        self.push(Op::MaxPool, LayerKind::MaxPool, vec![x], c)
    }

    /// Transposed convolution, kernel 2, stride 2.
    pub fn upconv(&mut self, x: NodeId, out_channels: usize) -> NodeId {
        let ci = self.nodes[x].channels;
        let mut shape = vec![ci, out_channels];
        shape.extend(self.spatial(2));
        let id = self.nodes.len();
        let w = self.he_uniform(&shape, ci);
        let weight = self.param(format!("n{id}.upconv.weight"), w);
        let bias = self.param(format!("n{id}.upconv.bias"), Tensor::zeros(&[out_channels]));
        self.push(Op::UpConv { weight, bias }, LayerKind::UpConv { out_channels }, vec![x], out_channels)
    }

    pub fn batch_norm(&mut self, x: NodeId) -> NodeId {
        let c = self.nodes[x].channels;
        let id = self.nodes.len();
        let gamma = self.param(format!("n{id}.bn.gamma"), Tensor::full(&[c], T::one()));
        let beta = self.param(format!("n{id}.bn.beta"), Tensor::zeros(&[c]));
        self.buffers.push(Buffer { name: format!("n{id}.bn.running_mean"), value: Tensor::zeros(&[c]) });
        self.buffers.push(Buffer { name: format!("n{id}.bn.running_var"), value: Tensor::full(&[c], T::one()) });
        let (mean, var) = (self.buffers.len() - 2, self.buffers.len() - 1);
        self.push(Op::BatchNorm { gamma, beta, mean, var }, LayerKind::BatchNorm, vec![x], c)
    }

    pub fn dropout(&mut self, x: NodeId, rate: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidSpec(format!("dropout rate {rate} outside [0, 1)")));
        }
        let c = self.nodes[x].channels;
        Ok(self.push(Op::Dropout { rate }, LayerKind::Dropout { rate }, vec![x], c))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let c = self.nodes[x].channels;
        self.push(Op::Relu, LayerKind::Relu, vec![x], c)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let c = self.nodes[x].channels;
        self.push(Op::Sigmoid, LayerKind::Sigmoid, vec![x], c)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(NnError::InvalidSpec("concat of nothing".into()));
        }
        let c = parts.iter().map(|&p| self.nodes[p].channels).sum();
        Ok(self.push(Op::Concat, LayerKind::Concat, parts.to_vec(), c))
    }

    /// Attaches a role label to a node, e.g. `"bottleneck"`.
    pub fn tag(&mut self, id: NodeId, tag: &str) {
        self.nodes[id].tag = Some(tag.to_string());
    }

    pub fn finish(self, output: NodeId) -> Network<T> {
        Network {
            dims: self.dims,
            nodes: self.nodes,
            params: self.params,
            buffers: self.buffers,
            output,
            bn_momentum: 0.99,
            bn_eps: 1e-3,
            rng: ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15),
            trace: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_conv() -> Network<f32> {
        let mut b = NetworkBuilder::new(2, 1, 7).unwrap();
        let x = b.input();
        let y = b.conv(x, 1, 3).unwrap();
        b.finish(y)
    }

    #[test]
    fn single_conv_has_ten_parameters() {
        assert_eq!(single_conv().parameter_count(), 10);
    }

    #[test]
    fn dropout_is_identity_in_inference() {
        let mut b = NetworkBuilder::<f32>::new(2, 1, 1).unwrap();
        let x = b.input();
        let d = b.dropout(x, 0.5).unwrap();
        let mut net = b.finish(d);
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(net.forward(&input, false).unwrap(), input);
        // Training mode zeroes some entries and scales survivors by 2.
        let y = net.forward(&input, true).unwrap();
        for (&o, &i) in y.data().iter().zip(input.data()) {
            assert!(o == 0.0 || o == 2.0 * i);
        }
    }

    #[test]
    fn zero_rate_dropout_is_identity_in_training() {
        let mut b = NetworkBuilder::<f32>::new(2, 1, 1).unwrap();
        let x = b.input();
        let d = b.dropout(x, 0.0).unwrap();
        let mut net = b.finish(d);
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(net.forward(&input, true).unwrap(), input);
    }

    #[test]
    fn rejects_bad_dropout_rate() {
        let mut b = NetworkBuilder::<f32>::new(2, 1, 1).unwrap();
        let x = b.input();
        assert!(b.dropout(x, 1.0).is_err());
    }

    #[test]
    fn batch_norm_inference_is_affine_per_channel() {
        let mut b = NetworkBuilder::<f64>::new(2, 2, 3).unwrap();
        let x = b.input();
        let y = b.batch_norm(x);
        let mut net = b.finish(y);
        net.params_mut()[0].value = Tensor::from_vec(&[2], vec![2.0, -1.0]).unwrap();
        net.params_mut()[1].value = Tensor::from_vec(&[2], vec![0.5, 0.25]).unwrap();
        net.buffers_mut()[0].value = Tensor::from_vec(&[2], vec![1.0, -3.0]).unwrap();
        net.buffers_mut()[1].value = Tensor::from_vec(&[2], vec![4.0, 0.25]).unwrap();
        let input = Tensor::from_vec(&[1, 2, 1, 3], vec![0.0, 1.0, 2.0, 5.0, 6.0, 7.0]).unwrap();
        let out = net.infer(&input).unwrap();
        let eps = 1e-3;
        for c in 0..2 {
            let (g, be, m, v) = ([2.0, -1.0][c], [0.5, 0.25][c], [1.0, -3.0][c], [4.0f64, 0.25][c]);
            for i in 0..3 {
                let xin = input.data()[c * 3 + i];
                let want = g * (xin - m) / (v + eps).sqrt() + be;
                assert!((out.data()[c * 3 + i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        // Two branches; only one reaches the output.
        let mut b = NetworkBuilder::<f64>::new(2, 1, 5).unwrap();
        let x = b.input();
        let used = b.conv(x, 1, 3).unwrap();
        let _unused = b.conv(x, 1, 3).unwrap();
        let mut net = b.finish(used);
        let input = Tensor::full(&[1, 1, 4, 4], 0.5);
        net.zero_grad();
        let y = net.forward(&input, true).unwrap();
        net.backward(&Tensor::full(y.shape(), 1.0)).unwrap();
        assert!(net.params()[2].grad.data().iter().all(|&g| g == 0.0));
        assert!(net.params()[3].grad.data().iter().all(|&g| g == 0.0));
        assert!(net.params()[0].grad.data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn backward_requires_training_pass() {
        let mut net = single_conv();
        let input = Tensor::full(&[1, 1, 4, 4], 0.5);
        let y = net.forward(&input, false).unwrap();
        assert!(net.backward(&y).is_err());
    }

    #[test]
    fn input_shape_is_checked() {
        let net = single_conv();
        assert!(matches!(net.infer(&Tensor::zeros(&[1, 2, 4, 4])), Err(NnError::ShapeMismatch(_))));
    }
}
