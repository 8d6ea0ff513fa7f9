//! Mini-batch training loop with per-step and per-epoch history.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::loss::{bce_loss, pixel_accuracy};
use crate::network::Network;
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub seed: u64,
}

impl TrainConfig {
    /// Learning rate 1e-4, five epochs, batches of 4 (2D) or 2 (3D).
    pub fn paper(dims: usize, optimizer: OptimizerKind) -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 5,
            batch_size: if dims == 2 { 4 } else { 2 },
            optimizer,
            loss: LossKind::Bce,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Supplies `(input, target)` pairs, each shaped `[C, (D,) H, W]`.
///
/// `epoch` lets implementations draw fresh augmentations every epoch; the same
/// `(index, epoch)` must always produce the same pair.
pub trait Dataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn item(&self, index: usize, epoch: usize) -> Result<(Tensor<f32>, Tensor<f32>)>;
}

/// In-memory pairs without augmentation.
pub struct VecDataset {
    pub items: Vec<(Tensor<f32>, Tensor<f32>)>,
}

impl Dataset for VecDataset {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn item(&self, index: usize, _epoch: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        Ok(self.items[index].clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// One row per step; validation columns are filled on the last step of
    /// each epoch.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,epoch,loss,accuracy,val_loss,val_accuracy")?;
        for (i, s) in self.steps.iter().enumerate() {
            let epoch_end = self.steps.get(i + 1).is_none_or(|n| n.epoch != s.epoch);
            let (vl, va) = match self.epochs.iter().find(|e| e.epoch == s.epoch) {
                Some(e) if epoch_end => (fmt_opt(e.val_loss), fmt_opt(e.val_accuracy)),
                _ => (String::new(), String::new()),
            };
            writeln!(w, "{},{},{:.9},{:.9},{},{}", s.step, s.epoch, s.loss, s.accuracy, vl, va)?;
        }
        Ok(())
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.9}")).unwrap_or_default()
}

fn batch_of(ds: &dyn Dataset, idx: &[usize], epoch: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let items = idx.iter().map(|&i| ds.item(i, epoch)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<&Tensor<f32>> = items.iter().map(|(x, _)| x).collect();
    let ys: Vec<&Tensor<f32>> = items.iter().map(|(_, y)| y).collect();
    Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
}

/// Mean loss and pixel accuracy of `net` in inference mode.
pub fn evaluate(net: &Network<f32>, ds: &dyn Dataset, batch_size: usize) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let (mut loss, mut acc) = (0.0, 0.0);
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = batch_of(ds, chunk, 0)?;
        let p = net.infer(&x)?;
        let (l, _) = bce_loss(&p, &y)?;
        loss += l * chunk.len() as f64;
        acc += pixel_accuracy(&p, &y, 0.5) * chunk.len() as f64;
    }
    let n = ds.len() as f64;
    Ok((loss / n, acc / n))
}

pub fn train(net: &mut Network<f32>, data: &dyn Dataset, val: Option<&dyn Dataset>, cfg: &TrainConfig) -> Result<History> {
    train_with(net, data, val, cfg, |_| {})
}

/// Like [`train`], calling `on_step` after every optimizer step.
pub fn train_with(
    net: &mut Network<f32>,
    data: &dyn Dataset,
    val: Option<&dyn Dataset>,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    net.reseed_dropout(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut e_loss, mut e_acc) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = batch_of(data, chunk, epoch)?;
            net.zero_grad();
            let p = net.forward(&x, true)?;
            let (loss, grad) = bce_loss(&p, &y)?;
            let accuracy = pixel_accuracy(&p, &y, 0.5);
            net.backward(&grad)?;
            opt.step(net.params_mut());
            let rec = StepRecord { step, epoch, loss, accuracy };
            on_step(&rec);
            history.steps.push(rec);
            e_loss += loss * chunk.len() as f64;
            e_acc += accuracy * chunk.len() as f64;
            step += 1;
        }
        let n = data.len() as f64;
        let (val_loss, val_accuracy) = match val {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate(net, v, cfg.batch_size)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        history.epochs.push(EpochRecord { epoch, loss: e_loss / n, accuracy: e_acc / n, val_loss, val_accuracy });
    }
    Ok(history)
}
