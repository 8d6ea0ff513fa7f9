//! Builders for the four segmentation networks: U-net and Tiramisu
//! (FC-DenseNet), each in 2D and 3D. Every network maps a single-channel
//! input to a same-shaped single-channel sigmoid probability map.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::network::{LayerKind, Network, NetworkBuilder, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Unet,
    Tiramisu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    pub dims: usize,
    /// Number of down-sampling levels.
    pub depth: usize,
    /// U-net channels at the first level; doubled per level.
    pub base_channels: usize,
    /// Tiramisu feature maps added by every dense-block layer.
    pub growth_rate: usize,
    pub layers_per_block: usize,
    pub dropout_rate: f64,
    pub batch_norm: bool,
}

impl ArchSpec {
    /// Full-size defaults. 2D U-net drops out at 0.5, 3D U-net not at all,
    /// Tiramisu at 0.2 in every dense layer.
    pub fn paper(family: Family, dims: usize) -> Self {
        match (family, dims) {
            (Family::Unet, 2) => Self::unet(2, 4, 64, 0.5),
            (Family::Unet, _) => Self::unet(dims, 4, 32, 0.0),
            (Family::Tiramisu, 2) => Self::tiramisu(2, 5, 16, 4, 0.2),
            (Family::Tiramisu, _) => Self::tiramisu(dims, 3, 16, 4, 0.2),
        }
    }

    /// Small variants for laptop-scale experiments and tests.
    pub fn desk(family: Family, dims: usize) -> Self {
        let paper = Self::paper(family, dims);
        match family {
            Family::Unet => Self::unet(dims, 2, if dims == 2 { 8 } else { 4 }, paper.dropout_rate),
            Family::Tiramisu => Self::tiramisu(dims, 2, 4, 2, paper.dropout_rate),
        }
    }

    pub fn unet(dims: usize, depth: usize, base_channels: usize, dropout_rate: f64) -> Self {
        Self {
            family: Family::Unet,
            dims,
            depth,
            base_channels,
            growth_rate: 0,
            layers_per_block: 0,
            dropout_rate,
            batch_norm: true,
        }
    }

    pub fn tiramisu(dims: usize, depth: usize, growth_rate: usize, layers_per_block: usize, dropout_rate: f64) -> Self {
        Self {
            family: Family::Tiramisu,
            dims,
            depth,
            base_channels: 0,
            growth_rate,
            layers_per_block,
            dropout_rate,
            batch_norm: true,
        }
    }

    /// Identifier stored in weight-file headers, e.g. `"unet2d"`.
    pub fn arch_id(&self) -> String {
        let f = match self.family {
            Family::Unet => "unet",
            Family::Tiramisu => "tiramisu",
        };
        format!("{f}{}d", self.dims)
    }

    /// Parses an id such as `"tiramisu3d"` into `(family, dims)`.
    pub fn parse_id(id: &str) -> Result<(Family, usize)> {
        match id {
            "unet2d" => Ok((Family::Unet, 2)),
            "unet3d" => Ok((Family::Unet, 3)),
            "tiramisu2d" => Ok((Family::Tiramisu, 2)),
            "tiramisu3d" => Ok((Family::Tiramisu, 3)),
            other => Err(NnError::InvalidSpec(format!("unknown architecture {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::InvalidSpec(m.to_string()));
        if self.dims != 2 && self.dims != 3 {
            return bad("dims must be 2 or 3");
        }
        if self.depth < 1 {
            return bad("depth must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        match self.family {
            Family::Unet if self.base_channels == 0 => bad("U-net needs base_channels >= 1"),
            Family::Tiramisu if self.growth_rate == 0 || self.layers_per_block == 0 => {
                bad("Tiramisu needs growth_rate and layers_per_block >= 1")
            }
            _ => Ok(()),
        }
    }

    /// Spatial extents must be divisible by this value.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

/// A built network together with the spec and seed that produced it.
#[derive(Clone, Debug)]
pub struct SegNet {
    pub spec: ArchSpec,
    pub seed: u64,
    pub net: Network<f32>,
}

impl SegNet {
    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }
}

/// Builds the network described by `spec`, initialising weights from `seed`.
pub fn build(spec: &ArchSpec, seed: u64) -> Result<SegNet> {
    spec.validate()?;
    let net = match spec.family {
        Family::Unet => build_unet(spec, seed)?,
        Family::Tiramisu => build_tiramisu(spec, seed)?,
    };
    Ok(SegNet { spec: spec.clone(), seed, net })
}

struct Ctx<'a> {
    b: NetworkBuilder<f32>,
    spec: &'a ArchSpec,
}

impl Ctx<'_> {
    fn norm_relu(&mut self, x: NodeId) -> NodeId {
        let x = if self.spec.batch_norm { self.b.batch_norm(x) } else { x };
        self.b.relu(x)
    }

    fn dropout(&mut self, x: NodeId, tag: &str) -> Result<NodeId> {
        if self.spec.dropout_rate == 0.0 {
            return Ok(x);
        }
        let d = self.b.dropout(x, self.spec.dropout_rate)?;
        self.b.tag(d, tag);
        Ok(d)
    }

    /// conv3 → BN → ReLU, twice.
    fn double_conv(&mut self, x: NodeId, channels: usize) -> Result<NodeId> {
        let x = self.b.conv(x, channels, 3)?;
        let x = self.norm_relu(x);
        let x = self.b.conv(x, channels, 3)?;
        Ok(self.norm_relu(x))
    }

    /// BN → ReLU → conv3 → dropout, returning only the new feature maps.
    fn dense_layer(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.norm_relu(x);
        let x = self.b.conv(x, self.spec.growth_rate, 3)?;
        self.dropout(x, "dense_block")
    }

    /// Returns `(input ⧺ all new maps, new maps only)`.
    fn dense_block(&mut self, x: NodeId) -> Result<(NodeId, NodeId)> {
        let mut feats = vec![x];
        let mut news = Vec::new();
        for _ in 0..self.spec.layers_per_block {
            let input = if feats.len() == 1 { feats[0] } else { self.b.concat(&feats)? };
            let y = self.dense_layer(input)?;
            feats.push(y);
            news.push(y);
        }
        let full = self.b.concat(&feats)?;
        let new = if news.len() == 1 { news[0] } else { self.b.concat(&news)? };
        Ok((full, new))
    }

    fn head(mut self, x: NodeId) -> Result<Network<f32>> {
        let y = self.b.conv(x, 1, 1)?;
        let y = self.b.sigmoid(y);
        self.b.tag(y, "output");
        Ok(self.b.finish(y))
    }
}

fn build_unet(spec: &ArchSpec, seed: u64) -> Result<Network<f32>> {
    let mut cx = Ctx { b: NetworkBuilder::new(spec.dims, 1, seed)?, spec };
    let mut x = cx.b.input();
    let mut skips = Vec::with_capacity(spec.depth);
    let mut ch = spec.base_channels;
    for level in 0..spec.depth {
        x = cx.double_conv(x, ch)?;
        if level + 1 == spec.depth {
            x = cx.dropout(x, "last_analysis")?;
        }
        skips.push(x);
        x = cx.b.maxpool(x);
        ch *= 2;
    }
    x = cx.double_conv(x, ch)?;
    x = cx.dropout(x, "bottleneck")?;
    for skip in skips.into_iter().rev() {
        ch /= 2;
        let up = cx.b.upconv(x, ch);
        let merged = cx.b.concat(&[skip, up])?;
        x = cx.double_conv(merged, ch)?;
    }
    cx.head(x)
}

fn build_tiramisu(spec: &ArchSpec, seed: u64) -> Result<Network<f32>> {
    let mut cx = Ctx { b: NetworkBuilder::new(spec.dims, 1, seed)?, spec };
    let input = cx.b.input();
    let mut x = cx.b.conv(input, 3 * spec.growth_rate, 3)?;
    let mut skips = Vec::with_capacity(spec.depth);
    for _ in 0..spec.depth {
        let (full, _) = cx.dense_block(x)?;
        skips.push(full);
        // Transition down: BN → ReLU → conv1 → dropout → pool.
        let c = cx.b.channels(full);
        let t = cx.norm_relu(full);
        let t = cx.b.conv(t, c, 1)?;
        let t = cx.dropout(t, "transition_down")?;
        x = cx.b.maxpool(t);
    }
    let (_, mut x_up) = cx.dense_block(x)?;
    for (i, skip) in skips.into_iter().rev().enumerate() {
        let c = cx.b.channels(x_up);
        let up = cx.b.upconv(x_up, c);
        let merged = cx.b.concat(&[up, skip])?;
        let (full, new) = cx.dense_block(merged)?;
        x_up = if i + 1 == spec.depth { full } else { new };
    }
    cx.head(x_up)
}

/// Dropout layers as `(tag, rate)` pairs, in graph order.
pub fn dropout_audit(net: &Network<f32>) -> Vec<(String, f64)> {
    net.layers()
        .into_iter()
        .filter_map(|l| match l.kind {
            LayerKind::Dropout { rate } => Some((l.tag.unwrap_or_default(), rate)),
            _ => None,
        })
        .collect()
}
