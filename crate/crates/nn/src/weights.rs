//! Weight files.
//!
//! Layout: the 8-byte magic `FSEGNET1`, a little-endian `u64` header length,
//! a UTF-8 JSON header (architecture id, spec, seed, layer list, tensor
//! shapes, optional training configuration), then every tensor's `f32`
//! values in header order, little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{build, ArchSpec, SegNet};
use crate::error::{NnError, Result};
use crate::network::{LayerKind, NodeId};

pub const MAGIC: &[u8; 8] = b"FSEGNET1";

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    #[serde(flatten)]
    kind: LayerKind,
    inputs: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tag: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    architecture: String,
    spec: ArchSpec,
    seed: u64,
    layers: Vec<LayerEntry>,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    training: Option<serde_json::Value>,
}

fn tensor_entries(net: &SegNet) -> Vec<TensorEntry> {
    let params = net.net.params().iter().map(|p| TensorEntry {
        name: p.name.clone(),
        shape: p.value.shape().to_vec(),
        trainable: true,
    });
    let buffers = net.net.buffers().iter().map(|b| TensorEntry {
        name: b.name.clone(),
        shape: b.value.shape().to_vec(),
        trainable: false,
    });
    params.chain(buffers).collect()
}

/// Serialises a network to bytes. `training` is recorded verbatim in the header.
pub fn to_bytes(net: &SegNet, training: Option<serde_json::Value>) -> Result<Vec<u8>> {
    let header = Header {
        architecture: net.spec.arch_id(),
        spec: net.spec.clone(),
        seed: net.seed,
        layers: net
            .net
            .layers()
            .into_iter()
            .map(|l| LayerEntry { kind: l.kind, inputs: l.inputs, tag: l.tag })
            .collect(),
        tensors: tensor_entries(net),
        training,
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::CorruptFile(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let values = net
        .net
        .params()
        .iter()
        .map(|p| &p.value)
        .chain(net.net.buffers().iter().map(|b| &b.value));
    for t in values {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses bytes written by [`to_bytes`]. When `expected` is given, the stored
/// spec must equal it.
pub fn from_bytes(bytes: &[u8], expected: Option<&ArchSpec>) -> Result<(SegNet, Option<serde_json::Value>)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(NnError::CorruptFile("missing FSEGNET1 magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(NnError::CorruptFile("header truncated".into()));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| NnError::CorruptFile(format!("bad header: {e}")))?;
    if let Some(want) = expected {
        if want.arch_id() != header.architecture || *want != header.spec {
            return Err(NnError::ArchMismatch {
                expected: format!("{} {:?}", want.arch_id(), want),
                found: format!("{} {:?}", header.architecture, header.spec),
            });
        }
    }
    if header.spec.arch_id() != header.architecture {
        return Err(NnError::CorruptFile("architecture id disagrees with spec".into()));
    }
    let mut net = build(&header.spec, header.seed)?;
    if tensor_entries(&net) != header.tensors {
        return Err(NnError::CorruptFile("tensor list does not match the architecture".into()));
    }
    let blob = &body[hlen..];
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if blob.len() != total * 4 {
        return Err(NnError::CorruptFile(format!(
            "expected {} bytes of parameters, found {}",
            total * 4,
            blob.len()
        )));
    }
    let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for p in net.net.params_mut() {
        for v in p.value.data_mut() {
            *v = values.next().unwrap();
        }
    }
    for b in net.net.buffers_mut() {
        for v in b.value.data_mut() {
            *v = values.next().unwrap();
        }
    }
    Ok((net, header.training))
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_weights(net: &SegNet, path: &Path, training: Option<serde_json::Value>) -> Result<()> {
    let bytes = to_bytes(net, training)?;
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_weights(path: &Path, expected: Option<&ArchSpec>) -> Result<SegNet> {
    let bytes = fs::read(path)?;
    Ok(from_bytes(&bytes, expected)?.0)
}
