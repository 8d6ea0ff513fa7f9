//! Volume ingestion and output.
//!
//! Two on-disk layouts are supported:
//!
//! * slice stacks: one 8- or 16-bit grayscale PNG/TIFF per z index, named by a
//!   pattern with a single `*` standing for a zero-padded index;
//! * raw blocks: a little-endian binary blob in z-y-x order plus a UTF-8
//!   sidecar (`<blob>.hdr`) of `key=value` lines.
//!
//! Readers are lazy and read one slice per call, so streaming consumers keep
//! only the slices they are working on in memory. Everything downstream works
//! on `f32` values normalised to `[0, 1]`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{ImageBuffer, ImageDecoder, ImageReader, Luma};
use ndarray::{Array, Array2, Array3, ArrayView, Axis, Dimension, Slice};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U16,
    F32,
    /// Label maps.
    U32,
}

impl DType {
    pub fn bytes(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 | DType::U32 => 4,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::U8 => "uint8",
            DType::U16 => "uint16",
            DType::F32 => "float32",
            DType::U32 => "uint32",
        })
    }
}

impl FromStr for DType {
    type Err = SegError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uint8" | "u8" => Ok(DType::U8),
            "uint16" | "u16" => Ok(DType::U16),
            "float32" | "f32" => Ok(DType::F32),
            "uint32" | "u32" => Ok(DType::U32),
            other => Err(SegError::UnsupportedDtype(other.to_string())),
        }
    }
}

/// One z-slice in its stored type.
#[derive(Clone, Debug, PartialEq)]
pub enum SliceData {
    U8(Array2<u8>),
    U16(Array2<u16>),
    F32(Array2<f32>),
    U32(Array2<u32>),
}

impl SliceData {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            SliceData::U8(a) => a.dim(),
            SliceData::U16(a) => a.dim(),
            SliceData::F32(a) => a.dim(),
            SliceData::U32(a) => a.dim(),
        }
    }

    /// Integer intensities are divided by their type's maximum; floats pass
    /// through; labels are converted verbatim.
    pub fn normalized(&self) -> Array2<f32> {
        match self {
            SliceData::U8(a) => a.mapv(|v| v as f32 / u8::MAX as f32),
            SliceData::U16(a) => a.mapv(|v| v as f32 / u16::MAX as f32),
            SliceData::F32(a) => a.clone(),
            SliceData::U32(a) => a.mapv(|v| v as f32),
        }
    }

    /// Foreground test for masks and label maps: any non-zero value.
    pub fn nonzero(&self) -> Array2<bool> {
        match self {
            SliceData::U8(a) => a.mapv(|v| v != 0),
            SliceData::U16(a) => a.mapv(|v| v != 0),
            SliceData::F32(a) => a.mapv(|v| v != 0.0),
            SliceData::U32(a) => a.mapv(|v| v != 0),
        }
    }
}

/// Voxel storage of a [`Volume`], indexed `[z, y, x]`.
#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    U8(Array3<u8>),
    U16(Array3<u16>),
    F32(Array3<f32>),
    U32(Array3<u32>),
}

impl VoxelData {
    pub fn dtype(&self) -> DType {
        match self {
            VoxelData::U8(_) => DType::U8,
            VoxelData::U16(_) => DType::U16,
            VoxelData::F32(_) => DType::F32,
            VoxelData::U32(_) => DType::U32,
        }
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        match self {
            VoxelData::U8(a) => a.dim(),
            VoxelData::U16(a) => a.dim(),
            VoxelData::F32(a) => a.dim(),
            VoxelData::U32(a) => a.dim(),
        }
    }

    pub fn slice(&self, z: usize) -> SliceData {
        match self {
            VoxelData::U8(a) => SliceData::U8(a.index_axis(Axis(0), z).to_owned()),
            VoxelData::U16(a) => SliceData::U16(a.index_axis(Axis(0), z).to_owned()),
            VoxelData::F32(a) => SliceData::F32(a.index_axis(Axis(0), z).to_owned()),
            VoxelData::U32(a) => SliceData::U32(a.index_axis(Axis(0), z).to_owned()),
        }
    }

    fn write_le(&self, w: &mut impl Write) -> std::io::Result<()> {
        match self {
            VoxelData::U8(a) => a.iter().try_for_each(|v| w.write_all(&[*v])),
            VoxelData::U16(a) => a.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())),
            VoxelData::F32(a) => a.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())),
            VoxelData::U32(a) => a.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub name: String,
    /// Physical voxel edge in micrometres.
    pub spacing_um: f64,
    pub data: VoxelData,
}

impl Volume {
    pub fn new(name: impl Into<String>, data: VoxelData) -> Result<Self> {
        let (d, h, w) = data.dim();
        if d == 0 || h == 0 || w == 0 {
            return Err(SegError::InvalidParams(format!("volume shape ({d}, {h}, {w}) has an empty axis")));
        }
        Ok(Self { name: name.into(), spacing_um: 1.0, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        let (d, h, w) = self.data.dim();
        [d, h, w]
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// All voxels normalised to `[0, 1]` as in [`SliceData::normalized`].
    pub fn to_f32(&self) -> Array3<f32> {
        match &self.data {
            VoxelData::U8(a) => a.mapv(|v| v as f32 / u8::MAX as f32),
            VoxelData::U16(a) => a.mapv(|v| v as f32 / u16::MAX as f32),
            VoxelData::F32(a) => a.clone(),
            VoxelData::U32(a) => a.mapv(|v| v as f32),
        }
    }
}

/// Random access to z-slices of a volume, wherever it lives.
pub trait VolumeSource: Sync {
    /// `[depth, height, width]`.
    fn shape(&self) -> [usize; 3];
    fn dtype(&self) -> DType;
    fn read_raw_slice(&self, z: usize) -> Result<SliceData>;

    fn name(&self) -> &str {
        ""
    }

    fn spacing_um(&self) -> f64 {
        1.0
    }

    fn read_slice(&self, z: usize) -> Result<Array2<f32>> {
        Ok(self.read_raw_slice(z)?.normalized())
    }

    fn read_mask_slice(&self, z: usize) -> Result<Array2<bool>> {
        Ok(self.read_raw_slice(z)?.nonzero())
    }
}

fn check_z(z: usize, depth: usize) -> Result<()> {
    if z >= depth {
        Err(SegError::IndexOutOfRange { index: z, len: depth })
    } else {
        Ok(())
    }
}

impl VolumeSource for Volume {
    fn shape(&self) -> [usize; 3] {
        Volume::shape(self)
    }

    fn dtype(&self) -> DType {
        Volume::dtype(self)
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    fn read_raw_slice(&self, z: usize) -> Result<SliceData> {
        check_z(z, self.shape()[0])?;
        Ok(self.data.slice(z))
    }
}

/// A directory of per-slice image files, opened lazily.
#[derive(Clone, Debug)]
pub struct SliceStackSource {
    pub dir: PathBuf,
    pub pattern: String,
    pub files: Vec<PathBuf>,
    /// Index parsed from the first file name.
    pub first_index: u64,
    shape: [usize; 3],
    dtype: DType,
    name: String,
}

/// Matches `name` against a pattern with exactly one `*` and returns the text
/// the wildcard covered.
fn wildcard<'a>(pattern: &str, name: &'a str) -> Option<&'a str> {
    let (pre, post) = pattern.split_once('*')?;
    if name.len() < pre.len() + post.len() {
        return None;
    }
    let mid = name.strip_prefix(pre)?.strip_suffix(post)?;
    Some(mid)
}

fn probe(path: &Path) -> Result<(usize, usize, DType)> {
    let decoder = ImageReader::open(path)?.with_guessed_format()?.into_decoder()?;
    let (w, h) = decoder.dimensions();
    let dtype = match decoder.color_type() {
        image::ColorType::L8 => DType::U8,
        image::ColorType::L16 => DType::U16,
        other => return Err(SegError::UnsupportedDtype(format!("{other:?} in {}", path.display()))),
    };
    Ok((h as usize, w as usize, dtype))
}

/// Opens a slice stack. Only image headers are read.
pub fn open_stack(dir: &Path, pattern: &str) -> Result<SliceStackSource> {
    if pattern.matches('*').count() != 1 {
        return Err(SegError::InvalidParams(format!("slice pattern {pattern:?} needs exactly one '*'")));
    }
    let mut found: Vec<(String, u64)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(mid) = wildcard(pattern, &name) {
            if !mid.is_empty() && mid.bytes().all(|b| b.is_ascii_digit()) {
                found.push((name.clone(), mid.parse().unwrap_or(u64::MAX)));
            }
        }
    }
    if found.is_empty() {
        return Err(SegError::NoSlicesFound { dir: dir.to_path_buf(), pattern: pattern.to_string() });
    }
    found.sort();
    for pair in found.windows(2) {
        if pair[1].1 != pair[0].1 + 1 {
            return Err(SegError::NonContiguousSlices(format!("{} follows {}", pair[1].0, pair[0].0)));
        }
    }
    let files: Vec<PathBuf> = found.iter().map(|(n, _)| dir.join(n)).collect();
    let (h, w, dtype) = probe(&files[0])?;
    for f in &files[1..] {
        let (fh, fw, fd) = probe(f)?;
        if (fh, fw, fd) != (h, w, dtype) {
            return Err(SegError::InconsistentSliceShape {
                path: f.clone(),
                expected: format!("{h}x{w} {dtype}"),
                found: format!("{fh}x{fw} {fd}"),
            });
        }
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SliceStackSource {
        dir: dir.to_path_buf(),
        pattern: pattern.to_string(),
        first_index: found[0].1,
        files,
        shape: [found.len(), h, w],
        dtype,
        name,
    })
}

impl VolumeSource for SliceStackSource {
    fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn dtype(&self) -> DType {
        self.dtype
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn read_raw_slice(&self, z: usize) -> Result<SliceData> {
        check_z(z, self.shape[0])?;
        let img = image::open(&self.files[z])?;
        let [_, h, w] = self.shape;
        let mismatch = |found: String| SegError::InconsistentSliceShape {
            path: self.files[z].clone(),
            expected: format!("{h}x{w} {}", self.dtype),
            found,
        };
        if (img.height() as usize, img.width() as usize) != (h, w) {
            return Err(mismatch(format!("{}x{}", img.height(), img.width())));
        }
        match (self.dtype, img) {
            (DType::U8, image::DynamicImage::ImageLuma8(b)) => {
                Ok(SliceData::U8(Array2::from_shape_vec((h, w), b.into_raw()).expect("decoded size")))
            }
            (DType::U16, image::DynamicImage::ImageLuma16(b)) => {
                Ok(SliceData::U16(Array2::from_shape_vec((h, w), b.into_raw()).expect("decoded size")))
            }
            (_, other) => Err(mismatch(format!("{:?}", other.color()))),
        }
    }
}

/// Path of the sidecar header belonging to a raw blob.
pub fn sidecar_path(blob: &Path) -> PathBuf {
    let mut s = blob.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// A raw little-endian blob described by a sidecar header.
#[derive(Clone, Debug)]
pub struct RawSource {
    pub path: PathBuf,
    shape: [usize; 3],
    dtype: DType,
    spacing_um: f64,
    name: String,
}

fn parse_header(path: &Path, text: &str) -> Result<([usize; 3], DType, f64, String)> {
    let bad = |m: String| SegError::BadHeader { path: path.to_path_buf(), message: m };
    let (mut shape, mut dtype, mut spacing, mut name) = (None, None, 1.0, String::new());
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key=value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "shape" => {
                let dims: Vec<usize> = v
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(format!("line {}: shape: {e}", no + 1)))?;
                let dims: [usize; 3] =
                    dims.try_into().map_err(|_| bad(format!("line {}: shape needs 3 extents", no + 1)))?;
                shape = Some(dims);
            }
            "dtype" => dtype = Some(v.parse::<DType>()?),
            "order" if v != "zyx" => return Err(bad(format!("line {}: unsupported order {v}", no + 1))),
            "endianness" if v != "little" => {
                return Err(bad(format!("line {}: unsupported endianness {v}", no + 1)))
            }
            "spacing_um" => spacing = v.parse().map_err(|e| bad(format!("line {}: spacing: {e}", no + 1)))?,
            "name" => name = v.to_string(),
            _ => {}
        }
    }
    let shape = shape.ok_or_else(|| bad("missing shape".into()))?;
    if shape.contains(&0) {
        return Err(bad(format!("empty axis in shape {shape:?}")));
    }
    Ok((shape, dtype.ok_or_else(|| bad("missing dtype".into()))?, spacing, name))
}

pub fn open_raw(path: &Path) -> Result<RawSource> {
    let hdr = sidecar_path(path);
    let text = fs::read_to_string(&hdr)?;
    let (shape, dtype, spacing_um, name) = parse_header(&hdr, &text)?;
    let expected = (shape.iter().product::<usize>() * dtype.bytes()) as u64;
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(SegError::BadHeader {
            path: hdr,
            message: format!("blob holds {actual} bytes, header implies {expected}"),
        });
    }
    Ok(RawSource { path: path.to_path_buf(), shape, dtype, spacing_um, name })
}

impl VolumeSource for RawSource {
    fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn dtype(&self) -> DType {
        self.dtype
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    fn read_raw_slice(&self, z: usize) -> Result<SliceData> {
        check_z(z, self.shape[0])?;
        let [_, h, w] = self.shape;
        let n = h * w;
        let mut bytes = vec![0u8; n * self.dtype.bytes()];
        let mut f = File::open(&self.path)?;
        f.seek(SeekFrom::Start((z * bytes.len()) as u64))?;
        f.read_exact(&mut bytes)?;
        let shape = (h, w);
        Ok(match self.dtype {
            DType::U8 => SliceData::U8(Array2::from_shape_vec(shape, bytes).expect("sized")),
            DType::U16 => SliceData::U16(
                Array2::from_shape_vec(shape, bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
                    .expect("sized"),
            ),
            DType::F32 => SliceData::F32(
                Array2::from_shape_vec(shape, bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
                    .expect("sized"),
            ),
            DType::U32 => SliceData::U32(
                Array2::from_shape_vec(shape, bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
                    .expect("sized"),
            ),
        })
    }
}

/// Loads every slice of a source into memory.
pub fn read_all(src: &dyn VolumeSource) -> Result<Volume> {
    let [d, h, w] = src.shape();
    let slices = (0..d).map(|z| src.read_raw_slice(z)).collect::<Result<Vec<_>>>()?;
    macro_rules! gather {
        ($variant:ident, $t:ty) => {{
            let mut a = Array3::<$t>::default((d, h, w));
            for (z, s) in slices.into_iter().enumerate() {
                match s {
                    SliceData::$variant(s) => a.index_axis_mut(Axis(0), z).assign(&s),
                    _ => unreachable!("source reported one dtype"),
                }
            }
            VoxelData::$variant(a)
        }};
    }
    let data = match src.dtype() {
        DType::U8 => gather!(U8, u8),
        DType::U16 => gather!(U16, u16),
        DType::F32 => gather!(F32, f32),
        DType::U32 => gather!(U32, u32),
    };
    let mut v = Volume::new(src.name(), data)?;
    v.spacing_um = src.spacing_um();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VolumeFormat {
    /// `<path>` blob plus `<path>.hdr`.
    Raw,
    /// `<path>/` directory of images named by `pattern` (one `*`), e.g. `slice_*.png`.
    SliceStack { pattern: String },
}

fn tmp_name(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes to a temporary name and renames into place once complete.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let tmp = tmp_name(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn header_text(vol: &Volume) -> String {
    let [d, h, w] = vol.shape();
    format!(
        "shape={d},{h},{w}\ndtype={}\norder=zyx\nendianness=little\nspacing_um={}\nname={}\n",
        vol.dtype(),
        vol.spacing_um,
        vol.name
    )
}

/// Stack file name for slice `z` of a `depth`-slice volume.
pub fn slice_file_name(pattern: &str, z: usize, depth: usize) -> String {
    let width = (depth.saturating_sub(1)).to_string().len().max(4);
    pattern.replacen('*', &format!("{z:0width$}"), 1)
}

pub fn write_volume(vol: &Volume, path: &Path, format: &VolumeFormat) -> Result<()> {
    match format {
        VolumeFormat::Raw => {
            write_atomic(path, |w| vol.data.write_le(w))?;
            let hdr = header_text(vol);
            write_atomic(&sidecar_path(path), |w| w.write_all(hdr.as_bytes()))
        }
        VolumeFormat::SliceStack { pattern } => {
            if pattern.matches('*').count() != 1 {
                return Err(SegError::InvalidParams(format!("slice pattern {pattern:?} needs exactly one '*'")));
            }
            fs::create_dir_all(path)?;
            let [d, h, w] = vol.shape();
            for z in 0..d {
                let name = slice_file_name(pattern, z, d);
                let dest = path.join(&name);
                // Keep the real extension on the temp file so the encoder is chosen correctly.
                let tmp = path.join(format!(".partial-{name}"));
                match vol.data.slice(z) {
                    SliceData::U8(s) => ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, s.into_raw_vec_and_offset().0)
                        .expect("sized")
                        .save(&tmp)?,
                    SliceData::U16(s) => ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, s.into_raw_vec_and_offset().0)
                        .expect("sized")
                        .save(&tmp)?,
                    other => {
                        return Err(SegError::UnsupportedDtype(format!(
                            "{:?} slices cannot be stored as grayscale images; use the raw format",
                            match other {
                                SliceData::F32(_) => DType::F32,
                                _ => DType::U32,
                            }
                        )))
                    }
                }
                fs::rename(&tmp, &dest)?;
            }
            Ok(())
        }
    }
}

/// Reads a volume written in either format.
pub fn read_volume(path: &Path, format: &VolumeFormat) -> Result<Volume> {
    match format {
        VolumeFormat::Raw => read_all(&open_raw(path)?),
        VolumeFormat::SliceStack { pattern } => read_all(&open_stack(path, pattern)?),
    }
}

/// Opens either layout: a directory is a slice stack (pattern required), a
/// file is a raw blob.
pub fn open_source(path: &Path, pattern: &str) -> Result<Box<dyn VolumeSource>> {
    if path.is_dir() {
        Ok(Box::new(open_stack(path, pattern)?))
    } else {
        Ok(Box::new(open_raw(path)?))
    }
}

/// Zero-pads every axis by `margin` on both sides.
pub fn pad<A: Clone + Default, D: Dimension>(field: &ArrayView<A, D>, margin: usize) -> Array<A, D> {
    let n = field.ndim();
    pad_with(field, &vec![margin; n], &vec![margin; n])
}

/// Zero-pads each axis by `before[i]` and `after[i]`.
pub fn pad_with<A: Clone + Default, D: Dimension>(field: &ArrayView<A, D>, before: &[usize], after: &[usize]) -> Array<A, D> {
    let mut shape = field.raw_dim();
    for i in 0..shape.ndim() {
        shape[i] += before[i] + after[i];
    }
    let mut out = Array::from_elem(shape, A::default());
    out.slice_each_axis_mut(|ax| {
        let i = ax.axis.index();
        Slice::from(before[i]..before[i] + field.len_of(ax.axis))
    })
    .assign(field);
    out
}

/// Extracts the block starting at `origin` with extents `shape`.
pub fn crop<A: Clone, D: Dimension>(field: &ArrayView<A, D>, origin: &[usize], shape: &[usize]) -> Array<A, D> {
    field
        .slice_each_axis(|ax| {
            let i = ax.axis.index();
            Slice::from(origin[i]..origin[i] + shape[i])
        })
        .to_owned()
}

/// Convenience for building a `u8` volume from normalised floats.
pub fn quantize_u8(field: &Array3<f32>) -> Array3<u8> {
    field.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}
