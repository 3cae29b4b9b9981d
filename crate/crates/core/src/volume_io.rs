//! NIfTI-1 reading and writing for the subset BraTS-style data uses, plus the
//! voxel-grid and study carriers shared by the rest of the crate.
//!
//! Only single-file volumes (`n+1\0`) are handled, either raw `.nii` or
//! gzip-wrapped. On-disk datatypes are limited to uint8, int16 and float32.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Size of a NIfTI-1 header in bytes.
pub const HEADER_SIZE: usize = 348;
/// Offset of the payload in the single-file volumes this crate writes.
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIRED: &[u8; 4] = b"ni1\0";

pub const SPACING_TOLERANCE_MM: f64 = 1e-6;
pub const AFFINE_TOLERANCE: f64 = 1e-5;

pub type Affine = [[f64; 4]; 4];

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("bad magic {0:?}: expected \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("paired header/image NIfTI files (magic \"ni1\\0\") are not supported; convert to a single .nii file")]
    PairedFileUnsupported,
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("volume is not 3D (dim = {0:?})")]
    Not3D([i16; 8]),
    #[error("truncated data: need {expected} bytes, file has {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("label value {value} does not fit datatype {datatype}")]
    LabelOverflow { value: f64, datatype: Datatype },
    #[error("value {value} is not representable as {datatype}")]
    NotRepresentable { value: f64, datatype: Datatype },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch at {0}")]
    GridMismatch(GridField),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// First field on which two grids disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridField {
    Dim(Axis),
    Spacing(Axis),
    Affine { row: usize, col: usize },
}

impl fmt::Display for GridField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridField::Dim(a) => write!(f, "dims (axis {a})"),
            GridField::Spacing(a) => write!(f, "spacing (axis {a})"),
            GridField::Affine { row, col } => write!(f, "affine[{row}][{col}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    FloatIntensity,
    IntegerLabel,
}

/// On-disk payload datatypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Datatype::Uint8 => "uint8",
            Datatype::Int16 => "int16",
            Datatype::Float32 => "float32",
        })
    }
}

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Dense 3D array with physical geometry. Data is stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
    data: Vec<f32>,
    kind: ValueKind,
}

impl VoxelGrid {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        affine: Affine,
        data: Vec<f32>,
        kind: ValueKind,
    ) -> Result<Self> {
        check_geometry(dims, spacing, &affine)?;
        let n = dims.iter().product::<usize>();
        if data.len() != n {
            return Err(VolumeError::InvalidGrid(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        Ok(Self { dims, spacing, affine, data, kind })
    }

    /// Grid with a diagonal affine built from `spacing`.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>, kind: ValueKind) -> Result<Self> {
        Self::new(dims, spacing, diagonal_affine(spacing), data, kind)
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], kind: ValueKind) -> Result<Self> {
        let n = dims.iter().product();
        Self::with_spacing(dims, spacing, vec![0.0; n], kind)
    }

    /// Same geometry as `self`, new payload.
    pub fn with_data(&self, data: Vec<f32>, kind: ValueKind) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.affine, data, kind)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Smallest box holding every voxel whose value is not 0.0.
    pub fn nonzero_box(&self) -> Option<[Range<usize>; 3]> {
        let [nx, ny, nz] = self.dims;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for z in 0..nz {
            for y in 0..ny {
                let row = &self.data[nx * (y + ny * z)..nx * (y + ny * z + 1)];
                let Some(first) = row.iter().position(|&v| v != 0.0) else { continue };
                let last = row.iter().rposition(|&v| v != 0.0).unwrap();
                lo = [lo[0].min(first), lo[1].min(y), lo[2].min(z)];
                hi = [hi[0].max(last), hi[1].max(y), hi[2].max(z)];
            }
        }
        (lo[0] != usize::MAX).then(|| [lo[0]..hi[0] + 1, lo[1]..hi[1] + 1, lo[2]..hi[2] + 1])
    }

    /// Copy of the sub-block `region`. The affine is shifted so every kept
    /// voxel keeps its world position.
    pub fn crop(&self, region: &[Range<usize>; 3]) -> Result<VoxelGrid> {
        let [nx, ny, _] = self.dims;
        if region.iter().zip(self.dims).any(|(r, d)| r.start >= r.end || r.end > d) {
            return Err(VolumeError::InvalidGrid(format!("crop {region:?} outside {:?}", self.dims)));
        }
        let mut data = Vec::with_capacity(region.iter().map(|r| r.len()).product());
        for z in region[2].clone() {
            for y in region[1].clone() {
                let row = nx * (y + ny * z);
                data.extend_from_slice(&self.data[row + region[0].start..row + region[0].end]);
            }
        }
        let mut affine = self.affine;
        let offset = [region[0].start, region[1].start, region[2].start].map(|v| v as f64);
        for row in affine.iter_mut().take(3) {
            row[3] += (0..3).map(|c| row[c] * offset[c]).sum::<f64>();
        }
        Ok(VoxelGrid {
            dims: region.clone().map(|r| r.len()),
            spacing: self.spacing,
            affine,
            data,
            kind: self.kind,
        })
    }
}

pub(crate) fn check_geometry(dims: [usize; 3], spacing: [f64; 3], affine: &Affine) -> Result<()> {
    if dims.contains(&0) {
        return Err(VolumeError::InvalidGrid(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::InvalidGrid(format!("spacing must be positive, got {spacing:?}")));
    }
    if affine[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(VolumeError::InvalidGrid(format!("affine last row must be (0,0,0,1), got {:?}", affine[3])));
    }
    Ok(())
}

/// Compares geometry of two grids, returning the first differing field.
pub fn compare_geometry(
    a: ([usize; 3], [f64; 3], &Affine),
    b: ([usize; 3], [f64; 3], &Affine),
) -> Option<GridField> {
    for axis in Axis::ALL {
        if a.0[axis.index()] != b.0[axis.index()] {
            return Some(GridField::Dim(axis));
        }
    }
    for axis in Axis::ALL {
        if (a.1[axis.index()] - b.1[axis.index()]).abs() > SPACING_TOLERANCE_MM {
            return Some(GridField::Spacing(axis));
        }
    }
    for row in 0..4 {
        for col in 0..4 {
            if (a.2[row][col] - b.2[row][col]).abs() > AFFINE_TOLERANCE {
                return Some(GridField::Affine { row, col });
            }
        }
    }
    None
}

/// Succeeds iff every grid shares dims, spacing (1e-6 mm) and affine (1e-5).
pub fn validate_same_grid(grids: &[&VoxelGrid]) -> Result<()> {
    let Some(first) = grids.first() else {
        return Ok(());
    };
    for g in &grids[1..] {
        if let Some(field) = compare_geometry(
            (first.dims, first.spacing, &first.affine),
            (g.dims, g.spacing, &g.affine),
        ) {
            return Err(VolumeError::GridMismatch(field));
        }
    }
    Ok(())
}

/// MRI input sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    T1,
    T1ce,
    T2,
    Flair,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::T1, Channel::T1ce, Channel::T2, Channel::Flair];

    pub fn name(self) -> &'static str {
        match self {
            Channel::T1 => "T1",
            Channel::T1ce => "T1CE",
            Channel::T2 => "T2",
            Channel::Flair => "FLAIR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "T1" => Some(Channel::T1),
            "T1CE" | "T1C" | "T1GD" => Some(Channel::T1ce),
            "T2" => Some(Channel::T2),
            "FLAIR" | "T2FLAIR" => Some(Channel::Flair),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One patient's co-registered channels plus an optional reference label volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    patient_id: String,
    channels: BTreeMap<Channel, VoxelGrid>,
    reference: Option<VoxelGrid>,
}

impl Study {
    pub fn new(
        patient_id: impl Into<String>,
        channels: BTreeMap<Channel, VoxelGrid>,
        reference: Option<VoxelGrid>,
    ) -> Result<Self> {
        let grids: Vec<&VoxelGrid> = channels.values().chain(reference.iter()).collect();
        validate_same_grid(&grids)?;
        Ok(Self { patient_id: patient_id.into(), channels, reference })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn channel(&self, c: Channel) -> Option<&VoxelGrid> {
        self.channels.get(&c)
    }

    pub fn channels(&self) -> &BTreeMap<Channel, VoxelGrid> {
        &self.channels
    }

    pub fn reference(&self) -> Option<&VoxelGrid> {
        self.reference.as_ref()
    }

    /// Any grid of the study, used as a geometry template.
    pub fn template(&self) -> Option<&VoxelGrid> {
        self.channels.values().next().or(self.reference.as_ref())
    }

    pub(crate) fn channels_mut(&mut self) -> &mut BTreeMap<Channel, VoxelGrid> {
        &mut self.channels
    }
}

// ---- header layout -------------------------------------------------------

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct HeaderView<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderView<'_> {
    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => LittleEndian::read_i16(&self.bytes[at..]),
            Endian::Big => BigEndian::read_i16(&self.bytes[at..]),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => LittleEndian::read_f32(&self.bytes[at..]),
            Endian::Big => BigEndian::read_f32(&self.bytes[at..]),
        }
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| VolumeError::IoFailure { path: path.to_path_buf(), source }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if is_gzip(&bytes) {
        let mut raw = Vec::new();
        MultiGzDecoder::new(&bytes[..]).read_to_end(&mut raw).map_err(io_err(path))?;
        decode_volume(&raw)
    } else {
        decode_volume(&bytes)
    }
}

/// Decodes an uncompressed single-file NIfTI-1 image held in memory.
pub fn decode_volume(bytes: &[u8]) -> Result<VoxelGrid> {
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::TruncatedData { expected: HEADER_SIZE, actual: bytes.len() });
    }
    let endian = if LittleEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
        Endian::Little
    } else if BigEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(VolumeError::InvalidHeader("sizeof_hdr is not 348 in either byte order".into()));
    };
    let h = HeaderView { bytes: &bytes[..HEADER_SIZE], endian };

    let magic: [u8; 4] = bytes[offset::MAGIC..offset::MAGIC + 4].try_into().unwrap();
    if &magic == MAGIC_PAIRED {
        return Err(VolumeError::PairedFileUnsupported);
    }
    if &magic != MAGIC_SINGLE {
        return Err(VolumeError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = h.i16(offset::DIM + 2 * i);
    }
    let ndim = dim[0];
    if !(3..=7).contains(&ndim) || dim[4..=ndim as usize].iter().any(|&d| d != 1) {
        return Err(VolumeError::Not3D(dim));
    }
    if dim[1..4].iter().any(|&d| d <= 0) {
        return Err(VolumeError::InvalidHeader(format!("non-positive dims {:?}", &dim[1..4])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype = Datatype::from_code(h.i16(offset::DATATYPE))?;
    let bitpix = h.i16(offset::BITPIX);
    if bitpix != 0 && bitpix as usize != 8 * datatype.bytes_per_voxel() {
        return Err(VolumeError::InvalidHeader(format!("bitpix {bitpix} inconsistent with {datatype}")));
    }

    let pixdim: Vec<f64> = (0..8).map(|i| h.f32(offset::PIXDIM + 4 * i) as f64).collect();
    let spacing = [pixdim[1], pixdim[2], pixdim[3]];
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::InvalidHeader(format!("non-positive pixdim {spacing:?}")));
    }

    let vox_offset = h.f32(offset::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(VolumeError::InvalidHeader(format!("vox_offset {vox_offset} inside header")));
    }
    let start = vox_offset as usize;

    let affine = header_affine(&h, spacing, &pixdim);

    let n: usize = dims.iter().product();
    let bpv = datatype.bytes_per_voxel();
    let end = start + n * bpv;
    if bytes.len() < end {
        return Err(VolumeError::TruncatedData { expected: end, actual: bytes.len() });
    }
    let payload = &bytes[start..end];

    let mut data = vec![0f32; n];
    match (datatype, endian) {
        (Datatype::Uint8, _) => data.iter_mut().zip(payload).for_each(|(d, &b)| *d = b as f32),
        (Datatype::Int16, Endian::Little) => {
            data.iter_mut().zip(payload.chunks_exact(2)).for_each(|(d, c)| *d = LittleEndian::read_i16(c) as f32)
        }
        (Datatype::Int16, Endian::Big) => {
            data.iter_mut().zip(payload.chunks_exact(2)).for_each(|(d, c)| *d = BigEndian::read_i16(c) as f32)
        }
        (Datatype::Float32, Endian::Little) => LittleEndian::read_f32_into(payload, &mut data),
        (Datatype::Float32, Endian::Big) => BigEndian::read_f32_into(payload, &mut data),
    }

    let slope = h.f32(offset::SCL_SLOPE) as f64;
    let inter = h.f32(offset::SCL_INTER) as f64;
    let scaled = slope != 0.0 && slope.is_finite() && inter.is_finite() && !(slope == 1.0 && inter == 0.0);
    if scaled {
        data.iter_mut().for_each(|v| *v = (slope * *v as f64 + inter) as f32);
    }

    let kind = match datatype {
        Datatype::Float32 => ValueKind::FloatIntensity,
        _ if scaled => ValueKind::FloatIntensity,
        _ => ValueKind::IntegerLabel,
    };
    VoxelGrid::new(dims, spacing, affine, data, kind)
}

/// sform when sform_code > 0, else qform when qform_code > 0, else pixdim diagonal.
fn header_affine(h: &HeaderView<'_>, spacing: [f64; 3], pixdim: &[f64]) -> Affine {
    if h.i16(offset::SFORM_CODE) > 0 {
        let mut a = [[0.0; 4]; 4];
        for (r, row) in a.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = h.f32(offset::SROW_X + 16 * r + 4 * c) as f64;
            }
        }
        a[3] = [0.0, 0.0, 0.0, 1.0];
        return a;
    }
    if h.i16(offset::QFORM_CODE) > 0 {
        let b = h.f32(offset::QUATERN_B) as f64;
        let c = h.f32(offset::QUATERN_B + 4) as f64;
        let d = h.f32(offset::QUATERN_B + 8) as f64;
        let qoff = [
            h.f32(offset::QOFFSET_X) as f64,
            h.f32(offset::QOFFSET_X + 4) as f64,
            h.f32(offset::QOFFSET_X + 8) as f64,
        ];
        return quaternion_affine([b, c, d], qoff, spacing, pixdim[0]);
    }
    diagonal_affine(spacing)
}

fn quaternion_affine(bcd: [f64; 3], qoffset: [f64; 3], spacing: [f64; 3], qfac: f64) -> Affine {
    let [mut b, mut c, mut d] = bcd;
    let sq = b * b + c * c + d * d;
    let a = if sq > 1.0 {
        let n = sq.sqrt();
        b /= n;
        c /= n;
        d /= n;
        0.0
    } else {
        (1.0 - sq).sqrt()
    };
    let qfac = if qfac < 0.0 { -1.0 } else { 1.0 };
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let scale = [spacing[0], spacing[1], spacing[2] * qfac];
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = r[i][j] * scale[j];
        }
        out[i][3] = qoffset[i];
    }
    out[3] = [0.0, 0.0, 0.0, 1.0];
    out
}

/// Datatype `write_volume` picks for a grid.
pub fn default_datatype(kind: ValueKind) -> Datatype {
    match kind {
        ValueKind::FloatIntensity => Datatype::Float32,
        ValueKind::IntegerLabel => Datatype::Uint8,
    }
}

/// Writes float-intensity grids as float32 and label grids as uint8.
/// Paths ending in `.gz` are gzip-compressed.
pub fn write_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    write_volume_as(grid, path, default_datatype(grid.kind))
}

pub fn write_volume_as(grid: &VoxelGrid, path: impl AsRef<Path>, datatype: Datatype) -> Result<()> {
    let path = path.as_ref();
    let raw = encode_volume(grid, datatype)?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    if gz {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&raw).map_err(io_err(path))?;
        enc.finish().map_err(io_err(path))?;
    } else {
        file.write_all(&raw).map_err(io_err(path))?;
    }
    Ok(())
}

/// Little-endian single-file NIfTI-1 bytes: header, 4-byte extension pad, payload.
pub fn encode_volume(grid: &VoxelGrid, datatype: Datatype) -> Result<Vec<u8>> {
    let n = grid.data.len();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + n * datatype.bytes_per_voxel()];
    {
        let h = &mut out[..HEADER_SIZE];
        LittleEndian::write_i32(&mut h[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
        let mut dim = [1i16; 8];
        dim[0] = 3;
        for (i, &d) in grid.dims.iter().enumerate() {
            dim[i + 1] = i16::try_from(d)
                .map_err(|_| VolumeError::InvalidGrid(format!("dimension {d} exceeds NIfTI-1 limit")))?;
        }
        for (i, &d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[offset::DIM + 2 * i..], d);
        }
        LittleEndian::write_i16(&mut h[offset::DATATYPE..], datatype.code());
        LittleEndian::write_i16(&mut h[offset::BITPIX..], 8 * datatype.bytes_per_voxel() as i16);
        let pixdim = [1.0, grid.spacing[0], grid.spacing[1], grid.spacing[2], 1.0, 1.0, 1.0, 1.0];
        for (i, &p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut h[offset::PIXDIM + 4 * i..], p as f32);
        }
        LittleEndian::write_f32(&mut h[offset::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
        LittleEndian::write_f32(&mut h[offset::SCL_SLOPE..], 1.0);
        LittleEndian::write_f32(&mut h[offset::SCL_INTER..], 0.0);
        h[offset::XYZT_UNITS] = 2; // mm
        LittleEndian::write_i16(&mut h[offset::QFORM_CODE..], 0);
        LittleEndian::write_i16(&mut h[offset::SFORM_CODE..], 1);
        for r in 0..3 {
            for c in 0..4 {
                LittleEndian::write_f32(&mut h[offset::SROW_X + 16 * r + 4 * c..], grid.affine[r][c] as f32);
            }
        }
        h[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
    }

    let payload = &mut out[DEFAULT_VOX_OFFSET..];
    match datatype {
        Datatype::Float32 => LittleEndian::write_f32_into(&grid.data, payload),
        Datatype::Uint8 => {
            for (dst, &v) in payload.iter_mut().zip(&grid.data) {
                *dst = integral(v, datatype, 0.0, 255.0)? as u8;
            }
        }
        Datatype::Int16 => {
            for (dst, &v) in payload.chunks_exact_mut(2).zip(&grid.data) {
                let x = integral(v, datatype, i16::MIN as f64, i16::MAX as f64)? as i16;
                LittleEndian::write_i16(dst, x);
            }
        }
    }
    Ok(out)
}

fn integral(v: f32, datatype: Datatype, lo: f64, hi: f64) -> Result<f64> {
    let x = v as f64;
    if !x.is_finite() || x.fract() != 0.0 {
        return Err(VolumeError::NotRepresentable { value: x, datatype });
    }
    if x < lo || x > hi {
        return Err(VolumeError::LabelOverflow { value: x, datatype });
    }
    Ok(x)
}
