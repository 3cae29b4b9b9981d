use std::ops::Range;

use crate::volume_io::{check_geometry, compare_geometry, Affine, GridField, VoxelGrid};

use super::MetricError;

/// Boolean voxel set on a physical grid, stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Affine, bits: Vec<bool>) -> Result<Self, MetricError> {
        check_geometry(dims, spacing, &affine).map_err(|e| MetricError::InvalidMask(e.to_string()))?;
        if bits.len() != dims.iter().product::<usize>() {
            return Err(MetricError::InvalidMask(format!("{} bits for dims {dims:?}", bits.len())));
        }
        Ok(Self { dims, spacing, affine, bits })
    }

    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3], bits: Vec<bool>) -> Result<Self, MetricError> {
        Self::new(dims, spacing, crate::volume_io::diagonal_affine(spacing), bits)
    }

    /// Mask sharing the geometry of `grid`.
    pub fn like(grid: &VoxelGrid, bits: Vec<bool>) -> Result<Self, MetricError> {
        Self::new(grid.dims(), grid.spacing(), *grid.affine(), bits)
    }

    pub(crate) fn from_parts_unchecked(dims: [usize; 3], spacing: [f64; 3], affine: Affine, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), dims.iter().product::<usize>());
        Self { dims, spacing, affine, bits }
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Same geometry, bits replaced.
    pub fn with_bits(&self, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), self.bits.len());
        Self { bits, ..self.clone() }
    }

    /// Copies the mask to a grid with spacing multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let spacing = self.spacing.map(|s| s * factor);
        let mut affine = self.affine;
        for row in affine.iter_mut().take(3) {
            for v in row.iter_mut().take(3) {
                *v *= factor;
            }
        }
        Self { spacing, affine, ..self.clone() }
    }

    pub fn check_same_grid(&self, other: &BinaryMask) -> Result<(), MetricError> {
        match self.mismatch(other) {
            Some(f) => Err(MetricError::GridMismatch(f)),
            None => Ok(()),
        }
    }

    fn mismatch(&self, other: &BinaryMask) -> Option<GridField> {
        compare_geometry((self.dims, self.spacing, &self.affine), (other.dims, other.spacing, &other.affine))
    }

    /// Tight bounding box of the true voxels, per axis.
    pub fn bounding_box(&self) -> Option<[Range<usize>; 3]> {
        let [nx, ny, _] = self.dims;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            any = true;
        }
        any.then(|| [lo[0]..hi[0] + 1, lo[1]..hi[1] + 1, lo[2]..hi[2] + 1])
    }

    /// Extracts the sub-block `region` as a flat x-fastest array.
    pub(crate) fn crop(&self, region: &[Range<usize>; 3]) -> Vec<bool> {
        let [nx, ny, _] = self.dims;
        let mut out = Vec::with_capacity(region.iter().map(|r| r.len()).product());
        for z in region[2].clone() {
            for y in region[1].clone() {
                let row = nx * (y + ny * z);
                out.extend_from_slice(&self.bits[row + region[0].start..row + region[0].end]);
            }
        }
        out
    }
}

pub(crate) fn union_box(a: Option<[Range<usize>; 3]>, b: Option<[Range<usize>; 3]>) -> Option<[Range<usize>; 3]> {
    match (a, b) {
        (None, None) => None,
        (Some(r), None) | (None, Some(r)) => Some(r),
        (Some(a), Some(b)) => Some(std::array::from_fn(|i| a[i].start.min(b[i].start)..a[i].end.max(b[i].end))),
    }
}
