use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::edt::squared_edt;
use super::mask::union_box;
use super::{BinaryMask, MetricError};
use crate::quantile;

/// How the two directed surface-distance sets combine into HD95.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hd95Convention {
    /// max(P95(A→B), P95(B→A))
    #[default]
    MaxDirected,
    /// P95 of the union of both directed sets
    Pooled,
}

/// Percentile definition applied to the surface distances of one patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PercentileMethod {
    /// ceil(0.95·n)-th smallest distance; always an attained distance
    #[default]
    NearestRank,
    /// interpolation at position (n-1)·0.95
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hd95Options {
    pub convention: Hd95Convention,
    pub percentile: PercentileMethod,
}

impl Hd95Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Hd95Convention::MaxDirected => "max-directed",
            Hd95Convention::Pooled => "pooled",
        }
    }
}

impl PercentileMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PercentileMethod::NearestRank => "nearest-rank",
            PercentileMethod::Linear => "linear",
        }
    }

    fn p95(self, values: &mut [f64]) -> f64 {
        match self {
            PercentileMethod::NearestRank => quantile::nearest_rank(values, 95),
            PercentileMethod::Linear => quantile::linear_select(values, 0.95),
        }
    }
}

impl fmt::Display for Hd95Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for PercentileMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hd95Convention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-directed" => Ok(Self::MaxDirected),
            "pooled" => Ok(Self::Pooled),
            _ => Err(format!("unknown HD95 convention {s:?}")),
        }
    }
}

impl FromStr for PercentileMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest-rank" => Ok(Self::NearestRank),
            "linear" => Ok(Self::Linear),
            _ => Err(format!("unknown percentile method {s:?}")),
        }
    }
}

/// Foreground voxels with at least one background or out-of-bounds 6-neighbour.
pub fn surface_voxels(mask: &BinaryMask) -> BinaryMask {
    mask.with_bits(surface_bits(mask.bits(), mask.dims()))
}

pub(crate) fn surface_bits(bits: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let slab = nx * ny;
    let mut out = vec![false; bits.len()];
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * y + slab * z;
            for x in 0..nx {
                let i = row + x;
                if !bits[i] {
                    continue;
                }
                out[i] = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !bits[i - 1]
                    || !bits[i + 1]
                    || !bits[i - nx]
                    || !bits[i + nx]
                    || !bits[i - slab]
                    || !bits[i + slab];
            }
        }
    }
    out
}

/// Distances from each surface voxel of one mask to the other's surface.
pub type DirectedDistances = (Vec<f64>, Vec<f64>);

/// Directed surface distances (mm): every surface voxel of `a` to the nearest
/// surface voxel of `b`, and the reverse. `None` when either mask is empty.
pub fn directed_surface_distances(
    a: &BinaryMask,
    b: &BinaryMask,
) -> Result<Option<DirectedDistances>, MetricError> {
    a.check_same_grid(b)?;
    let (Some(box_a), Some(box_b)) = (a.bounding_box(), b.bounding_box()) else {
        return Ok(None);
    };
    // distances between points inside the joint box only need the box
    let region = union_box(Some(box_a), Some(box_b)).unwrap();
    let dims = [region[0].len(), region[1].len(), region[2].len()];
    let surf_a = surface_bits(&a.crop(&region), dims);
    let surf_b = surface_bits(&b.crop(&region), dims);
    let spacing = a.spacing();
    let (to_b, to_a) = {
        #[cfg(feature = "parallel")]
        {
            rayon::join(|| squared_edt(&surf_b, dims, spacing), || squared_edt(&surf_a, dims, spacing))
        }
        #[cfg(not(feature = "parallel"))]
        {
            (squared_edt(&surf_b, dims, spacing), squared_edt(&surf_a, dims, spacing))
        }
    };
    let sample = |surf: &[bool], field: &[f64]| -> Vec<f64> {
        surf.iter().zip(field).filter(|(&s, _)| s).map(|(_, &d)| d.sqrt()).collect()
    };
    Ok(Some((sample(&surf_a, &to_b), sample(&surf_b, &to_a))))
}

/// 95th-percentile Hausdorff distance in mm; `None` when either mask is empty.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>, MetricError> {
    hd95_with(a, b, Hd95Options::default())
}

pub fn hd95_with(a: &BinaryMask, b: &BinaryMask, opts: Hd95Options) -> Result<Option<f64>, MetricError> {
    let Some((mut ab, mut ba)) = directed_surface_distances(a, b)? else {
        return Ok(None);
    };
    let value = match opts.convention {
        Hd95Convention::MaxDirected => opts.percentile.p95(&mut ab).max(opts.percentile.p95(&mut ba)),
        Hd95Convention::Pooled => {
            ab.extend_from_slice(&ba);
            opts.percentile.p95(&mut ab)
        }
    };
    Ok(Some(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(dims: [usize; 3], lo: [usize; 3], side: usize) -> BinaryMask {
        let mut bits = vec![false; dims.iter().product()];
        for z in lo[2]..lo[2] + side {
            for y in lo[1]..lo[1] + side {
                for x in lo[0]..lo[0] + side {
                    bits[x + dims[0] * (y + dims[1] * z)] = true;
                }
            }
        }
        BinaryMask::with_spacing(dims, [1.0; 3], bits).unwrap()
    }

    #[test]
    fn surface_counts() {
        assert_eq!(surface_voxels(&cube([3, 3, 3], [1, 1, 1], 1)).count(), 1);
        assert_eq!(surface_voxels(&cube([5, 5, 5], [1, 1, 1], 3)).count(), 26);
        // touching the border counts as surface
        assert_eq!(surface_voxels(&cube([3, 3, 3], [0, 0, 0], 3)).count(), 26);
        let empty = cube([3, 3, 3], [0, 0, 0], 0);
        assert!(surface_voxels(&empty).is_empty());
    }

    #[test]
    fn hd95_examples() {
        let a = cube([6, 6, 6], [1, 1, 1], 3);
        assert_eq!(hd95(&a, &a).unwrap(), Some(0.0));

        let p = cube([4, 4, 4], [0, 0, 0], 1);
        let q = cube([4, 4, 4], [1, 1, 0], 1);
        assert!((hd95(&p, &q).unwrap().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);

        let b = cube([6, 6, 6], [2, 1, 1], 3);
        assert_eq!(hd95(&a, &b).unwrap(), Some(1.0));

        let empty = cube([6, 6, 6], [0, 0, 0], 0);
        assert_eq!(hd95(&a, &empty).unwrap(), None);
        assert_eq!(hd95(&empty, &empty).unwrap(), None);
    }

    #[test]
    fn conventions_differ_on_skewed_sets() {
        // 1 far voxel among many near ones
        let dims = [30, 3, 3];
        let mut a = vec![false; 270];
        let mut b = vec![false; 270];
        for x in 0..20 {
            a[x + 30 * (1 + 3)] = true;
            b[x + 30 * (1 + 3)] = true;
        }
        b[29 + 30 * (1 + 3)] = true;
        let a = BinaryMask::with_spacing(dims, [1.0; 3], a).unwrap();
        let b = BinaryMask::with_spacing(dims, [1.0; 3], b).unwrap();
        let max_nr = hd95_with(&a, &b, Hd95Options::default()).unwrap().unwrap();
        let pooled = hd95_with(&a, &b, Hd95Options { convention: Hd95Convention::Pooled, ..Default::default() })
            .unwrap()
            .unwrap();
        let linear = hd95_with(&a, &b, Hd95Options { percentile: PercentileMethod::Linear, ..Default::default() })
            .unwrap()
            .unwrap();
        // B→A: 20 zeros and one 10.0; nearest-rank 95% of 21 is the 20th value
        assert_eq!(max_nr, 0.0);
        assert_eq!(pooled, 0.0);
        assert!((linear - 0.0).abs() < 1e-12);
        let b2 = b.with_bits({
            let mut bits = b.bits().to_vec();
            bits[28 + 30 * (1 + 3)] = true;
            bits
        });
        // B→A now 20 zeros, 9.0, 10.0
        let nr = hd95_with(&a, &b2, Hd95Options::default()).unwrap().unwrap();
        assert_eq!(nr, 9.0);
        let lin = hd95_with(&a, &b2, Hd95Options { percentile: PercentileMethod::Linear, ..Default::default() })
            .unwrap()
            .unwrap();
        assert!(lin > 0.0 && lin < 9.0);
    }

    #[test]
    fn grid_mismatch() {
        let a = cube([3, 3, 3], [0, 0, 0], 1);
        let b = cube([3, 3, 4], [0, 0, 0], 1);
        assert!(matches!(hd95(&a, &b), Err(MetricError::GridMismatch(_))));
    }

    #[test]
    fn option_strings_round_trip() {
        for c in [Hd95Convention::MaxDirected, Hd95Convention::Pooled] {
            assert_eq!(c.as_str().parse::<Hd95Convention>().unwrap(), c);
        }
        for m in [PercentileMethod::NearestRank, PercentileMethod::Linear] {
            assert_eq!(m.as_str().parse::<PercentileMethod>().unwrap(), m);
        }
    }
}
