//! Exact Euclidean distance transform via separable lower-envelope passes
//! over squared distances (Felzenszwalb & Huttenlocher), with per-axis
//! spacing so anisotropic grids come out in millimetres.

use super::{BinaryMask, MetricError};
use crate::par;

/// Per-voxel distance (mm) to the nearest true voxel center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }
}

pub fn euclidean_distance_transform(mask: &BinaryMask) -> Result<DistanceField, MetricError> {
    if mask.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let mut values = squared_edt(mask.bits(), mask.dims(), mask.spacing());
    values.iter_mut().for_each(|v| *v = v.sqrt());
    Ok(DistanceField { dims: mask.dims(), spacing: mask.spacing(), values })
}

/// Squared distances to the nearest true element of `bits`; `f64::INFINITY`
/// everywhere when `bits` has no true element.
pub(crate) fn squared_edt(bits: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    debug_assert_eq!(bits.len(), nx * ny * nz);
    let mut grid: Vec<f64> = bits.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    if grid.is_empty() {
        return grid;
    }
    let slab = nx * ny;

    // x: contiguous rows
    par::for_each_chunk_mut(&mut grid, slab, |_, plane| {
        let mut env = Envelope::with_capacity(nx);
        let mut out = vec![0.0; nx];
        for row in plane.chunks_mut(nx) {
            env.transform(row, spacing[0], &mut out);
            row.copy_from_slice(&out);
        }
    });

    // y: columns inside each z slab
    if ny > 1 {
        par::for_each_chunk_mut(&mut grid, slab, |_, plane| {
            let mut env = Envelope::with_capacity(ny);
            let mut line = vec![0.0; ny];
            let mut out = vec![0.0; ny];
            for x in 0..nx {
                for (y, v) in line.iter_mut().enumerate() {
                    *v = plane[x + nx * y];
                }
                env.transform(&line, spacing[1], &mut out);
                for (y, &v) in out.iter().enumerate() {
                    plane[x + nx * y] = v;
                }
            }
        });
    }

    // z: lines span every slab, so compute per y-row and scatter afterwards
    if nz > 1 {
        let rows = {
            let grid = &grid;
            par::map_range(ny, |y| {
                let mut env = Envelope::with_capacity(nz);
                let mut line = vec![0.0; nz];
                let mut out = vec![0.0; nx * nz];
                for x in 0..nx {
                    for (z, v) in line.iter_mut().enumerate() {
                        *v = grid[x + nx * y + slab * z];
                    }
                    env.transform(&line, spacing[2], &mut out[x * nz..(x + 1) * nz]);
                }
                out
            })
        };
        for (y, row) in rows.iter().enumerate() {
            for x in 0..nx {
                for z in 0..nz {
                    grid[x + nx * y + slab * z] = row[x * nz + z];
                }
            }
        }
    }
    grid
}

/// Scratch space for the 1D lower envelope of parabolas.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self { sites: Vec::with_capacity(n), bounds: Vec::with_capacity(n) }
    }

    /// out[p] = min_q ((p - q)·s)² + f[q] over finite f[q].
    fn transform(&mut self, f: &[f64], s: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if fq.is_infinite() {
                continue;
            }
            let pq = q as f64 * s;
            loop {
                let Some(&r) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let pr = r as f64 * s;
                let cross = ((fq + pq * pq) - (f[r] + pr * pr)) / (2.0 * (pq - pr));
                if cross <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(cross);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            out.iter_mut().for_each(|v| *v = f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (p, o) in out.iter_mut().enumerate() {
            let pp = p as f64 * s;
            while k + 1 < self.sites.len() && self.bounds[k + 1] < pp {
                k += 1;
            }
            let q = self.sites[k];
            let d = (p as f64 - q as f64) * s;
            *o = d * d + f[q];
        }
    }
}
