//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segrobust::metrics::BinaryMask;
use segrobust::volume_io::{write_volume, ValueKind, VoxelGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn coords(dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    let [nx, ny, nz] = dims;
    (0..nz).flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| [x, y, z])))
}

pub fn random_bits(rng: &mut impl Rng, dims: [usize; 3], density: f64) -> Vec<bool> {
    (0..dims.iter().product::<usize>()).map(|_| rng.random_bool(density)).collect()
}

/// Union of a few random balls.
pub fn blob_bits(rng: &mut impl Rng, dims: [usize; 3], balls: usize) -> Vec<bool> {
    let centers: Vec<([f64; 3], f64)> = (0..balls)
        .map(|_| {
            let c = [0, 1, 2].map(|a| rng.random_range(0.0..dims[a] as f64));
            let r = rng.random_range(1.0..(dims[0].min(dims[1]).min(dims[2]) as f64 / 3.0).max(1.5));
            (c, r)
        })
        .collect();
    coords(dims)
        .map(|p| {
            centers.iter().any(|(c, r)| {
                (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum::<f64>() <= r * r
            })
        })
        .collect()
}

/// Flips each voxel with probability `p`.
pub fn perturb(rng: &mut impl Rng, bits: &[bool], p: f64) -> Vec<bool> {
    bits.iter().map(|&b| if rng.random_bool(p) { !b } else { b }).collect()
}

pub fn mask(dims: [usize; 3], spacing: [f64; 3], bits: Vec<bool>) -> BinaryMask {
    BinaryMask::with_spacing(dims, spacing, bits).unwrap()
}

// ---- oracles ---------------------------------------------------------------

pub fn oracle_dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

fn dist(p: [usize; 3], q: [usize; 3], spacing: [f64; 3]) -> f64 {
    (0..3).map(|a| ((p[a] as f64 - q[a] as f64) * spacing[a]).powi(2)).sum::<f64>().sqrt()
}

fn points(bits: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    coords(dims).zip(bits).filter(|(_, &b)| b).map(|(p, _)| p).collect()
}

/// Nearest true voxel for every voxel, by exhaustive search.
pub fn oracle_edt(bits: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let fg = points(bits, dims);
    coords(dims)
        .map(|p| fg.iter().map(|&q| dist(p, q, spacing)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Foreground voxels with at least one face neighbour that is background or
/// outside the grid.
pub fn oracle_surface(bits: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let at = |x: i64, y: i64, z: i64| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64 {
            return false;
        }
        bits[x as usize + dims[0] * (y as usize + dims[1] * z as usize)]
    };
    points(bits, dims)
        .into_iter()
        .filter(|p| {
            let (x, y, z) = (p[0] as i64, p[1] as i64, p[2] as i64);
            [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                .iter()
                .any(|(dx, dy, dz)| !at(x + dx, y + dy, z + dz))
        })
        .collect()
}

/// ceil(0.95·n)-th smallest value.
pub fn nearest_rank_95(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (95 * v.len()).div_ceil(100).max(1);
    v[rank - 1]
}

/// All-pairs surface distances, max of the two directed 95th percentiles.
pub fn oracle_hd95(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Option<f64> {
    if !a.iter().any(|&x| x) || !b.iter().any(|&x| x) {
        return None;
    }
    let sa = oracle_surface(a, dims);
    let sb = oracle_surface(b, dims);
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter().map(|&p| to.iter().map(|&q| dist(p, q, spacing)).fold(f64::INFINITY, f64::min)).collect()
    };
    Some(nearest_rank_95(directed(&sa, &sb)).max(nearest_rank_95(directed(&sb, &sa))))
}

/// Whether `d` is √(i²+j²+k²) for non-negative integers i, j, k.
pub fn is_grid_distance(d: f64) -> bool {
    let sq = (d * d).round() as i64;
    if (d - (sq as f64).sqrt()).abs() > 1e-9 {
        return false;
    }
    let lim = (sq as f64).sqrt() as i64 + 1;
    (0..=lim).any(|i| (i..=lim).any(|j| (j..=lim).any(|k| i * i + j * j + k * k == sq)))
}

// ---- synthetic cohorts -----------------------------------------------------

fn label_volume(dims: [usize; 3], center: [f64; 3], radii: [f64; 3]) -> Vec<f32> {
    coords(dims)
        .map(|p| {
            let r = (0..3).map(|a| (p[a] as f64 - center[a]).powi(2)).sum::<f64>().sqrt();
            if r <= radii[2] {
                1.0
            } else if r <= radii[1] {
                4.0
            } else if r <= radii[0] {
                2.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Nested-sphere BraTS label volume (edema shell, enhancing rim, necrotic core)
/// with seeded jitter of center and radii.
pub fn tumor_labels(rng: &mut impl Rng, dims: [usize; 3], jitter: f64) -> VoxelGrid {
    let base = dims.iter().copied().min().unwrap() as f64;
    let center = [0, 1, 2].map(|a| dims[a] as f64 / 2.0 + rng.random_range(-jitter..=jitter));
    let outer = base * 0.3 + rng.random_range(-jitter..=jitter);
    let radii = [outer, outer * 0.6, outer * 0.3];
    VoxelGrid::with_spacing(dims, [1.0; 3], label_volume(dims, center, radii), ValueKind::IntegerLabel).unwrap()
}

/// Prediction derived from a reference by shifting the whole tumor.
pub fn shifted_prediction(rng: &mut impl Rng, reference: &VoxelGrid, max_shift: i64) -> VoxelGrid {
    let d = reference.dims();
    let shift = [0, 1, 2].map(|_| rng.random_range(-max_shift..=max_shift));
    let src = reference.data();
    let data = coords(d)
        .map(|p| {
            let q = [0, 1, 2].map(|a| p[a] as i64 - shift[a]);
            if (0..3).all(|a| q[a] >= 0 && q[a] < d[a] as i64) {
                src[q[0] as usize + d[0] * (q[1] as usize + d[1] * q[2] as usize)]
            } else {
                0.0
            }
        })
        .collect();
    reference.with_data(data, ValueKind::IntegerLabel).unwrap()
}

/// Writes `n` patients as `.nii.gz` label pairs and returns the manifest path.
/// Two prediction sets are written so that `compare` has something to pair.
pub fn write_label_cohort(dir: &Path, n: usize, dims: [usize; 3], seed: u64) -> (PathBuf, PathBuf) {
    fs::create_dir_all(dir).unwrap();
    let mut r = rng(seed);
    let mut man_a = String::from("patient_id,pred_path,ref_path\n");
    let mut man_b = man_a.clone();
    for i in 0..n {
        let pid = format!("P{i:03}");
        let reference = tumor_labels(&mut r, dims, 2.0);
        let pa = shifted_prediction(&mut r, &reference, 1);
        let pb = shifted_prediction(&mut r, &reference, 2);
        write_volume(&reference, dir.join(format!("{pid}_ref.nii.gz"))).unwrap();
        write_volume(&pa, dir.join(format!("{pid}_a.nii.gz"))).unwrap();
        write_volume(&pb, dir.join(format!("{pid}_b.nii.gz"))).unwrap();
        let _ = writeln!(man_a, "{pid},{pid}_a.nii.gz,{pid}_ref.nii.gz");
        let _ = writeln!(man_b, "{pid},{pid}_b.nii.gz,{pid}_ref.nii.gz");
    }
    let a = dir.join("manifest_a.csv");
    let b = dir.join("manifest_b.csv");
    fs::write(&a, man_a).unwrap();
    fs::write(&b, man_b).unwrap();
    (a, b)
}

// ---- handcrafted NIfTI bytes -----------------------------------------------

/// Field-by-field NIfTI-1 writer used as an independent fixture source.
/// `payload` holds one value per voxel, encoded per `datatype` (2, 4 or 16).
pub fn handcrafted_nifti(big_endian: bool, dims: [i16; 3], pixdim: [f32; 3], datatype: i16, payload: &[f64]) -> Vec<u8> {
    fn put(buf: &mut [u8], at: usize, le: &[u8], big_endian: bool) {
        let mut b = le.to_vec();
        if big_endian {
            b.reverse();
        }
        buf[at..at + b.len()].copy_from_slice(&b);
    }
    let bpv = match datatype {
        2 => 1,
        4 => 2,
        16 => 4,
        _ => panic!("fixture datatype {datatype}"),
    };
    let mut buf = vec![0u8; 352 + payload.len() * bpv];
    put(&mut buf, 0, &348i32.to_le_bytes(), big_endian);
    let dim: [i16; 8] = [3, dims[0], dims[1], dims[2], 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(&mut buf, 40 + 2 * i, &d.to_le_bytes(), big_endian);
    }
    put(&mut buf, 70, &datatype.to_le_bytes(), big_endian);
    put(&mut buf, 72, &(8 * bpv as i16).to_le_bytes(), big_endian);
    let pd: [f32; 8] = [1.0, pixdim[0], pixdim[1], pixdim[2], 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pd.iter().enumerate() {
        put(&mut buf, 76 + 4 * i, &p.to_le_bytes(), big_endian);
    }
    put(&mut buf, 108, &352f32.to_le_bytes(), big_endian);
    put(&mut buf, 112, &1f32.to_le_bytes(), big_endian);
    put(&mut buf, 116, &0f32.to_le_bytes(), big_endian);
    buf[123] = 2;
    put(&mut buf, 254, &1i16.to_le_bytes(), big_endian);
    let srow: [[f32; 4]; 3] = [
        [pixdim[0], 0.0, 0.0, -10.0],
        [0.0, pixdim[1], 0.0, 20.5],
        [0.0, 0.0, pixdim[2], 3.25],
    ];
    for (r, row) in srow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            put(&mut buf, 280 + 16 * r + 4 * c, &v.to_le_bytes(), big_endian);
        }
    }
    buf[344..348].copy_from_slice(b"n+1\0");
    for (i, &v) in payload.iter().enumerate() {
        let at = 352 + i * bpv;
        match datatype {
            2 => buf[at] = v as u8,
            4 => put(&mut buf, at, &(v as i16).to_le_bytes(), big_endian),
            _ => put(&mut buf, at, &(v as f32).to_le_bytes(), big_endian),
        }
    }
    buf
}
