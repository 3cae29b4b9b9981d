//! Per-patient, per-target segmentation metrics: Dice, HD95 over surface
//! voxels, and volumes in millilitres.

mod edt;
mod mask;
mod surface;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use edt::{euclidean_distance_transform, DistanceField};
pub use mask::BinaryMask;
pub use surface::{
    directed_surface_distances, hd95, hd95_with, surface_voxels, Hd95Convention, Hd95Options, PercentileMethod,
};

use crate::label_space::{binarize, LabelError, LabelScheme, TargetSpec};
use crate::volume_io::{validate_same_grid, GridField, VolumeError, VoxelGrid};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("grid mismatch at {0}")]
    GridMismatch(GridField),
    #[error("distance transform of an empty mask")]
    EmptyMask,
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

impl From<VolumeError> for MetricError {
    fn from(e: VolumeError) -> Self {
        match e {
            VolumeError::GridMismatch(f) => MetricError::GridMismatch(f),
            other => MetricError::InvalidMask(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emptiness {
    BothNonempty,
    PredEmpty,
    RefEmpty,
    BothEmpty,
}

impl Emptiness {
    pub fn of(pred: &BinaryMask, reference: &BinaryMask) -> Self {
        match (pred.is_empty(), reference.is_empty()) {
            (false, false) => Emptiness::BothNonempty,
            (true, false) => Emptiness::PredEmpty,
            (false, true) => Emptiness::RefEmpty,
            (true, true) => Emptiness::BothEmpty,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emptiness::BothNonempty => "both-nonempty",
            Emptiness::PredEmpty => "pred-empty",
            Emptiness::RefEmpty => "ref-empty",
            Emptiness::BothEmpty => "both-empty",
        }
    }
}

impl fmt::Display for Emptiness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of `records.csv`. DSC is stored as a fraction in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub patient_id: String,
    pub target: String,
    pub dsc: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub vol_pred_ml: f64,
    pub vol_ref_ml: f64,
    pub emptiness: Emptiness,
}

/// 2|A∩B| / (|A|+|B|). Two empty masks agree perfectly and score 1.0.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    a.check_same_grid(b)?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += x as usize;
        nb += y as usize;
        inter += (x & y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

pub fn volume_ml(mask: &BinaryMask) -> f64 {
    let voxel_mm3: f64 = mask.spacing().iter().product();
    mask.count() as f64 * voxel_mm3 / 1000.0
}

/// A reported target together with how to carve it out of the prediction and
/// the reference. The two sides differ only when comparing against a tool
/// with its own label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTarget {
    pub name: String,
    pub pred: TargetSpec,
    pub reference: TargetSpec,
}

impl EvalTarget {
    pub fn same(spec: &TargetSpec) -> Self {
        Self { name: spec.name.clone(), pred: spec.clone(), reference: spec.clone() }
    }
}

/// Metrics for one binarised target pair.
pub fn evaluate_masks(
    patient_id: &str,
    target: &str,
    pred: &BinaryMask,
    reference: &BinaryMask,
    opts: Hd95Options,
) -> Result<MetricRecord, MetricError> {
    let dsc = dice(pred, reference)?;
    let hd = hd95_with(pred, reference, opts)?;
    Ok(MetricRecord {
        patient_id: patient_id.to_string(),
        target: target.to_string(),
        dsc: Some(dsc),
        hd95_mm: hd,
        vol_pred_ml: volume_ml(pred),
        vol_ref_ml: volume_ml(reference),
        emptiness: Emptiness::of(pred, reference),
    })
}

/// One record per spec, in spec order.
pub fn evaluate_patient(
    patient_id: &str,
    pred: &VoxelGrid,
    reference: &VoxelGrid,
    specs: &[TargetSpec],
    scheme: &LabelScheme,
    opts: Hd95Options,
) -> Result<Vec<MetricRecord>, MetricError> {
    let targets: Vec<EvalTarget> = specs.iter().map(EvalTarget::same).collect();
    evaluate_targets(patient_id, pred, scheme, reference, scheme, &targets, opts)
}

/// Like [`evaluate_patient`], with separate label schemes for the two sides.
pub fn evaluate_targets(
    patient_id: &str,
    pred: &VoxelGrid,
    pred_scheme: &LabelScheme,
    reference: &VoxelGrid,
    ref_scheme: &LabelScheme,
    targets: &[EvalTarget],
    opts: Hd95Options,
) -> Result<Vec<MetricRecord>, MetricError> {
    validate_same_grid(&[pred, reference])?;
    // background-only margins change none of the metrics, so work on the
    // joint box of labelled voxels
    let region = mask::union_box(pred.nonzero_box(), reference.nonzero_box()).unwrap_or([0..1, 0..1, 0..1]);
    let pred = pred.crop(&region)?;
    let reference = reference.crop(&region)?;
    crate::par::map_slice(targets, |t| {
        let p = binarize(&pred, &t.pred, pred_scheme)?;
        let r = binarize(&reference, &t.reference, ref_scheme)?;
        evaluate_masks(patient_id, &t.name, &p, &r, opts)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_space::{region_wise_targets, TargetSpec};
    use crate::volume_io::ValueKind;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::with_spacing([bits.len(), 1, 1], [1.0; 3], bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = mask(&[1, 1, 1, 1, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &mask(&[0, 0, 0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&a, &mask(&[0, 0, 1, 1, 1, 1])).unwrap(), 0.5);
        let e = mask(&[0, 0]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(Emptiness::of(&e, &e), Emptiness::BothEmpty);
    }

    #[test]
    fn volume_examples() {
        let m = BinaryMask::with_spacing([10, 10, 10], [1.0; 3], vec![true; 1000]).unwrap();
        assert_eq!(volume_ml(&m), 1.0);
        let m = BinaryMask::with_spacing([10, 10, 5], [1.0, 1.0, 2.0], vec![true; 500]).unwrap();
        assert_eq!(volume_ml(&m), 1.0);
        assert_eq!(volume_ml(&mask(&[0, 0, 0])), 0.0);
    }

    fn labels(values: Vec<f32>, dims: [usize; 3]) -> VoxelGrid {
        VoxelGrid::with_spacing(dims, [1.0; 3], values, ValueKind::IntegerLabel).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let mut v = vec![0.0; 125];
        v[62] = 4.0;
        v[61] = 1.0;
        v[63] = 2.0;
        let g = labels(v, [5, 5, 5]);
        let recs = evaluate_patient("p", &g, &g, &region_wise_targets(), &LabelScheme::brats(), Default::default())
            .unwrap();
        assert_eq!(recs.iter().map(|r| r.target.as_str()).collect::<Vec<_>>(), ["WT", "TC", "ET"]);
        for r in recs {
            assert_eq!(r.dsc, Some(1.0));
            assert_eq!(r.hd95_mm, Some(0.0));
            assert_eq!(r.emptiness, Emptiness::BothNonempty);
        }
    }

    #[test]
    fn empty_prediction() {
        let mut v = vec![0.0; 27];
        v[13] = 2.0;
        let reference = labels(v, [3, 3, 3]);
        let pred = labels(vec![0.0; 27], [3, 3, 3]);
        let recs =
            evaluate_patient("p", &pred, &reference, &[TargetSpec::wt()], &LabelScheme::brats(), Default::default())
                .unwrap();
        assert_eq!(recs[0].dsc, Some(0.0));
        assert_eq!(recs[0].hd95_mm, None);
        assert_eq!(recs[0].emptiness, Emptiness::PredEmpty);
        assert_eq!(recs[0].vol_ref_ml, 0.001);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = labels(vec![0.0; 8], [2, 2, 2]);
        let b = labels(vec![0.0; 12], [2, 2, 3]);
        let err = evaluate_patient("p", &a, &b, &[TargetSpec::wt()], &LabelScheme::brats(), Default::default());
        assert!(matches!(err, Err(MetricError::GridMismatch(_))));
    }
}
