//! Label vocabularies and the label → binary-target algebra.
//!
//! Label-wise targets are single classes; region-wise targets are unions:
//! WT = NCR/NET ∪ ED ∪ ET, TC = NCR/NET ∪ ET, ET = ET.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::BinaryMask;
use crate::volume_io::VoxelGrid;

pub const NCR_NET: &str = "NCR/NET";
pub const ED: &str = "ED";
pub const ET: &str = "ET";
pub const NE: &str = "NE";
pub const CE: &str = "CE";

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label code {0} present in volume but absent from scheme")]
    UnknownLabel(i64),
    #[error("voxel value {0} is not an integer label")]
    NonIntegralLabel(f64),
    #[error("class {class:?} is not part of scheme {scheme:?}")]
    UnknownClass { class: String, scheme: String },
    #[error("unknown comparator {0:?} (expected \"hd-glio\")")]
    UnknownComparator(String),
    #[error("unknown encoding {0:?}")]
    UnknownEncoding(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("cannot read scheme file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scheme file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Class name → integer code. Code 0 is always background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub name: String,
    pub labels: BTreeMap<String, i64>,
}

impl LabelScheme {
    pub fn new(name: impl Into<String>, labels: BTreeMap<String, i64>) -> Result<Self, LabelError> {
        let scheme = Self { name: name.into(), labels };
        scheme.validate()?;
        Ok(scheme)
    }

    /// BraTS convention: NCR/NET = 1, ED = 2, ET = 4.
    pub fn brats() -> Self {
        let labels = [(NCR_NET, 1), (ED, 2), (ET, 4)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { name: "brats".into(), labels }
    }

    /// HD-GLIO export convention: NE = 1, CE = 2.
    pub fn hd_glio() -> Self {
        let labels = [(NE, 1), (CE, 2)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { name: "hd-glio".into(), labels }
    }

    pub fn from_json(text: &str) -> Result<Self, LabelError> {
        let scheme: Self = serde_json::from_str(text)?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if self.labels.is_empty() {
            return Err(LabelError::InvalidScheme("no labels".into()));
        }
        let mut seen = BTreeSet::new();
        for (class, &code) in &self.labels {
            if code <= 0 {
                return Err(LabelError::InvalidScheme(format!("code for {class:?} must be > 0, got {code}")));
            }
            if !seen.insert(code) {
                return Err(LabelError::InvalidScheme(format!("code {code} used twice")));
            }
        }
        Ok(())
    }

    pub fn code(&self, class: &str) -> Option<i64> {
        self.labels.get(class).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    LabelWise,
    RegionWise,
}

impl Encoding {
    pub fn parse(s: &str) -> Result<Self, LabelError> {
        match s {
            "label" | "label-wise" => Ok(Encoding::LabelWise),
            "region" | "region-wise" => Ok(Encoding::RegionWise),
            other => Err(LabelError::UnknownEncoding(other.into())),
        }
    }

    /// Built-in targets of the encoding, in reporting order.
    pub fn targets(self) -> Vec<TargetSpec> {
        match self {
            Encoding::LabelWise => label_wise_targets(),
            Encoding::RegionWise => region_wise_targets(),
        }
    }
}

/// A named binary target: the union of its member classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub members: BTreeSet<String>,
    pub encoding: Encoding,
}

impl TargetSpec {
    pub fn new<I, S>(name: impl Into<String>, members: I, encoding: Encoding) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let members: BTreeSet<String> = members.into_iter().map(Into::into).collect();
        if members.is_empty() {
            return Err(LabelError::InvalidTarget("member set is empty".into()));
        }
        Ok(Self { name: name.into(), members, encoding })
    }

    pub fn singleton(class: &str) -> Self {
        Self::new(class, [class], Encoding::LabelWise).expect("non-empty")
    }

    fn region(name: &str, members: &[&str]) -> Self {
        Self::new(name, members.iter().copied(), Encoding::RegionWise).expect("non-empty")
    }

    pub fn wt() -> Self {
        Self::region("WT", &[NCR_NET, ED, ET])
    }

    pub fn tc() -> Self {
        Self::region("TC", &[NCR_NET, ET])
    }

    pub fn et() -> Self {
        Self::region("ET", &[ET])
    }

    /// Checks every member class exists in `scheme`.
    pub fn check_against(&self, scheme: &LabelScheme) -> Result<(), LabelError> {
        match self.members.iter().find(|m| !scheme.labels.contains_key(*m)) {
            Some(m) => Err(LabelError::UnknownClass { class: m.clone(), scheme: scheme.name.clone() }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub fn region_wise_targets() -> Vec<TargetSpec> {
    vec![TargetSpec::wt(), TargetSpec::tc(), TargetSpec::et()]
}

pub fn label_wise_targets() -> Vec<TargetSpec> {
    vec![TargetSpec::singleton(NCR_NET), TargetSpec::singleton(ED), TargetSpec::singleton(ET)]
}

/// Per-code membership lookup with a dense table for small codes.
struct Membership {
    dense: [Option<bool>; 256],
    sparse: HashMap<i64, bool>,
}

impl Membership {
    fn new(spec: &TargetSpec, scheme: &LabelScheme) -> Self {
        let mut dense = [None; 256];
        let mut sparse = HashMap::new();
        dense[0] = Some(false);
        for (class, &code) in &scheme.labels {
            let member = spec.members.contains(class);
            match usize::try_from(code) {
                Ok(c) if c < 256 => dense[c] = Some(member),
                _ => {
                    sparse.insert(code, member);
                }
            }
        }
        Self { dense, sparse }
    }

    fn lookup(&self, value: f32) -> Result<bool, LabelError> {
        let v = value as f64;
        if !v.is_finite() || v.fract() != 0.0 {
            return Err(LabelError::NonIntegralLabel(v));
        }
        let code = v as i64;
        let hit = if (0..256).contains(&code) { self.dense[code as usize] } else { self.sparse.get(&code).copied() };
        hit.ok_or(LabelError::UnknownLabel(code))
    }
}

/// Voxel is true iff its code maps to one of `spec`'s member classes.
pub fn binarize(labels: &VoxelGrid, spec: &TargetSpec, scheme: &LabelScheme) -> Result<BinaryMask, LabelError> {
    spec.check_against(scheme)?;
    let table = Membership::new(spec, scheme);
    let bits = labels
        .data()
        .iter()
        .map(|&v| if v == 0.0 { Ok(false) } else { table.lookup(v) })
        .collect::<Result<Vec<bool>, _>>()?;
    Ok(BinaryMask::from_parts_unchecked(labels.dims(), labels.spacing(), *labels.affine(), bits))
}

/// Checks every voxel carries 0 or a code from `scheme`.
pub fn check_labels(labels: &VoxelGrid, scheme: &LabelScheme) -> Result<(), LabelError> {
    let any = TargetSpec::new("any", scheme.labels.keys().cloned(), Encoding::LabelWise)?;
    let table = Membership::new(&any, scheme);
    labels.data().iter().try_for_each(|&v| table.lookup(v).map(|_| ()))
}

/// Endpoint correspondences against an external comparator, as
/// (BraTS target, comparator target) pairs.
pub fn correspondence_pairs(mode: &str) -> Result<Vec<(TargetSpec, TargetSpec)>, LabelError> {
    match mode {
        "hd-glio" => Ok(vec![
            (TargetSpec::et(), TargetSpec::singleton(CE)),
            (TargetSpec::singleton(ED), TargetSpec::singleton(NE)),
            (TargetSpec::wt(), TargetSpec::new("NE+CE", [NE, CE], Encoding::RegionWise)?),
        ]),
        other => Err(LabelError::UnknownComparator(other.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume_io::ValueKind;
    use proptest::prelude::*;

    fn labels(values: Vec<f32>) -> VoxelGrid {
        let n = values.len();
        VoxelGrid::with_spacing([n, 1, 1], [1.0; 3], values, ValueKind::IntegerLabel).unwrap()
    }

    #[test]
    fn edema_in_wt_not_tc() {
        let g = labels(vec![2.0]);
        let s = LabelScheme::brats();
        assert_eq!(binarize(&g, &TargetSpec::wt(), &s).unwrap().bits(), &[true]);
        assert_eq!(binarize(&g, &TargetSpec::tc(), &s).unwrap().bits(), &[false]);
    }

    #[test]
    fn zero_volume_gives_empty_mask() {
        let g = labels(vec![0.0; 10]);
        for t in region_wise_targets().iter().chain(&label_wise_targets()) {
            assert!(binarize(&g, t, &LabelScheme::brats()).unwrap().is_empty());
        }
    }

    #[test]
    fn unknown_label_is_error() {
        let g = labels(vec![0.0, 3.0]);
        assert!(matches!(binarize(&g, &TargetSpec::wt(), &LabelScheme::brats()), Err(LabelError::UnknownLabel(3))));
        let g = labels(vec![1.5]);
        assert!(matches!(binarize(&g, &TargetSpec::wt(), &LabelScheme::brats()), Err(LabelError::NonIntegralLabel(_))));
        assert!(matches!(
            binarize(&labels(vec![0.0]), &TargetSpec::singleton(NE), &LabelScheme::brats()),
            Err(LabelError::UnknownClass { .. })
        ));
    }

    #[test]
    fn large_codes_use_sparse_table() {
        let scheme = LabelScheme::from_json(r#"{"name":"wide","labels":{"NCR/NET":300,"ED":2,"ET":1000}}"#).unwrap();
        let g = labels(vec![300.0, 2.0, 1000.0, 0.0]);
        assert_eq!(binarize(&g, &TargetSpec::tc(), &scheme).unwrap().bits(), &[true, false, true, false]);
    }

    #[test]
    fn scheme_validation() {
        assert!(LabelScheme::from_json(r#"{"name":"x","labels":{"A":1,"B":1}}"#).is_err());
        assert!(LabelScheme::from_json(r#"{"name":"x","labels":{"A":0}}"#).is_err());
        let s = LabelScheme::from_json(r#"{"name":"brats","labels":{"NCR/NET":1,"ED":2,"ET":4}}"#).unwrap();
        assert_eq!(s, LabelScheme::brats());
    }

    #[test]
    fn hd_glio_pairs() {
        let pairs = correspondence_pairs("hd-glio").unwrap();
        let names: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.name.as_str(), b.name.as_str())).collect();
        assert_eq!(names, vec![("ET", "CE"), ("ED", "NE"), ("WT", "NE+CE")]);
        assert_eq!(pairs[2].1.members, [NE, CE].iter().map(|s| s.to_string()).collect());
        assert!(matches!(correspondence_pairs("foo"), Err(LabelError::UnknownComparator(_))));
    }

    #[test]
    fn check_labels_flags_strays() {
        assert!(check_labels(&labels(vec![0.0, 1.0, 2.0, 4.0]), &LabelScheme::brats()).is_ok());
        assert!(check_labels(&labels(vec![5.0]), &LabelScheme::brats()).is_err());
    }

    fn brats_volume() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(prop::sample::select(vec![0.0f32, 1.0, 2.0, 4.0]), 1..200)
    }

    proptest! {
        #[test]
        fn nesting_and_partition(values in brats_volume()) {
            let g = labels(values);
            let s = LabelScheme::brats();
            let wt = binarize(&g, &TargetSpec::wt(), &s).unwrap();
            let tc = binarize(&g, &TargetSpec::tc(), &s).unwrap();
            let et = binarize(&g, &TargetSpec::et(), &s).unwrap();
            let parts: Vec<BinaryMask> = label_wise_targets().iter().map(|t| binarize(&g, t, &s).unwrap()).collect();
            for i in 0..g.len() {
                prop_assert!(!tc.bits()[i] || wt.bits()[i]);
                prop_assert!(!et.bits()[i] || tc.bits()[i]);
                let hits = parts.iter().filter(|m| m.bits()[i]).count();
                prop_assert!(hits <= 1);
                prop_assert_eq!(hits == 1, wt.bits()[i]);
            }
        }

        #[test]
        fn rebinarize_is_identity(values in brats_volume()) {
            let g = labels(values);
            let wt = binarize(&g, &TargetSpec::wt(), &LabelScheme::brats()).unwrap();
            let as_labels = g.with_data(wt.bits().iter().map(|&b| b as u8 as f32).collect(), ValueKind::IntegerLabel).unwrap();
            let unit = LabelScheme::from_json(r#"{"name":"unit","labels":{"X":1}}"#).unwrap();
            let again = binarize(&as_labels, &TargetSpec::singleton("X"), &unit).unwrap();
            prop_assert_eq!(again, wt);
        }
    }
}
