//! Inference scenarios and the targeted training-time channel dropout.
//!
//! A dropped channel is replaced by exactly 0.0 everywhere; its geometry is
//! kept. The drop decision for a sample is a pure function of
//! `(seed, sample_index, rate)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::volume_io::{Channel, Study, ValueKind, VoxelGrid};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("study {patient} has no {channel} channel")]
    MissingChannel { patient: String, channel: Channel },
    #[error("dropout rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub rate: f64,
    pub channel: Channel,
    pub seed: u64,
}

impl DropoutConfig {
    pub fn new(rate: f64, seed: u64) -> Result<Self, ScenarioError> {
        let cfg = Self { rate, channel: Channel::Flair, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(ScenarioError::InvalidRate(self.rate));
        }
        Ok(())
    }

    /// Whether sample `index` has its channel dropped.
    pub fn drops(&self, sample_index: u64) -> bool {
        rng::uniform(self.seed, rng::DOMAIN_DROPOUT, sample_index) < self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FlairPresent,
    FlairAbsent,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::FlairPresent => "flair-present",
            Scenario::FlairAbsent => "flair-absent",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flair-present" => Ok(Scenario::FlairPresent),
            "flair-absent" => Ok(Scenario::FlairAbsent),
            _ => Err(format!("unknown scenario {s:?}")),
        }
    }
}

fn missing(study: &Study, channel: Channel) -> ScenarioError {
    ScenarioError::MissingChannel { patient: study.patient_id().to_string(), channel }
}

/// Copy of `study` with `channel` replaced by zeros.
pub fn zero_fill(study: &Study, channel: Channel) -> Result<Study, ScenarioError> {
    if study.channel(channel).is_none() {
        return Err(missing(study, channel));
    }
    let mut out = study.clone();
    let grid = out.channels_mut().get_mut(&channel).expect("checked above");
    grid.data_mut().iter_mut().for_each(|v| *v = 0.0);
    Ok(out)
}

pub fn sample_dropout(study: &Study, cfg: &DropoutConfig, sample_index: u64) -> Result<(Study, bool), ScenarioError> {
    cfg.validate()?;
    if study.channel(cfg.channel).is_none() {
        return Err(missing(study, cfg.channel));
    }
    if cfg.drops(sample_index) {
        Ok((zero_fill(study, cfg.channel)?, true))
    } else {
        Ok((study.clone(), false))
    }
}

/// `FlairPresent` is the identity on a complete study. `FlairAbsent` zeroes
/// FLAIR, synthesising an all-zero grid when the study has none.
pub fn apply_scenario(study: &Study, scenario: Scenario) -> Result<Study, ScenarioError> {
    let required: &[Channel] = match scenario {
        Scenario::FlairPresent => &Channel::ALL,
        Scenario::FlairAbsent => &[Channel::T1, Channel::T1ce, Channel::T2],
    };
    if let Some(&c) = required.iter().find(|&&c| study.channel(c).is_none()) {
        return Err(missing(study, c));
    }
    match scenario {
        Scenario::FlairPresent => Ok(study.clone()),
        Scenario::FlairAbsent if study.channel(Channel::Flair).is_some() => zero_fill(study, Channel::Flair),
        Scenario::FlairAbsent => {
            let template = study.channel(Channel::T1).expect("checked above");
            let mut channels = study.channels().clone();
            channels.insert(Channel::Flair, zero_like(template));
            Ok(Study::new(study.patient_id(), channels, study.reference().cloned())
                .expect("synthesised FLAIR shares the T1 grid"))
        }
    }
}

fn zero_like(template: &VoxelGrid) -> VoxelGrid {
    template.with_data(vec![0.0; template.len()], ValueKind::FloatIntensity).expect("same geometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn study(with_flair: bool, flair_value: f32) -> Study {
        let mut ch = BTreeMap::new();
        for (i, c) in Channel::ALL.into_iter().enumerate() {
            if c == Channel::Flair && !with_flair {
                continue;
            }
            let v = if c == Channel::Flair { flair_value } else { i as f32 + 0.5 };
            let data = (0..27).map(|k| v + k as f32).collect();
            ch.insert(c, VoxelGrid::with_spacing([3, 3, 3], [1.0; 3], data, ValueKind::FloatIntensity).unwrap());
        }
        Study::new("p1", ch, None).unwrap()
    }

    #[test]
    fn zero_fill_only_touches_flair() {
        let s = study(true, 3.0);
        let z = zero_fill(&s, Channel::Flair).unwrap();
        assert!(z.channel(Channel::Flair).unwrap().data().iter().all(|&v| v == 0.0));
        for c in [Channel::T1, Channel::T1ce, Channel::T2] {
            assert_eq!(z.channel(c), s.channel(c));
        }
        assert_eq!(z.channel(Channel::Flair).unwrap().affine(), s.channel(Channel::Flair).unwrap().affine());
        assert_eq!(zero_fill(&z, Channel::Flair).unwrap(), z);
    }

    #[test]
    fn zero_fill_missing_channel() {
        let s = study(false, 0.0);
        assert!(matches!(zero_fill(&s, Channel::Flair), Err(ScenarioError::MissingChannel { .. })));
    }

    #[test]
    fn degenerate_rates() {
        let s = study(true, 3.0);
        for i in 0..50 {
            let cfg0 = DropoutConfig::new(0.0, i).unwrap();
            assert_eq!(sample_dropout(&s, &cfg0, i * 7).unwrap(), (s.clone(), false));
            let cfg1 = DropoutConfig::new(1.0, i).unwrap();
            let (out, dropped) = sample_dropout(&s, &cfg1, i * 7).unwrap();
            assert!(dropped);
            assert_eq!(out, zero_fill(&s, Channel::Flair).unwrap());
        }
        assert!(DropoutConfig::new(1.5, 0).is_err());
        assert!(DropoutConfig::new(-0.1, 0).is_err());
    }

    #[test]
    fn empirical_rate() {
        for rate in [0.1, 0.2, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
            let cfg = DropoutConfig::new(rate, 1234).unwrap();
            let dropped = (0..10_000u64).filter(|&i| cfg.drops(i)).count();
            let frac = dropped as f64 / 10_000.0;
            assert!((frac - rate).abs() <= 0.015, "rate {rate}: {frac}");
        }
    }

    #[test]
    fn decisions_independent_of_order() {
        let cfg = DropoutConfig::new(0.35, 99).unwrap();
        let forward: Vec<bool> = (0..500).map(|i| cfg.drops(i)).collect();
        let backward: Vec<bool> = (0..500).rev().map(|i| cfg.drops(i)).collect::<Vec<_>>().into_iter().rev().collect();
        assert_eq!(forward, backward);
        let parallel = crate::par::map_range(500, |i| cfg.drops(i as u64));
        assert_eq!(forward, parallel);
    }

    #[test]
    fn scenarios() {
        let s = study(true, 3.0);
        assert_eq!(apply_scenario(&s, Scenario::FlairPresent).unwrap(), s);
        assert_eq!(apply_scenario(&s, Scenario::FlairAbsent).unwrap(), zero_fill(&s, Channel::Flair).unwrap());

        let three = study(false, 0.0);
        let out = apply_scenario(&three, Scenario::FlairAbsent).unwrap();
        assert_eq!(out.channels().len(), 4);
        assert!(out.channel(Channel::Flair).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            apply_scenario(&three, Scenario::FlairPresent),
            Err(ScenarioError::MissingChannel { channel: Channel::Flair, .. })
        ));

        let mut ch = s.channels().clone();
        ch.remove(&Channel::T2);
        let no_t2 = Study::new("p2", ch, None).unwrap();
        assert!(matches!(
            apply_scenario(&no_t2, Scenario::FlairAbsent),
            Err(ScenarioError::MissingChannel { channel: Channel::T2, .. })
        ));
    }
}
