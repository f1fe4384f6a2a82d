//! Training targets for the eight (input domain, output domain, objective) methods.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::dsp::{Domain, FeatureMatrix, FrontEnd};
use crate::error::{Error, Result};
use crate::neural::HeadKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "masking")]
    Masking,
    #[serde(rename = "mapping")]
    Mapping,
    #[serde(rename = "signal-approximation")]
    SignalApproximation,
}

impl Objective {
    pub fn label(self) -> &'static str {
        match self {
            Objective::Masking => "masking",
            Objective::Mapping => "mapping",
            Objective::SignalApproximation => "SA",
        }
    }

    /// Masks are bounded in [0, 1]; clean-feature regression is strictly positive.
    pub fn head(self) -> HeadKind {
        match self {
            Objective::Masking | Objective::SignalApproximation => HeadKind::Sigmoid,
            Objective::Mapping => HeadKind::Softplus,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Objective::Masking => 0,
            Objective::Mapping => 1,
            Objective::SignalApproximation => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Objective::Masking),
            1 => Ok(Objective::Mapping),
            2 => Ok(Objective::SignalApproximation),
            _ => Err(Error::Format(format!("unknown objective tag {tag}"))),
        }
    }
}

/// One of the eight supported method rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodConfig {
    pub input_domain: Domain,
    pub output_domain: Domain,
    pub objective: Objective,
}

impl MethodConfig {
    pub const ALL: [MethodConfig; 8] = [
        MethodConfig::row(Domain::LogFbank, Domain::LogFbank, Objective::Mapping),
        MethodConfig::row(Domain::LogFbank, Domain::LogFbank, Objective::SignalApproximation),
        MethodConfig::row(Domain::LogFbank, Domain::LogFbank, Objective::Masking),
        MethodConfig::row(Domain::LogFft, Domain::LogFft, Objective::Mapping),
        MethodConfig::row(Domain::LogFft, Domain::LogFft, Objective::SignalApproximation),
        MethodConfig::row(Domain::LogFft, Domain::LogFft, Objective::Masking),
        MethodConfig::row(Domain::LogFbank, Domain::Fbank, Objective::Masking),
        MethodConfig::row(Domain::LogFft, Domain::Fft, Objective::Masking),
    ];

    const fn row(input_domain: Domain, output_domain: Domain, objective: Objective) -> Self {
        Self {
            input_domain,
            output_domain,
            objective,
        }
    }

    /// Validates the triple against the method table.
    pub fn new(input_domain: Domain, output_domain: Domain, objective: Objective) -> Result<Self> {
        let cfg = Self::row(input_domain, output_domain, objective);
        if Self::ALL.contains(&cfg) {
            Ok(cfg)
        } else {
            Err(Error::InvalidMethod(format!(
                "({input_domain} input, {output_domain} output, {}) is not a supported method; valid methods: {}",
                objective.label(),
                Self::valid_names()
            )))
        }
    }

    pub fn name(&self) -> String {
        format!("{} {}", self.output_domain, self.objective.label())
    }

    pub fn head(&self) -> HeadKind {
        self.objective.head()
    }

    pub fn valid_names() -> String {
        Self::ALL
            .iter()
            .map(|m| format!("\"{}\"", m.name()))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MethodConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == wanted)
            .ok_or_else(|| {
                Error::InvalidMethod(format!(
                    "unknown method {s:?}; valid methods: {}",
                    Self::valid_names()
                ))
            })
    }
}

impl Serialize for MethodConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for MethodConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Network input, supervised target and the noisy output-domain features one utterance yields.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    /// Noisy features in the input domain (not yet normalized).
    pub input: FeatureMatrix,
    /// Clipped direct mask for masking; clean output-domain features otherwise.
    pub target: FeatureMatrix,
    /// Noisy features in the output domain (the multiplicand of signal approximation).
    pub noisy_output: FeatureMatrix,
    pub config: MethodConfig,
}

/// `clip(clean / noisy, 0, 1)` elementwise. A zero denominator yields 0 when the
/// clean value is also 0, otherwise 1.
pub fn direct_mask(clean: &FeatureMatrix, noisy: &FeatureMatrix) -> Result<FeatureMatrix> {
    clean.expect_same_layout(noisy)?;
    let mut values = clean.values.clone();
    values.zip_mut_with(&noisy.values, |c, &n| *c = mask_cell(*c, n));
    Ok(clean.with_values(values))
}

#[inline]
fn mask_cell(clean: f64, noisy: f64) -> f64 {
    if noisy == 0.0 {
        if clean == 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (clean / noisy).clamp(0.0, 1.0)
    }
}

pub fn build_training_pair(
    clean_wav: &Waveform,
    noisy_wav: &Waveform,
    config: &MethodConfig,
) -> Result<TrainingPair> {
    build_training_pair_with(&FrontEnd::default(), clean_wav, noisy_wav, config)
}

pub fn build_training_pair_with(
    frontend: &FrontEnd,
    clean_wav: &Waveform,
    noisy_wav: &Waveform,
    config: &MethodConfig,
) -> Result<TrainingPair> {
    if clean_wav.len() != noisy_wav.len() {
        return Err(Error::shape(format!(
            "clean has {} samples, noisy has {}",
            clean_wav.len(),
            noisy_wav.len()
        )));
    }
    let config = MethodConfig::new(config.input_domain, config.output_domain, config.objective)?;
    let noisy_spec = frontend.analyze(noisy_wav)?;
    let clean_spec = frontend.analyze(clean_wav)?;
    let input = frontend.features_of(&noisy_spec, config.input_domain)?;
    let noisy_output = frontend.features_of(&noisy_spec, config.output_domain)?;
    let clean_output = frontend.features_of(&clean_spec, config.output_domain)?;
    let target = match config.objective {
        Objective::Masking => direct_mask(&clean_output, &noisy_output)?,
        Objective::Mapping | Objective::SignalApproximation => clean_output,
    };
    Ok(TrainingPair {
        input,
        target,
        noisy_output,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureMeta;
    use ndarray::{array, Array2};

    fn fm(values: Array2<f64>, domain: Domain) -> FeatureMatrix {
        FeatureMatrix {
            values,
            domain,
            meta: FeatureMeta {
                frame_hop: 256,
                window_len: 512,
                sample_rate: 16_000,
                mel_bands: None,
                scale: 1.0,
            },
        }
    }

    #[test]
    fn mask_cases() {
        let clean = fm(array![[2.0, 0.0, 3.0, 0.0, 5.0, -1.0]], Domain::Fft);
        let noisy = fm(array![[2.0, 4.0, 2.0, 0.0, 0.0, 2.0]], Domain::Fft);
        let m = direct_mask(&clean, &noisy).unwrap();
        assert_eq!(m.values, array![[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]]);
        assert_eq!(m.domain, Domain::Fft);
    }

    #[test]
    fn mask_mismatch_errors() {
        let a = fm(Array2::ones((2, 3)), Domain::Fft);
        let b = fm(Array2::ones((2, 4)), Domain::Fft);
        let c = fm(Array2::ones((2, 3)), Domain::LogFft);
        assert!(direct_mask(&a, &b).is_err());
        assert!(direct_mask(&a, &c).is_err());
    }

    #[test]
    fn method_table() {
        assert_eq!(MethodConfig::ALL.len(), 8);
        for m in MethodConfig::ALL {
            assert_eq!(m.name().parse::<MethodConfig>().unwrap(), m);
            assert_eq!(m.input_domain.is_mel(), m.output_domain.is_mel());
        }
        assert!("log-fbank masking".parse::<MethodConfig>().is_ok());
        let err = "fbank mapping".parse::<MethodConfig>().unwrap_err();
        assert!(err.to_string().contains("log-fbank masking"));
        assert!(MethodConfig::new(Domain::LogFbank, Domain::Fbank, Objective::Mapping).is_err());
        assert!(MethodConfig::new(Domain::LogFft, Domain::LogFbank, Objective::Masking).is_err());
        assert!(MethodConfig::new(Domain::Fft, Domain::Fft, Objective::Masking).is_err());
    }

    #[test]
    fn heads_follow_objective() {
        for m in MethodConfig::ALL {
            let expected = if m.objective == Objective::Mapping {
                HeadKind::Softplus
            } else {
                HeadKind::Sigmoid
            };
            assert_eq!(m.head(), expected);
        }
    }
}
