//! Time-frequency representations: STFT, mel filterbank and the four feature domains.

pub mod dump;
pub mod mel;
pub mod stft;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

pub use mel::MelFilterbank;
pub use stft::{istft, stft, stft_with_gain, ComplexSpectrogram};

pub const WINDOW_LEN: usize = 512;
pub const FRAME_HOP: usize = 256;
pub const MEL_BANDS: usize = 40;
/// Floor applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-8;
/// Waveforms are analysed at 16-bit integer amplitude, the scale fbank front-ends
/// conventionally see. This keeps log-compressed features of audible content positive.
pub const FEATURE_GAIN: f64 = 32768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "fft")]
    Fft,
    #[serde(rename = "log-fft")]
    LogFft,
    #[serde(rename = "fbank")]
    Fbank,
    #[serde(rename = "log-fbank")]
    LogFbank,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Fft, Domain::LogFft, Domain::Fbank, Domain::LogFbank];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Fft => "fft",
            Domain::LogFft => "log-fft",
            Domain::Fbank => "fbank",
            Domain::LogFbank => "log-fbank",
        }
    }

    pub fn is_log(self) -> bool {
        matches!(self, Domain::LogFft | Domain::LogFbank)
    }

    pub fn is_mel(self) -> bool {
        matches!(self, Domain::Fbank | Domain::LogFbank)
    }

    pub fn log_counterpart(self) -> Domain {
        match self {
            Domain::Fft | Domain::LogFft => Domain::LogFft,
            Domain::Fbank | Domain::LogFbank => Domain::LogFbank,
        }
    }

    pub fn linear_counterpart(self) -> Domain {
        match self {
            Domain::Fft | Domain::LogFft => Domain::Fft,
            Domain::Fbank | Domain::LogFbank => Domain::Fbank,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Domain::Fft => 0,
            Domain::LogFft => 1,
            Domain::Fbank => 2,
            Domain::LogFbank => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Domain::ALL
            .get(tag as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown domain tag {tag}")))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown domain {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMeta {
    pub frame_hop: usize,
    pub window_len: usize,
    pub sample_rate: u32,
    /// Present iff the domain is fbank or log-fbank.
    pub mel_bands: Option<usize>,
    /// Amplitude gain of the analysed waveform (see [`FEATURE_GAIN`]).
    pub scale: f64,
}

/// frames × dims real T-F representation tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub domain: Domain,
    pub meta: FeatureMeta,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self {
            values,
            domain: self.domain,
            meta: self.meta,
        }
    }

    pub(crate) fn expect_domain(&self, domain: Domain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::DomainMismatch {
                expected: domain.to_string(),
                found: self.domain.to_string(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_same_layout(&self, other: &FeatureMatrix) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain.to_string(),
                found: other.domain.to_string(),
            });
        }
        if self.values.dim() != other.values.dim() {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.values.dim(),
                other.values.dim()
            )));
        }
        Ok(())
    }
}

/// Elementwise modulus; tagged fft.
pub fn magnitude(spec: &ComplexSpectrogram) -> FeatureMatrix {
    FeatureMatrix {
        values: spec.values.mapv(|c| c.norm()),
        domain: Domain::Fft,
        meta: FeatureMeta {
            frame_hop: spec.frame_hop,
            window_len: spec.window_len,
            sample_rate: spec.sample_rate,
            mel_bands: None,
            scale: spec.scale,
        },
    }
}

pub fn apply_mel(f: &FeatureMatrix, bank: &MelFilterbank) -> Result<FeatureMatrix> {
    f.expect_domain(Domain::Fft)?;
    if f.dims() != bank.bins() {
        return Err(Error::shape(format!(
            "fft matrix has {} bins, filterbank expects {}",
            f.dims(),
            bank.bins()
        )));
    }
    Ok(FeatureMatrix {
        values: f.values.dot(&bank.weights.t()),
        domain: Domain::Fbank,
        meta: FeatureMeta {
            mel_bands: Some(bank.band_count),
            ..f.meta
        },
    })
}

pub fn to_log(f: &FeatureMatrix) -> Result<FeatureMatrix> {
    if f.domain.is_log() {
        return Err(Error::DomainMismatch {
            expected: "fft or fbank".into(),
            found: f.domain.to_string(),
        });
    }
    Ok(FeatureMatrix {
        values: f.values.mapv(|v| v.max(LOG_FLOOR).ln()),
        domain: f.domain.log_counterpart(),
        meta: f.meta,
    })
}

pub fn to_linear(f: &FeatureMatrix) -> Result<FeatureMatrix> {
    if !f.domain.is_log() {
        return Err(Error::DomainMismatch {
            expected: "log-fft or log-fbank".into(),
            found: f.domain.to_string(),
        });
    }
    Ok(FeatureMatrix {
        values: f.values.mapv(f64::exp),
        domain: f.domain.linear_counterpart(),
        meta: f.meta,
    })
}

/// Fixed analysis front-end: 512/256 square-root-Hann STFT at 16 kHz and a 40-band mel bank.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub window_len: usize,
    pub frame_hop: usize,
    pub gain: f64,
    pub bank: MelFilterbank,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            frame_hop: FRAME_HOP,
            gain: FEATURE_GAIN,
            bank: MelFilterbank::standard(),
        }
    }
}

impl FrontEnd {
    pub fn analyze(&self, w: &Waveform) -> Result<ComplexSpectrogram> {
        if w.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(w.sample_rate));
        }
        stft_with_gain(w, self.window_len, self.frame_hop, self.gain)
    }

    /// Features of an already analysed spectrogram in the requested domain.
    pub fn features_of(&self, spec: &ComplexSpectrogram, domain: Domain) -> Result<FeatureMatrix> {
        let mag = magnitude(spec);
        let linear = if domain.is_mel() {
            apply_mel(&mag, &self.bank)?
        } else {
            mag
        };
        if domain.is_log() {
            to_log(&linear)
        } else {
            Ok(linear)
        }
    }

    pub fn extract(&self, w: &Waveform, domain: Domain) -> Result<FeatureMatrix> {
        self.features_of(&self.analyze(w)?, domain)
    }

    /// Converts linear/log fft features to the requested domain along the feature path.
    pub fn convert(&self, f: &FeatureMatrix, domain: Domain) -> Result<FeatureMatrix> {
        if f.domain == domain {
            return Ok(f.clone());
        }
        if f.domain.is_mel() && !domain.is_mel() {
            return Err(Error::NotInvertible(format!(
                "cannot map {} features back to {}",
                f.domain, domain
            )));
        }
        let mut linear = if f.domain.is_log() { to_linear(f)? } else { f.clone() };
        if domain.is_mel() && !linear.domain.is_mel() {
            linear = apply_mel(&linear, &self.bank)?;
        }
        if domain.is_log() {
            to_log(&linear)
        } else {
            Ok(linear)
        }
    }
}
