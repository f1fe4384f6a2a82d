//! Triangular mel filterbank on the HTK mel scale.

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// bands × bins matrix of triangle weights peaking at 1.0 on each band centre.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    pub band_count: usize,
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn new(
        band_count: usize,
        window_len: usize,
        sample_rate: u32,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if band_count == 0 || !(0.0..fmax).contains(&fmin) || fmax > nyquist {
            return Err(Error::Config(format!(
                "mel bank: {band_count} bands over [{fmin}, {fmax}] Hz at {sample_rate} Hz"
            )));
        }
        let bins = window_len / 2 + 1;
        let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..band_count + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (band_count + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / window_len as f64;

        let mut weights = Array2::<f64>::zeros((band_count, bins));
        for b in 0..band_count {
            let (left, centre, right) = (edges[b], edges[b + 1], edges[b + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > left && f <= centre {
                    (f - left) / (centre - left)
                } else if f > centre && f < right {
                    (right - f) / (right - centre)
                } else {
                    0.0
                };
                weights[[b, k]] = w;
            }
            if weights.row(b).iter().all(|&w| w == 0.0) {
                return Err(Error::Config(format!(
                    "mel band {b} covers no FFT bin; use fewer bands or a longer window"
                )));
            }
        }
        Ok(Self {
            weights,
            band_count,
            sample_rate,
            fmin,
            fmax,
        })
    }

    /// 40 bands spanning 0–8 kHz for a 512-point STFT at 16 kHz.
    pub fn standard() -> Self {
        Self::new(40, 512, 16_000, 0.0, 8000.0).expect("standard bank is valid")
    }

    pub fn bins(&self) -> usize {
        self.weights.ncols()
    }
}
