use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// A clean utterance plus noise scaled to a target SNR.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Waveform,
    pub scaled_noise: Waveform,
    /// First noise sample used.
    pub offset: usize,
    /// Amplitude factor applied to the noise segment.
    pub noise_gain: f64,
}

/// SNR in dB between two equal-length signals by mean squared amplitude.
pub fn snr_db(signal: &Waveform, noise: &Waveform) -> f64 {
    10.0 * (signal.power() / noise.power()).log10()
}

/// Adds a seed-selected segment of `noise`, scaled so that `10 log10(P_clean / P_noise) = snr_db`.
/// Powers are mean squares over the whole clean utterance. No clipping happens here.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Mixture> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::SampleRate(noise.sample_rate));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr {snr_db} dB")));
    }
    if noise.len() < clean.len() {
        return Err(Error::NoiseTooShort {
            needed: clean.len(),
            available: noise.len(),
        });
    }
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(Error::DegenerateSource("clean utterance is silent".into()));
    }
    let slack = noise.len() - clean.len();
    let offset = if slack == 0 {
        0
    } else {
        StdRng::seed_from_u64(seed).gen_range(0..=slack)
    };
    let segment = &noise.samples[offset..offset + clean.len()];
    let p_noise = segment.iter().map(|x| x * x).sum::<f64>() / segment.len() as f64;
    if p_noise == 0.0 {
        return Err(Error::DegenerateSource(format!(
            "noise segment at offset {offset} is silent"
        )));
    }
    let noise_gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = segment.iter().map(|x| x * noise_gain).collect();
    let noisy = clean
        .samples
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Ok(Mixture {
        noisy: Waveform {
            samples: noisy,
            sample_rate: clean.sample_rate,
        },
        scaled_noise: Waveform {
            samples: scaled,
            sample_rate: clean.sample_rate,
        },
        offset,
        noise_gain,
    })
}
