//! Deterministic synthetic speech-like and noise signals for demos and tests.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::audio::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

const SR: f64 = SAMPLE_RATE as f64;
/// Microphone self-noise present in every synthetic "clean" recording (about -80 dBFS).
const NOISE_FLOOR_RMS: f64 = 1e-4;

/// Harmonic syllables with gliding pitch and formant envelopes, fricative bursts and pauses.
pub fn speech_like(seed: u64, len: usize) -> Waveform {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut pos = rng.gen_range(0..(0.08 * SR) as usize);
    while pos < len {
        let dur = rng.gen_range((0.12 * SR) as usize..(0.30 * SR) as usize);
        let end = (pos + dur).min(len);
        if rng.gen_bool(0.2) {
            fricative(&mut rng, &mut out[pos..end]);
        } else {
            vowel(&mut rng, &mut out[pos..end]);
        }
        let gap = if rng.gen_bool(0.15) {
            rng.gen_range((0.2 * SR) as usize..(0.4 * SR) as usize)
        } else {
            rng.gen_range((0.03 * SR) as usize..(0.12 * SR) as usize)
        };
        pos = end + gap;
    }
    for x in out.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *x += NOISE_FLOOR_RMS * n;
    }
    Waveform {
        samples: out,
        sample_rate: SAMPLE_RATE,
    }
}

fn envelope(i: usize, n: usize) -> f64 {
    (PI * (i as f64 + 0.5) / n as f64).sin().powf(0.7)
}

fn vowel(rng: &mut StdRng, seg: &mut [f64]) {
    let n = seg.len();
    let f0_start: f64 = rng.gen_range(90.0..240.0);
    let f0_end = f0_start * rng.gen_range(0.8..1.25);
    let formants = [
        (rng.gen_range(300.0..900.0), 90.0, 1.0),
        (rng.gen_range(900.0..2500.0), 130.0, 0.6),
        (rng.gen_range(2300.0..3400.0), 200.0, 0.3),
    ];
    let level = rng.gen_range(0.05..0.15);
    let harmonics = (7000.0 / f0_start.max(f0_end)) as usize;
    let gains: Vec<f64> = (1..=harmonics)
        .map(|k| {
            let f = k as f64 * (f0_start + f0_end) / 2.0;
            let shaped: f64 = formants
                .iter()
                .map(|(fc, bw, a)| a * (-((f - fc) / bw).powi(2)).exp())
                .sum();
            (shaped + 0.02) / (k as f64).sqrt()
        })
        .collect();
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let mut phase = 0.0;
    for (i, x) in seg.iter_mut().enumerate() {
        let f0 = f0_start + (f0_end - f0_start) * i as f64 / n as f64;
        phase += 2.0 * PI * f0 / SR;
        let v: f64 = gains
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(k, (g, p))| g * ((k + 1) as f64 * phase + p).sin())
            .sum();
        *x += level * envelope(i, n) * v;
    }
}

fn fricative(rng: &mut StdRng, seg: &mut [f64]) {
    let n = seg.len();
    let level = rng.gen_range(0.01..0.04);
    let mut prev = 0.0;
    for (i, x) in seg.iter_mut().enumerate() {
        let w: f64 = rng.sample(StandardNormal);
        // first difference tilts the spectrum upward
        *x += level * envelope(i, n) * (w - 0.9 * prev);
        prev = w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    Pink,
    /// Mains-style harmonic hum over a pink floor.
    Hum,
    /// Several overlapping synthetic talkers.
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Hum, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Hum => "hum",
            NoiseKind::Babble => "babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise kind {s:?}")))
    }
}

pub fn noise(kind: NoiseKind, seed: u64, len: usize) -> Waveform {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let samples = match kind {
        NoiseKind::White => (0..len)
            .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        NoiseKind::Pink => pink(&mut rng, len, 0.1),
        NoiseKind::Hum => {
            let base = rng.gen_range(48.0..62.0);
            let amps: Vec<f64> = (1..=12).map(|k| 0.08 / k as f64 * rng.gen_range(0.5..1.5)).collect();
            let mut out = pink(&mut rng, len, 0.03);
            for (i, x) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let wobble = 1.0 + 0.002 * (2.0 * PI * 0.3 * t).sin();
                *x += amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * (2.0 * PI * base * (k + 1) as f64 * wobble * t).sin())
                    .sum::<f64>();
            }
            out
        }
        NoiseKind::Babble => {
            let talkers = 6;
            let mut out = vec![0.0; len];
            for t in 0..talkers {
                let shift = rng.gen_range(0..len.max(1));
                let voice = speech_like(seed.wrapping_mul(31).wrapping_add(1000 + t), len);
                for (i, x) in out.iter_mut().enumerate() {
                    *x += voice.samples[(i + shift) % len] / (talkers as f64).sqrt();
                }
            }
            out
        }
    };
    Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// Paul Kellet's economy pink filter on white noise.
fn pink(rng: &mut StdRng, len: usize, rms: f64) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let raw: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();
    let p = raw.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64;
    let k = if p > 0.0 { rms / p.sqrt() } else { 0.0 };
    raw.into_iter().map(|x| x * k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = speech_like(4, 16_000);
        assert_eq!(a, speech_like(4, 16_000));
        assert_ne!(a, speech_like(5, 16_000));
        assert!(a.samples.iter().all(|x| x.abs() < 1.0));
        assert!(a.power() > 1e-5);
        for kind in NoiseKind::ALL {
            let n = noise(kind, 1, 8000);
            assert_eq!(n, noise(kind, 1, 8000));
            assert!(n.power() > 0.0, "{kind}");
            assert!(n.samples.iter().all(|x| x.abs() < 1.0), "{kind}");
        }
    }
}
