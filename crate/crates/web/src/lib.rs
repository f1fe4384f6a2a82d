//! Browser demo: synthetic mixtures, oracle masks per method and an oracle SI-SDR curve.
//!
//! [`Demo`] is plain Rust and testable natively; [`WebDemo`] wraps it for JavaScript.

use wasm_bindgen::prelude::*;

use sepf::enhancement::resynthesize;
use sepf::evaluation::{feature_mse, si_sdr};
use sepf::synth::{noise, speech_like, NoiseKind};
use sepf::targets::direct_mask;
use sepf::training::{mix_at_snr, snr_db};
use sepf::{Domain, FeatureMatrix, FrontEnd, MethodConfig, Waveform};

/// Floor for the dB spectrogram view.
pub const VIEW_FLOOR_DB: f64 = -100.0;

/// Oracle masking outcome for one method.
#[derive(Debug, Clone)]
pub struct OracleView {
    pub mask: FeatureMatrix,
    pub noisy_mse: f64,
    pub oracle_mse: f64,
}

pub struct Demo {
    frontend: FrontEnd,
    clean: Waveform,
    noise: Waveform,
    noisy: Waveform,
    seed: u64,
    snr_db: f64,
}

impl Demo {
    pub fn new(seed: u64, seconds: f64, noise_kind: &str) -> sepf::Result<Self> {
        if !(0.1..=10.0).contains(&seconds) {
            return Err(sepf::Error::Config(format!("duration {seconds} s outside 0.1..10 s")));
        }
        let kind: NoiseKind = noise_kind.parse()?;
        let len = (seconds * sepf::audio::SAMPLE_RATE as f64).round() as usize;
        let clean = speech_like(seed, len);
        let noise = noise(kind, seed.wrapping_add(1), 2 * len);
        let noisy = mix_at_snr(&clean, &noise, 0.0, seed)?.noisy;
        Ok(Self {
            frontend: FrontEnd::default(),
            clean,
            noise,
            noisy,
            seed,
            snr_db: 0.0,
        })
    }

    /// Remixes at `snr` dB and returns the SNR measured on the result.
    pub fn set_snr(&mut self, snr: f64) -> sepf::Result<f64> {
        let m = mix_at_snr(&self.clean, &self.noise, snr, self.seed)?;
        self.noisy = m.noisy;
        self.snr_db = snr;
        Ok(snr_db(&self.clean, &m.scaled_noise))
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn noisy(&self) -> &Waveform {
        &self.noisy
    }

    pub fn clean(&self) -> &Waveform {
        &self.clean
    }

    /// Magnitude spectrogram in dB relative to full scale, frames x 257.
    pub fn spectrogram_db(&self, which: &str) -> sepf::Result<FeatureMatrix> {
        let w = match which {
            "clean" => &self.clean,
            "noisy" => &self.noisy,
            other => return Err(sepf::Error::Config(format!("unknown signal {other:?}"))),
        };
        let mag = self.frontend.extract(w, Domain::Fft)?;
        // bin-centred full-scale sine: half the window sum, N / pi for sqrt-Hann
        let gain = self.frontend.gain * self.frontend.window_len as f64 / std::f64::consts::PI;
        Ok(mag.with_values(mag.values.mapv(|m| {
            if m > 0.0 {
                (20.0 * (m / gain).log10()).max(VIEW_FLOOR_DB)
            } else {
                VIEW_FLOOR_DB
            }
        })))
    }

    /// Ideal mask for `method` in its output domain, with the feature error of the
    /// noisy input and of the masked input against clean.
    pub fn oracle(&self, method: &str) -> sepf::Result<OracleView> {
        let method: MethodConfig = method.parse()?;
        let d = method.output_domain;
        let clean = self.frontend.extract(&self.clean, d)?;
        let noisy = self.frontend.extract(&self.noisy, d)?;
        let mask = direct_mask(&clean, &noisy)?;
        let estimate = noisy.with_values(&noisy.values * &mask.values);
        Ok(OracleView {
            noisy_mse: feature_mse(&noisy, &clean)?,
            oracle_mse: feature_mse(&estimate, &clean)?,
            mask,
        })
    }

    /// Noisy-phase resynthesis of the oracle fft mask at the current SNR.
    pub fn oracle_waveform(&self) -> sepf::Result<Waveform> {
        let spec = self.frontend.analyze(&self.noisy)?;
        let clean = self.frontend.extract(&self.clean, Domain::Fft)?;
        let noisy = self.frontend.features_of(&spec, Domain::Fft)?;
        let mask = direct_mask(&clean, &noisy)?;
        let estimate = noisy.with_values(&noisy.values * &mask.values);
        resynthesize(&estimate, &spec, self.noisy.len())
    }

    /// `(noisy, oracle)` SI-SDR in dB for each input SNR. The current mixture is kept.
    pub fn si_sdr_curve(&self, snrs: &[f64]) -> sepf::Result<Vec<(f64, f64)>> {
        let mut probe = Demo {
            frontend: self.frontend.clone(),
            clean: self.clean.clone(),
            noise: self.noise.clone(),
            noisy: self.noisy.clone(),
            seed: self.seed,
            snr_db: self.snr_db,
        };
        snrs.iter()
            .map(|&s| {
                probe.set_snr(s)?;
                let oracle = probe.oracle_waveform()?;
                Ok((si_sdr(&probe.noisy, &probe.clean)?, si_sdr(&oracle, &probe.clean)?))
            })
            .collect()
    }
}

fn js_err(e: sepf::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flat(f: &FeatureMatrix) -> Vec<f32> {
    f.values.iter().map(|&v| v as f32).collect()
}

/// Row-major frames x dims grid handed to the page for drawing.
#[wasm_bindgen]
pub struct Grid {
    values: Vec<f32>,
    pub frames: usize,
    pub dims: usize,
}

#[wasm_bindgen]
impl Grid {
    pub fn values(&self) -> Vec<f32> {
        self.values.clone()
    }
}

#[wasm_bindgen]
pub struct MaskResult {
    grid: Grid,
    pub noisy_mse: f64,
    pub oracle_mse: f64,
}

#[wasm_bindgen]
impl MaskResult {
    pub fn values(&self) -> Vec<f32> {
        self.grid.values()
    }

    #[wasm_bindgen(getter)]
    pub fn frames(&self) -> usize {
        self.grid.frames
    }

    #[wasm_bindgen(getter)]
    pub fn dims(&self) -> usize {
        self.grid.dims
    }
}

#[wasm_bindgen]
pub struct WebDemo(Demo);

#[wasm_bindgen]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, seconds: f64, noise_kind: &str) -> Result<WebDemo, JsError> {
        Demo::new(seed as u64, seconds, noise_kind).map(WebDemo).map_err(js_err)
    }

    /// Remixes and returns the measured SNR.
    pub fn mix(&mut self, snr_db: f64) -> Result<f64, JsError> {
        self.0.set_snr(snr_db).map_err(js_err)
    }

    pub fn spectrogram(&self, which: &str) -> Result<Grid, JsError> {
        let s = self.0.spectrogram_db(which).map_err(js_err)?;
        Ok(Grid {
            values: flat(&s),
            frames: s.frames(),
            dims: s.dims(),
        })
    }

    pub fn oracle_mask(&self, method: &str) -> Result<MaskResult, JsError> {
        let v = self.0.oracle(method).map_err(js_err)?;
        Ok(MaskResult {
            grid: Grid {
                values: flat(&v.mask),
                frames: v.mask.frames(),
                dims: v.mask.dims(),
            },
            noisy_mse: v.noisy_mse,
            oracle_mse: v.oracle_mse,
        })
    }

    /// Flattened `[noisy0, oracle0, noisy1, oracle1, ...]`.
    pub fn si_sdr_curve(&self, snrs: Vec<f64>) -> Result<Vec<f64>, JsError> {
        let pairs = self.0.si_sdr_curve(&snrs).map_err(js_err)?;
        Ok(pairs.into_iter().flat_map(|(a, b)| [a, b]).collect())
    }

    /// Samples for Web Audio playback: "clean", "noisy" or "oracle".
    pub fn samples(&self, which: &str) -> Result<Vec<f32>, JsError> {
        let w = match which {
            "clean" => self.0.clean().clone(),
            "noisy" => self.0.noisy().clone(),
            "oracle" => self.0.oracle_waveform().map_err(js_err)?,
            other => return Err(JsError::new(&format!("unknown signal {other:?}"))),
        };
        Ok(w.samples.iter().map(|&x| x as f32).collect())
    }
}

/// Method names for the page's selector, newline separated.
#[wasm_bindgen]
pub fn method_names() -> String {
    MethodConfig::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join("\n")
}
