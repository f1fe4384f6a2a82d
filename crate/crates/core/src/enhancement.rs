//! Inference: run a checkpoint on a noisy utterance, realize the estimate in the output
//! domain and optionally resynthesize a waveform with the noisy phase.

use ndarray::Array2;
use num_complex::Complex64;

use crate::audio::Waveform;
use crate::checkpoint::Checkpoint;
use crate::dsp::{istft, to_linear, ComplexSpectrogram, Domain, FeatureMatrix, FrontEnd};
use crate::error::{Error, Result};
use crate::targets::{MethodConfig, Objective};

/// A loaded model ready for inference. Immutable, so one instance can serve many
/// utterances concurrently.
#[derive(Debug, Clone)]
pub struct Enhancer {
    pub checkpoint: Checkpoint,
    pub frontend: FrontEnd,
    forced_mask: Option<f64>,
}

/// Output of one enhancement pass.
#[derive(Debug, Clone)]
pub struct Enhanced {
    /// Estimated clean features in the method's output domain.
    pub estimate: FeatureMatrix,
    /// Noisy features in the output domain.
    pub noisy_output: FeatureMatrix,
    pub noisy_spec: ComplexSpectrogram,
    pub len: usize,
}

impl Enhanced {
    /// Resynthesis with the noisy phase; fft and log-fft outputs only.
    pub fn waveform(&self) -> Result<Waveform> {
        resynthesize(&self.estimate, &self.noisy_spec, self.len)
    }
}

impl Enhancer {
    pub fn new(checkpoint: Checkpoint) -> Self {
        Self {
            checkpoint,
            frontend: FrontEnd::default(),
            forced_mask: None,
        }
    }

    /// Testing hook: replace the network's mask with a constant. Masking and SA only.
    pub fn force_mask(mut self, value: f64) -> Result<Self> {
        if self.method().objective == Objective::Mapping {
            return Err(Error::Config(format!(
                "{} predicts features, not a mask",
                self.method()
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!("mask value {value} outside [0, 1]")));
        }
        self.forced_mask = Some(value);
        Ok(self)
    }

    pub fn method(&self) -> MethodConfig {
        self.checkpoint.method
    }

    pub fn enhance(&self, noisy: &Waveform) -> Result<Enhanced> {
        let method = self.method();
        let noisy_spec = self.frontend.analyze(noisy)?;
        let noisy_output = self.frontend.features_of(&noisy_spec, method.output_domain)?;
        let shape = self.checkpoint.params.shape;
        if noisy_output.dims() != shape.output_dim {
            return Err(Error::shape(format!(
                "model predicts {} dims, {} features have {}",
                shape.output_dim,
                method.output_domain,
                noisy_output.dims()
            )));
        }
        let raw = match self.forced_mask {
            Some(v) => Array2::from_elem(noisy_output.values.dim(), v),
            None => {
                let input = self.frontend.features_of(&noisy_spec, method.input_domain)?;
                if input.dims() != shape.input_dim {
                    return Err(Error::shape(format!(
                        "model expects {} input dims, {} features have {}",
                        shape.input_dim,
                        method.input_domain,
                        input.dims()
                    )));
                }
                let x = self.checkpoint.normalizer.normalize_input(&input.values);
                self.checkpoint.params.forward(method.head(), &x)?
            }
        };
        let values = match method.objective {
            Objective::Mapping => self.checkpoint.normalizer.denormalize_output(&raw),
            Objective::Masking | Objective::SignalApproximation => &noisy_output.values * &raw,
        };
        Ok(Enhanced {
            estimate: noisy_output.with_values(values),
            noisy_output,
            noisy_spec,
            len: noisy.len(),
        })
    }

    /// Estimate in the output domain; `method` must be the checkpoint's own.
    pub fn enhance_features(&self, method: &MethodConfig, noisy: &Waveform) -> Result<FeatureMatrix> {
        if *method != self.method() {
            return Err(Error::InvalidMethod(format!(
                "checkpoint was trained for {}, not {method}",
                self.method()
            )));
        }
        Ok(self.enhance(noisy)?.estimate)
    }

    /// Log-fbank features of the estimate, either converted directly or recomputed from
    /// the noisy-phase resynthesis.
    pub fn enhance_to_asr_features(&self, noisy: &Waveform, via_waveform: bool) -> Result<FeatureMatrix> {
        if via_waveform {
            ensure_invertible(self.method().output_domain)?;
        }
        asr_features(&self.frontend, &self.enhance(noisy)?, via_waveform)
    }
}

fn ensure_invertible(domain: Domain) -> Result<()> {
    if domain.is_mel() {
        return Err(Error::NotInvertible(format!(
            "{domain} estimates cannot be turned back into a waveform"
        )));
    }
    Ok(())
}

/// Log-fbank view of an enhancement result along either path.
pub fn asr_features(frontend: &FrontEnd, e: &Enhanced, via_waveform: bool) -> Result<FeatureMatrix> {
    if via_waveform {
        frontend.extract(&e.waveform()?, Domain::LogFbank)
    } else {
        frontend.convert(&e.estimate, Domain::LogFbank)
    }
}

/// Estimated magnitudes combined with the noisy phase, inverted to `out_len` samples.
pub fn resynthesize(
    estimate: &FeatureMatrix,
    noisy_spec: &ComplexSpectrogram,
    out_len: usize,
) -> Result<Waveform> {
    ensure_invertible(estimate.domain)?;
    let linear = if estimate.domain.is_log() {
        to_linear(estimate)?
    } else {
        estimate.clone()
    };
    if linear.values.dim() != noisy_spec.values.dim() {
        return Err(Error::shape(format!(
            "estimate {:?} vs spectrogram {:?}",
            linear.values.dim(),
            noisy_spec.values.dim()
        )));
    }
    let mut values = noisy_spec.values.clone();
    values.zip_mut_with(&linear.values, |c, &m| {
        let r = c.norm();
        *c = if r > 0.0 {
            *c * (m / r)
        } else {
            Complex64::new(m, 0.0)
        };
    });
    istft(&noisy_spec.with_values(values), out_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::Normalizer;
    use crate::neural::{init_parameters, ModelParameters, ModelShape};
    use crate::synth::{noise, speech_like, NoiseKind};
    use crate::targets::direct_mask;
    use crate::training::{mix_at_snr, squared_loss};

    fn checkpoint(method: &str, seed: u64) -> Checkpoint {
        let method: MethodConfig = method.parse().unwrap();
        let dim = |d: Domain| if d.is_mel() { 40 } else { 257 };
        let shape = ModelShape {
            layer_count: 1,
            cell_count: 3,
            input_dim: dim(method.input_domain),
            output_dim: dim(method.output_domain),
        };
        Checkpoint {
            method,
            params: init_parameters(shape, seed).unwrap(),
            normalizer: Normalizer::identity(shape.input_dim, shape.output_dim),
        }
    }

    fn mixture(seed: u64) -> (Waveform, Waveform) {
        let clean = speech_like(seed, 16_000);
        let n = noise(NoiseKind::Pink, seed, 20_000);
        let m = mix_at_snr(&clean, &n, 0.0, seed).unwrap();
        (clean, m.noisy)
    }

    #[test]
    fn unit_mask_is_identity_on_features() {
        let (_, noisy) = mixture(1);
        for name in ["fft masking", "log-fbank SA", "fbank masking"] {
            let e = Enhancer::new(checkpoint(name, 0)).force_mask(1.0).unwrap();
            let out = e.enhance(&noisy).unwrap();
            assert_eq!(out.estimate, out.noisy_output, "{name}");
        }
        assert!(Enhancer::new(checkpoint("fft masking", 0)).force_mask(1.5).is_err());
        assert!(Enhancer::new(checkpoint("log-fft mapping", 0)).force_mask(1.0).is_err());
    }

    #[test]
    fn zero_mapping_network_is_constant() {
        let mut ck = checkpoint("log-fft mapping", 0);
        ck.params = ModelParameters::zeros(ck.params.shape).unwrap();
        ck.normalizer.target_scale.fill(2.0);
        ck.normalizer.target_offset.fill(-1.0);
        let (_, noisy) = mixture(2);
        let est = Enhancer::new(ck).enhance(&noisy).unwrap().estimate;
        let expected = 2.0 * 2f64.ln() - 1.0;
        assert_eq!(est.domain, Domain::LogFft);
        assert!(est.values.iter().all(|&v| (v - expected).abs() < 1e-12));
    }

    #[test]
    fn method_and_shape_mismatch_rejected() {
        let e = Enhancer::new(checkpoint("fft masking", 0));
        let (_, noisy) = mixture(3);
        let other: MethodConfig = "log-fft masking".parse().unwrap();
        assert!(e.enhance_features(&other, &noisy).is_err());
        assert!(e.enhance_features(&e.method(), &noisy).is_ok());
        let mut ck = checkpoint("fft masking", 0);
        ck.method = "fbank masking".parse().unwrap();
        assert!(matches!(Enhancer::new(ck).enhance(&noisy), Err(Error::Shape(_))));
    }

    #[test]
    fn sigmoid_estimates_never_exceed_noisy() {
        let (_, noisy) = mixture(4);
        for name in ["fft masking", "fbank masking"] {
            let out = Enhancer::new(checkpoint(name, 5)).enhance(&noisy).unwrap();
            assert!(out
                .estimate
                .values
                .iter()
                .zip(&out.noisy_output.values)
                .all(|(e, n)| e <= n));
        }
    }

    #[test]
    fn oracle_mask_beats_noisy_features() {
        let (clean, noisy) = mixture(6);
        let fe = FrontEnd::default();
        let c = fe.extract(&clean, Domain::Fft).unwrap();
        let n = fe.extract(&noisy, Domain::Fft).unwrap();
        let mask = direct_mask(&c, &n).unwrap();
        let est = n.with_values(&n.values * &mask.values);
        assert!(squared_loss(&est, &c).unwrap() < squared_loss(&n, &c).unwrap());
    }

    #[test]
    fn resynthesis_cases() {
        let (_, noisy) = mixture(7);
        let fe = FrontEnd::default();
        let spec = fe.analyze(&noisy).unwrap();
        let mags = fe.features_of(&spec, Domain::Fft).unwrap();
        let same = resynthesize(&mags, &spec, noisy.len()).unwrap();
        let round = istft(&spec, noisy.len()).unwrap();
        assert_eq!(same.len(), noisy.len());
        let worst = same
            .samples
            .iter()
            .zip(&round.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");

        let logged = fe.features_of(&spec, Domain::LogFft).unwrap();
        let via_log = resynthesize(&logged, &spec, noisy.len()).unwrap();
        let interior = 512..noisy.len() - 512;
        for i in interior {
            assert!((via_log.samples[i] - noisy.samples[i]).abs() < 1e-6);
        }

        let silent = resynthesize(&mags.with_values(Array2::zeros(mags.values.dim())), &spec, noisy.len()).unwrap();
        assert!(silent.samples.iter().all(|&x| x == 0.0));

        let fbank = fe.features_of(&spec, Domain::Fbank).unwrap();
        assert!(matches!(resynthesize(&fbank, &spec, noisy.len()), Err(Error::NotInvertible(_))));
        let short = mags.with_values(mags.values.slice(ndarray::s![1.., ..]).to_owned());
        assert!(matches!(resynthesize(&short, &spec, noisy.len()), Err(Error::Shape(_))));
    }

    #[test]
    fn feature_and_waveform_paths_agree_on_clean_input() {
        let clean = speech_like(8, 16_000);
        let e = Enhancer::new(checkpoint("fft masking", 0)).force_mask(1.0).unwrap();
        let direct = e.enhance_to_asr_features(&clean, false).unwrap();
        let wave = e.enhance_to_asr_features(&clean, true).unwrap();
        assert_eq!(direct.values.dim(), wave.values.dim());
        // the first and last frames see the un-overlapped window tails
        let frames = direct.frames();
        for t in 1..frames - 1 {
            for d in 0..direct.dims() {
                let diff = (direct.values[[t, d]] - wave.values[[t, d]]).abs();
                assert!(diff < 1e-5, "frame {t} band {d}: {diff}");
            }
        }
    }

    #[test]
    fn mel_methods_cannot_go_through_waveform() {
        let (_, noisy) = mixture(9);
        let e = Enhancer::new(checkpoint("log-fbank masking", 0));
        assert!(matches!(e.enhance_to_asr_features(&noisy, true), Err(Error::NotInvertible(_))));
        assert_eq!(e.enhance_to_asr_features(&noisy, false).unwrap().domain, Domain::LogFbank);
    }
}
