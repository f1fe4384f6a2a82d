//! STFT analysis and overlap-add synthesis with a square-root Hann window pair.
//!
//! The periodic square-root Hann window used for both analysis and synthesis
//! satisfies `w²(n) + w²(n + N/2) = 1`, so overlap-add at hop `N/2` is an
//! exact inverse on every sample covered by two frames.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// frames × bins
    pub values: Array2<Complex64>,
    pub frame_hop: usize,
    pub window_len: usize,
    pub sample_rate: u32,
    /// Amplitude gain applied to the waveform before analysis; synthesis divides it out.
    pub scale: f64,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Same framing metadata, new values.
    pub fn with_values(&self, values: Array2<Complex64>) -> Self {
        Self {
            values,
            frame_hop: self.frame_hop,
            window_len: self.window_len,
            sample_rate: self.sample_rate,
            scale: self.scale,
        }
    }
}

pub fn sqrt_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| (0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos())).sqrt())
        .collect()
}

fn check_framing(window_len: usize, frame_hop: usize) -> Result<()> {
    if window_len < 4 || !window_len.is_power_of_two() {
        return Err(Error::InvalidWindow(window_len));
    }
    if frame_hop != window_len / 2 {
        return Err(Error::InvalidHop {
            window_len,
            hop: frame_hop,
        });
    }
    Ok(())
}

pub fn frame_count(len: usize, window_len: usize, frame_hop: usize) -> usize {
    if len < window_len {
        0
    } else {
        (len - window_len) / frame_hop + 1
    }
}

pub fn stft(w: &Waveform, window_len: usize, frame_hop: usize) -> Result<ComplexSpectrogram> {
    stft_with_gain(w, window_len, frame_hop, 1.0)
}

/// STFT of `gain · w`. The gain is recorded so `istft` returns to the original amplitude scale.
pub fn stft_with_gain(
    w: &Waveform,
    window_len: usize,
    frame_hop: usize,
    gain: f64,
) -> Result<ComplexSpectrogram> {
    check_framing(window_len, frame_hop)?;
    if w.len() < window_len {
        return Err(Error::SignalTooShort {
            len: w.len(),
            window_len,
        });
    }
    let frames = frame_count(w.len(), window_len, frame_hop);
    let bins = window_len / 2 + 1;
    let window = sqrt_hann(window_len);

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(window_len);
    let mut scratch = fft.make_scratch_vec();
    let mut frame = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();

    let mut values = Array2::<Complex64>::zeros((frames, bins));
    for t in 0..frames {
        let start = t * frame_hop;
        for (j, slot) in frame.iter_mut().enumerate() {
            *slot = w.samples[start + j] * window[j] * gain;
        }
        fft.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .expect("buffer sizes come from the planner");
        values.row_mut(t).iter_mut().zip(&spectrum).for_each(|(v, s)| *v = *s);
    }
    Ok(ComplexSpectrogram {
        values,
        frame_hop,
        window_len,
        sample_rate: w.sample_rate,
        scale: gain,
    })
}

/// Weighted overlap-add inverse. Samples past the last frame are zero.
pub fn istft(spec: &ComplexSpectrogram, out_len: usize) -> Result<Waveform> {
    let n = spec.window_len;
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::ColaViolated(format!("window length {n}")));
    }
    if spec.frame_hop != n / 2 {
        return Err(Error::ColaViolated(format!(
            "hop {} with window {n}",
            spec.frame_hop
        )));
    }
    if spec.bins() != n / 2 + 1 {
        return Err(Error::ColaViolated(format!(
            "{} bins for window {n}",
            spec.bins()
        )));
    }
    if !(spec.scale.is_finite() && spec.scale > 0.0) {
        return Err(Error::ColaViolated(format!("scale {}", spec.scale)));
    }
    let window = sqrt_hann(n);
    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut scratch = ifft.make_scratch_vec();
    let mut buf = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();

    let norm = 1.0 / (n as f64 * spec.scale);
    let mut out = vec![0.0; out_len];
    for (t, row) in spec.values.rows().into_iter().enumerate() {
        buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
        // DC and Nyquist must be real for a real-valued frame
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        ifft.process_with_scratch(&mut buf, &mut frame, &mut scratch)
            .expect("buffer sizes come from the planner");
        let start = t * spec.frame_hop;
        if start >= out_len {
            break;
        }
        let end = (start + n).min(out_len);
        for (j, o) in out[start..end].iter_mut().enumerate() {
            *o += frame[j] * window[j] * norm;
        }
    }
    Ok(Waveform {
        samples: out,
        sample_rate: spec.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    /// Direct O(N²) DFT of one windowed frame.
    fn naive_dft(frame: &[f64]) -> Vec<Complex64> {
        let n = frame.len();
        (0..=n / 2)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                        Complex64::new(x * ang.cos(), x * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn window_pair_is_cola() {
        let w = sqrt_hann(512);
        for n in 0..256 {
            let s = w[n] * w[n] + w[n + 256] * w[n + 256];
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let x: Vec<f64> = (0..64 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = stft(&wave(x.clone()), 64, 32).unwrap();
        let win = sqrt_hann(64);
        for t in 0..spec.frames() {
            let frame: Vec<f64> = (0..64).map(|j| x[t * 32 + j] * win[j]).collect();
            let reference = naive_dft(&frame);
            for (k, r) in reference.iter().enumerate() {
                assert!((spec.values[[t, k]] - r).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn frame_count_formula() {
        let spec = stft(&wave(vec![0.0; 1300]), 512, 256).unwrap();
        assert_eq!(spec.frames(), (1300 - 512) / 256 + 1);
        assert_eq!(spec.bins(), 257);
    }

    /// Closed-form DFT of the periodic square-root Hann window, sin(pi n / N), at integer bin d.
    fn sine_window_dft(n: usize, d: i64) -> Complex64 {
        let geometric = |phi: f64| {
            // sum of e^{i phi j} for j in 0..n where e^{i phi n} = -1
            Complex64::new(2.0, 0.0) / (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, phi))
        };
        let nf = n as f64;
        let a = geometric(PI * (1 - 2 * d) as f64 / nf);
        let b = geometric(-PI * (1 + 2 * d) as f64 / nf);
        (a - b) / Complex64::new(0.0, 2.0)
    }

    #[test]
    fn dc_frames_are_the_window_transform() {
        let spec = stft(&wave(vec![1.0; 2048]), 512, 256).unwrap();
        let sum: f64 = sqrt_hann(512).iter().sum();
        for row in spec.values.rows() {
            assert!((row[0].re - sum).abs() < 1e-9 && row[0].im.abs() < 1e-9);
            for k in 0..257 {
                assert!((row[k] - sine_window_dft(512, k as i64)).norm() < 1e-9, "bin {k}");
                if k > 0 {
                    assert!(row[k].norm() < row[0].norm());
                }
            }
        }
    }

    #[test]
    fn bin_centred_sine() {
        let k0 = 20i64;
        let x: Vec<f64> = (0..4096)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / 512.0).sin())
            .collect();
        let spec = stft(&wave(x), 512, 256).unwrap();
        for row in spec.values.rows() {
            let peak = row[k0 as usize].norm();
            // peak equals mean window gain times N/2
            let gain = sqrt_hann(512).iter().sum::<f64>() / 512.0;
            assert!((peak / (gain * 256.0) - 1.0).abs() < 0.01);
            for k in 0..257i64 {
                // sin = (e^{+} - e^{-}) / 2i; each frame starts on a whole number of periods
                let expected =
                    (sine_window_dft(512, k - k0) - sine_window_dft(512, k + k0)) / Complex64::new(0.0, 2.0);
                assert!((row[k as usize] - expected).norm() < 1e-8, "bin {k}");
                if (k - k0).abs() >= 5 {
                    let db = 20.0 * (peak / row[k as usize].norm()).log10();
                    assert!(db >= 40.0, "bin {k}: {db} dB");
                }
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let spec = stft(&wave(vec![0.0; 1024]), 512, 256).unwrap();
        assert!(spec.values.iter().all(|v| v.norm() == 0.0));
        let back = istft(&spec, 1024).unwrap();
        assert!(back.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            stft(&wave(vec![0.0; 100]), 512, 256),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(matches!(
            stft(&wave(vec![0.0; 1000]), 500, 250),
            Err(Error::InvalidWindow(500))
        ));
        assert!(stft(&wave(vec![0.0; 1000]), 512, 128).is_err());
        let mut spec = stft(&wave(vec![0.0; 1024]), 512, 256).unwrap();
        spec.frame_hop = 128;
        assert!(matches!(istft(&spec, 1024), Err(Error::ColaViolated(_))));
    }

    #[test]
    fn round_trip_interior_and_gain() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let x: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = wave(x.clone());
        for gain in [1.0, 32768.0] {
            let spec = stft_with_gain(&w, 512, 256, gain).unwrap();
            let back = istft(&spec, w.len()).unwrap();
            let covered = (spec.frames() - 1) * 256 + 512;
            let err = (512..covered - 512)
                .map(|i| (back.samples[i] - x[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "gain {gain}: {err}");
        }
    }
}
