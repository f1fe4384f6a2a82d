//! Proxy metrics: feature-domain MSE, SI-SDR of resynthesized waveforms, and run reports
//! comparing a model against the noisy input and the oracle mask.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::audio::Waveform;
use crate::checkpoint::Checkpoint;
use crate::dsp::{Domain, FeatureMatrix};
use crate::enhancement::{asr_features, Enhanced, Enhancer};
use crate::error::{Error, Result};
use crate::targets::direct_mask;
use crate::training::{load_mixtures, squared_loss, MixtureSpec};

/// Value reported for an exact reconstruction, and its negative for a silent estimate.
pub const SI_SDR_CAP: f64 = 100.0;

/// Mean per-frame squared 2-norm of the difference.
pub fn feature_mse(estimate: &FeatureMatrix, clean: &FeatureMatrix) -> Result<f64> {
    estimate.expect_same_layout(clean)?;
    squared_loss(estimate, clean)
}

/// Scale-invariant SDR in dB, clamped to ±[`SI_SDR_CAP`].
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let s = &reference.samples;
    let e = &estimate.samples;
    let ss: f64 = s.iter().map(|x| x * x).sum();
    if ss == 0.0 {
        return Err(Error::DegenerateSource("silent reference".into()));
    }
    let alpha = e.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target = alpha * alpha * ss;
    let residual: f64 = e
        .iter()
        .zip(s)
        .map(|(a, b)| {
            let d = alpha * b - a;
            d * d
        })
        .sum();
    if target == 0.0 {
        return Ok(-SI_SDR_CAP);
    }
    if residual == 0.0 {
        return Ok(SI_SDR_CAP);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    /// The unprocessed mixture.
    Noisy,
    /// Direct mask computed from the clean reference.
    Oracle,
    Model,
}

impl System {
    pub const ALL: [System; 3] = [System::Noisy, System::Oracle, System::Model];

    pub fn name(self) -> &'static str {
        match self {
            System::Noisy => "noisy",
            System::Oracle => "oracle",
            System::Model => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    /// MSE against clean features in the method's output domain.
    #[serde(rename = "feature_mse")]
    FeatureMse,
    /// Log-fbank MSE with the estimate converted along the feature path.
    #[serde(rename = "asr_mse")]
    AsrMse,
    /// Log-fbank MSE recomputed from the noisy-phase resynthesis.
    #[serde(rename = "asr_mse_wave")]
    AsrMseWave,
    #[serde(rename = "si_sdr")]
    SiSdr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::FeatureMse, Metric::AsrMse, Metric::AsrMseWave, Metric::SiSdr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FeatureMse => "feature_mse",
            Metric::AsrMse => "asr_mse",
            Metric::AsrMseWave => "asr_mse_wave",
            Metric::SiSdr => "si_sdr",
        }
    }
}

/// A clean reference, its mixture and the labels reports group by.
#[derive(Debug, Clone)]
pub struct EvalMixture {
    pub clean: Waveform,
    pub noisy: Waveform,
    pub condition: String,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureResult {
    pub method: String,
    pub system: System,
    /// Position in the evaluation manifest.
    pub index: usize,
    pub condition: String,
    pub snr_db: f64,
    pub values: Vec<(Metric, f64)>,
}

impl MixtureResult {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

/// Means over the mixtures sharing (method, system, condition, SNR).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub system: System,
    pub condition: String,
    pub snr_db: f64,
    pub mixtures: usize,
    pub values: Vec<(Metric, f64)>,
}

impl ReportRow {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v)
    }
}

#[derive(Serialize)]
struct Record<'a> {
    method: &'a str,
    system: System,
    condition: &'a str,
    snr_db: f64,
    metric: Metric,
    value: f64,
    mixtures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub mixtures: Vec<MixtureResult>,
}

impl EvaluationReport {
    pub fn row(&self, method: &str, system: System, condition: &str, snr_db: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.system == system && r.condition == condition && r.snr_db == snr_db
        })
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# Enhancement report. Word error rates are not measured: they need the original\n");
        out.push_str("# noisy corpus and a full recognizer. Feature MSE and SI-SDR stand in for them.\n");
        out.push_str("# feature_mse: output domain; asr_mse: log-fbank via features;\n");
        out.push_str("# asr_mse_wave: log-fbank recomputed from the noisy-phase waveform; si_sdr in dB.\n");
        let mut header = vec!["method", "system", "condition", "snr_db", "n"];
        header.extend(Metric::ALL.iter().map(|m| m.name()));
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut line = vec![
                r.method.clone(),
                r.system.name().to_string(),
                r.condition.clone(),
                format!("{}", r.snr_db),
                r.mixtures.to_string(),
            ];
            line.extend(
                Metric::ALL
                    .iter()
                    .map(|&m| r.get(m).map_or("-".to_string(), |v| format!("{v:.4}"))),
            );
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| {
                    if c < 3 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// One JSON object per (row, metric).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            for &(metric, value) in &r.values {
                let rec = Record {
                    method: &r.method,
                    system: r.system,
                    condition: &r.condition,
                    snr_db: r.snr_db,
                    metric,
                    value,
                    mixtures: r.mixtures,
                };
                out.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, text_path: &Path, jsonl_path: &Path) -> Result<()> {
        std::fs::write(text_path, self.to_text()).map_err(|e| Error::io(text_path, e))?;
        std::fs::write(jsonl_path, self.to_jsonl()).map_err(|e| Error::io(jsonl_path, e))
    }
}

/// Reads and mixes the manifest, then evaluates every checkpoint on it.
pub fn evaluate_run(checkpoints: &[Checkpoint], manifest: &[MixtureSpec]) -> Result<EvaluationReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let utterances = load_mixtures(manifest)?;
    let mixtures: Vec<EvalMixture> = utterances
        .into_iter()
        .zip(manifest)
        .map(|(u, s)| EvalMixture {
            clean: u.clean,
            noisy: u.noisy,
            condition: s.condition.clone().unwrap_or_else(|| "unlabeled".into()),
            snr_db: s.snr_db,
        })
        .collect();
    evaluate(checkpoints, &mixtures)
}

pub fn evaluate(checkpoints: &[Checkpoint], mixtures: &[EvalMixture]) -> Result<EvaluationReport> {
    if mixtures.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if checkpoints.is_empty() {
        return Err(Error::Config("no checkpoints to evaluate".into()));
    }
    let enhancers: Vec<Enhancer> = checkpoints.iter().cloned().map(Enhancer::new).collect();
    let labels = method_labels(checkpoints);
    let per_mixture: Vec<Vec<MixtureResult>> = mixtures
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let mut out = Vec::new();
            for (e, label) in enhancers.iter().zip(&labels) {
                for (system, values) in score_mixture(e, m)? {
                    out.push(MixtureResult {
                        method: label.clone(),
                        system,
                        index: i,
                        condition: m.condition.clone(),
                        snr_db: m.snr_db,
                        values,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let results: Vec<MixtureResult> = per_mixture.into_iter().flatten().collect();
    Ok(EvaluationReport {
        rows: aggregate(&labels, mixtures, &results),
        mixtures: results,
    })
}

fn method_labels(checkpoints: &[Checkpoint]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::with_capacity(checkpoints.len());
    for ck in checkpoints {
        let base = ck.method.name();
        let seen = labels
            .iter()
            .filter(|l| **l == base || l.starts_with(&format!("{base} (")))
            .count();
        labels.push(if seen == 0 {
            base
        } else {
            format!("{base} ({})", seen + 1)
        });
    }
    labels
}

/// Metrics of the noisy, oracle and model systems on one mixture.
pub fn score_mixture(enhancer: &Enhancer, m: &EvalMixture) -> Result<Vec<(System, Vec<(Metric, f64)>)>> {
    let fe = &enhancer.frontend;
    let domain = enhancer.method().output_domain;
    let clean_spec = fe.analyze(&m.clean)?;
    let clean_out = fe.features_of(&clean_spec, domain)?;
    let clean_asr = fe.features_of(&clean_spec, Domain::LogFbank)?;

    let model = enhancer.enhance(&m.noisy)?;
    let mask = direct_mask(&clean_out, &model.noisy_output)?;
    let oracle = Enhanced {
        estimate: model.noisy_output.with_values(&model.noisy_output.values * &mask.values),
        ..model.clone()
    };
    let noisy = Enhanced {
        estimate: model.noisy_output.clone(),
        ..model.clone()
    };

    let mut out = Vec::with_capacity(3);
    for (system, e) in [(System::Noisy, &noisy), (System::Oracle, &oracle), (System::Model, &model)] {
        let mut values = vec![
            (Metric::FeatureMse, feature_mse(&e.estimate, &clean_out)?),
            (Metric::AsrMse, feature_mse(&asr_features(fe, e, false)?, &clean_asr)?),
        ];
        let wave = match system {
            System::Noisy => Some(m.noisy.clone()),
            _ if domain.is_mel() => None,
            _ => Some(e.waveform()?),
        };
        if let Some(w) = wave {
            let asr = fe.extract(&w, Domain::LogFbank)?;
            values.push((Metric::AsrMseWave, feature_mse(&asr, &clean_asr)?));
            values.push((Metric::SiSdr, si_sdr(&w, &m.clean)?));
        }
        out.push((system, values));
    }
    Ok(out)
}

fn aggregate(labels: &[String], mixtures: &[EvalMixture], results: &[MixtureResult]) -> Vec<ReportRow> {
    let mut groups: Vec<(&str, f64)> = Vec::new();
    for m in mixtures {
        if !groups.iter().any(|(c, s)| *c == m.condition && *s == m.snr_db) {
            groups.push((&m.condition, m.snr_db));
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        for system in System::ALL {
            for &(condition, snr_db) in &groups {
                let members: Vec<&MixtureResult> = results
                    .iter()
                    .filter(|r| {
                        r.method == *label && r.system == system && r.condition == condition && r.snr_db == snr_db
                    })
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let values = Metric::ALL
                    .iter()
                    .filter_map(|&metric| {
                        let vals: Vec<f64> = members.iter().filter_map(|r| r.get(metric)).collect();
                        (!vals.is_empty()).then(|| (metric, vals.iter().sum::<f64>() / vals.len() as f64))
                    })
                    .collect();
                rows.push(ReportRow {
                    method: label.clone(),
                    system,
                    condition: condition.to_string(),
                    snr_db,
                    mixtures: members.len(),
                    values,
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::Normalizer;
    use crate::dsp::FeatureMeta;
    use crate::neural::{init_parameters, ModelShape};
    use crate::synth::{noise, speech_like, NoiseKind};
    use crate::training::mix_at_snr;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn fm(values: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix {
            values,
            domain: Domain::Fft,
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
    fn mse_examples() {
        let c = fm(array![[1.0, 2.0, 3.0], [0.0, 0.5, 1.0]]);
        assert_eq!(feature_mse(&c, &c).unwrap(), 0.0);
        let shifted = c.with_values(&c.values + 1.0);
        assert!((feature_mse(&shifted, &c).unwrap() - 3.0).abs() < 1e-12);
        let mut other = c.clone();
        other.domain = Domain::LogFft;
        assert!(feature_mse(&other, &c).is_err());
        assert!(feature_mse(&fm(Array2::zeros((1, 3))), &c).is_err());
    }

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform {
            samples,
            sample_rate: 16_000,
        }
    }

    #[test]
    fn si_sdr_examples() {
        let s = speech_like(3, 8000);
        assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP);
        assert_eq!(si_sdr(&s.scaled(2.0), &s).unwrap(), SI_SDR_CAP);
        assert!(si_sdr(&s, &Waveform::zeros(8000)).is_err());
        assert!(si_sdr(&s, &speech_like(3, 7999)).is_err());
        assert_eq!(si_sdr(&Waveform::zeros(8000), &s).unwrap(), -SI_SDR_CAP);

        // Gram-Schmidt a noise vector against s and give it equal power
        let raw = noise(NoiseKind::White, 1, 8000).samples;
        let ss: f64 = s.samples.iter().map(|x| x * x).sum();
        let proj = raw.iter().zip(&s.samples).map(|(a, b)| a * b).sum::<f64>() / ss;
        let orth: Vec<f64> = raw.iter().zip(&s.samples).map(|(a, b)| a - proj * b).collect();
        let oo: f64 = orth.iter().map(|x| x * x).sum();
        let k = (ss / oo).sqrt();
        let est = wave(s.samples.iter().zip(&orth).map(|(a, b)| a + k * b).collect());
        assert!(si_sdr(&est, &s).unwrap().abs() < 0.1);
    }

    proptest! {
        #[test]
        fn si_sdr_scale_invariant(seed in 0u64..1000, c in 0.01f64..100.0) {
            let s = speech_like(seed, 2000);
            let est = wave(
                s.samples
                    .iter()
                    .zip(&noise(NoiseKind::Pink, seed, 2000).samples)
                    .map(|(a, b)| a + 0.3 * b)
                    .collect(),
            );
            let a = si_sdr(&est, &s).unwrap();
            let b = si_sdr(&est.scaled(c), &s).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    fn checkpoint(method: &str) -> Checkpoint {
        let method: crate::targets::MethodConfig = method.parse().unwrap();
        let dim = |d: Domain| if d.is_mel() { 40 } else { 257 };
        let shape = ModelShape {
            layer_count: 1,
            cell_count: 4,
            input_dim: dim(method.input_domain),
            output_dim: dim(method.output_domain),
        };
        Checkpoint {
            method,
            params: init_parameters(shape, 1).unwrap(),
            normalizer: Normalizer::identity(shape.input_dim, shape.output_dim),
        }
    }

    fn suite() -> Vec<EvalMixture> {
        let mut out = Vec::new();
        for (i, snr) in [0.0, 3.0, 6.0, 0.0, 3.0, 6.0].into_iter().enumerate() {
            let clean = speech_like(100 + i as u64, 32_000);
            let kind = if i < 3 { NoiseKind::Pink } else { NoiseKind::Babble };
            let n = noise(kind, i as u64, 40_000);
            let m = mix_at_snr(&clean, &n, snr, i as u64).unwrap();
            out.push(EvalMixture {
                clean,
                noisy: m.noisy,
                condition: if i < 3 { "matched" } else { "unseen" }.into(),
                snr_db: snr,
            });
        }
        out
    }

    #[test]
    fn report_structure_and_bounds() {
        let mixtures = suite();
        let cks = [checkpoint("fft masking"), checkpoint("log-fbank masking")];
        let report = evaluate(&cks, &mixtures).unwrap();
        assert_eq!(report.rows.len(), 2 * 3 * 6);
        assert_eq!(report.mixtures.len(), 2 * 3 * 6);
        for r in &report.mixtures {
            let has_wave = r.system == System::Noisy || r.method == "fft masking";
            assert_eq!(r.get(Metric::SiSdr).is_some(), has_wave, "{r:?}");
        }
        for i in 0..mixtures.len() {
            let pick = |s: System| {
                report
                    .mixtures
                    .iter()
                    .find(|r| r.method == "fft masking" && r.system == s && r.index == i)
                    .unwrap()
                    .clone()
            };
            let (noisy, oracle, model) = (pick(System::Noisy), pick(System::Oracle), pick(System::Model));
            let sdr = |r: &MixtureResult| r.get(Metric::SiSdr).unwrap();
            assert!(sdr(&oracle) >= sdr(&model));
            let mse = |r: &MixtureResult| r.get(Metric::FeatureMse).unwrap();
            assert!(mse(&oracle) <= mse(&noisy));
            if mixtures[i].snr_db == 0.0 {
                assert!(sdr(&noisy).abs() < 0.5, "mixture {i}: {}", sdr(&noisy));
            }
        }
        for cond in ["matched", "unseen"] {
            let base: Vec<f64> = [0.0, 3.0, 6.0]
                .iter()
                .map(|&s| {
                    report
                        .row("fft masking", System::Noisy, cond, s)
                        .unwrap()
                        .get(Metric::SiSdr)
                        .unwrap()
                })
                .collect();
            assert!(base[0] < base[1] && base[1] < base[2], "{base:?}");
        }
        let again = evaluate(&cks, &mixtures).unwrap();
        assert_eq!(again.to_text(), report.to_text());
        assert_eq!(again.to_jsonl(), report.to_jsonl());
        assert!(report.to_text().contains("log-fbank masking"));
        let first: serde_json::Value = serde_json::from_str(report.to_jsonl().lines().next().unwrap()).unwrap();
        assert_eq!(first["method"], "fft masking");
        assert_eq!(first["system"], "noisy");
        assert_eq!(first["metric"], "feature_mse");
    }

    #[test]
    fn duplicate_methods_get_distinct_labels() {
        let cks = [checkpoint("fft masking"), checkpoint("fft masking")];
        assert_eq!(method_labels(&cks), vec!["fft masking", "fft masking (2)"]);
    }

    #[test]
    fn oracle_bound_on_fft_domain() {
        let clean = speech_like(41, 16_000);
        let m = mix_at_snr(&clean, &noise(NoiseKind::Pink, 41, 16_000), 0.0, 0).unwrap();
        let e = Enhancer::new(checkpoint("fft masking"));
        let scores = score_mixture(&e, &EvalMixture {
            clean: clean.clone(),
            noisy: m.noisy.clone(),
            condition: "matched".into(),
            snr_db: 0.0,
        })
        .unwrap();
        let sdr = |s: usize| scores[s].1.iter().find(|(k, _)| *k == Metric::SiSdr).unwrap().1;
        assert!(sdr(1) - sdr(0) >= 5.0, "{} -> {}", sdr(0), sdr(1));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(evaluate(&[checkpoint("fft masking")], &[]), Err(Error::EmptyManifest)));
        assert!(matches!(evaluate_run(&[checkpoint("fft masking")], &[]), Err(Error::EmptyManifest)));
    }
}
