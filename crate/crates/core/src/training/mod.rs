//! Mixture generation, objective losses and the gradient-descent training loop.

mod loss;
mod mix;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::checkpoint::{Checkpoint, Normalizer};
use crate::dsp::FrontEnd;
use crate::error::{Error, Result};
use crate::neural::{init_parameters, HeadKind, ModelParameters, ModelShape};
use crate::targets::{build_training_pair_with, MethodConfig, Objective, TrainingPair};

pub use loss::{objective_loss, objective_loss_values, squared_loss, squared_loss_values, LossValue};
pub use mix::{mix_at_snr, snr_db, Mixture};

/// One manifest line: `clean_path<TAB>noise_path<TAB>snr_db<TAB>seed[<TAB>condition]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub clean_source: PathBuf,
    pub noise_source: PathBuf,
    pub snr_db: f64,
    pub seed: u64,
    /// Noise condition label used by evaluation (`matched` or `unseen`).
    pub condition: Option<String>,
}

impl MixtureSpec {
    pub fn to_line(&self) -> String {
        let mut line = format!(
            "{}\t{}\t{}\t{}",
            self.clean_source.display(),
            self.noise_source.display(),
            self.snr_db,
            self.seed
        );
        if let Some(c) = &self.condition {
            line.push('\t');
            line.push_str(c);
        }
        line
    }
}

/// Parses a manifest. Blank lines and `#` comments are skipped; relative paths
/// resolve against `base_dir`.
pub fn parse_manifest(text: &str, origin: &Path, base_dir: &Path) -> Result<Vec<MixtureSpec>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Manifest {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(err(format!("expected 4 or 5 tab-separated fields, found {}", fields.len())));
        }
        let snr_db: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad snr_db {:?}", fields[2])))?;
        if !snr_db.is_finite() {
            return Err(err(format!("bad snr_db {:?}", fields[2])));
        }
        let seed: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad seed {:?}", fields[3])))?;
        let resolve = |p: &str| {
            let p = Path::new(p.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        out.push(MixtureSpec {
            clean_source: resolve(fields[0]),
            noise_source: resolve(fields[1]),
            snr_db,
            seed,
            condition: fields.get(4).map(|c| c.trim().to_string()),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<MixtureSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, path, base)
}

/// A clean utterance and its noisy mixture.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub clean: Waveform,
    pub noisy: Waveform,
}

/// Reads and mixes every manifest line, reading each distinct file once.
pub fn load_mixtures(specs: &[MixtureSpec]) -> Result<Vec<Utterance>> {
    let mut cache: HashMap<PathBuf, Waveform> = HashMap::new();
    let mut get = |p: &Path| -> Result<Waveform> {
        if let Some(w) = cache.get(p) {
            return Ok(w.clone());
        }
        let w = Waveform::read_wav(p)?;
        cache.insert(p.to_path_buf(), w.clone());
        Ok(w)
    };
    specs
        .iter()
        .map(|s| {
            let clean = get(&s.clean_source)?;
            let noise = get(&s.noise_source)?;
            let m = mix_at_snr(&clean, &noise, s.snr_db, s.seed)?;
            Ok(Utterance {
                clean,
                noisy: m.noisy,
            })
        })
        .collect()
}

fn default_layers() -> usize {
    2
}
fn default_cells() -> usize {
    64
}
fn default_epochs() -> usize {
    50
}
fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.9
}
fn default_batch() -> usize {
    4
}
fn default_clip() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub method: MethodConfig,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Cells per direction.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Utterances per gradient step.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Global gradient-norm clip.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default)]
    pub seed: u64,
    /// Epochs between intermediate checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl TrainingConfig {
    pub fn new(method: MethodConfig) -> Self {
        Self {
            method,
            layers: default_layers(),
            cells: default_cells(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            batch_size: default_batch(),
            clip_norm: default_clip(),
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.cells == 0 {
            return bad("layers and cells must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        MethodConfig::new(
            self.method.input_domain,
            self.method.output_domain,
            self.method.objective,
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    /// Mean per-frame loss over the training split, measured before each batch's update.
    pub train_loss: f64,
    /// Mean per-frame loss over the validation split after the epoch; absent for tiny datasets.
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub reports: Vec<LossReport>,
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
}

/// Deterministic 90/10 split by utterance index: returns (train, validation), both ascending.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let n_valid = n / 10;
    let mut valid = perm[..n_valid].to_vec();
    let mut train = perm[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    (train, valid)
}

/// An utterance in network space.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub noisy_output: Array2<f64>,
}

pub fn prepare(pair: &TrainingPair, normalizer: &Normalizer) -> PreparedPair {
    let target = match pair.config.objective {
        Objective::Mapping => normalizer.normalize_target(&pair.target.values),
        Objective::Masking | Objective::SignalApproximation => pair.target.values.clone(),
    };
    PreparedPair {
        input: normalizer.normalize_input(&pair.input.values),
        target,
        noisy_output: pair.noisy_output.values.clone(),
    }
}

/// Loss and parameter gradient for one utterance.
pub fn utterance_gradient(
    params: &ModelParameters,
    head: HeadKind,
    objective: Objective,
    pair: &PreparedPair,
) -> Result<(f64, ModelParameters)> {
    let trace = params.forward_trace(head, &pair.input)?;
    let lv = objective_loss_values(objective, &trace.output, &pair.target, &pair.noisy_output)?;
    let grads = params.backward(&trace, &lv.gradient)?;
    Ok((lv.loss, grads))
}

pub fn utterance_loss(
    params: &ModelParameters,
    head: HeadKind,
    objective: Objective,
    pair: &PreparedPair,
) -> Result<f64> {
    let out = params.forward(head, &pair.input)?;
    Ok(objective_loss_values(objective, &out, &pair.target, &pair.noisy_output)?.loss)
}

/// Reads, mixes and trains on a manifest. Intermediate checkpoints go to `checkpoint_dir`
/// as `epoch_NNNN.sepf` when the cadence asks for them.
pub fn train(
    dataset: &[MixtureSpec],
    config: &TrainingConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let utterances = load_mixtures(dataset)?;
    let mut sink = |epoch: usize, ck: &Checkpoint| -> Result<()> {
        if let Some(dir) = checkpoint_dir {
            ck.save(dir.join(format!("epoch_{epoch:04}.sepf")))?;
        }
        Ok(())
    };
    train_utterances(&utterances, config, &mut sink)
}

pub fn train_utterances(
    utterances: &[Utterance],
    config: &TrainingConfig,
    on_checkpoint: &mut dyn FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let frontend = FrontEnd::default();
    let pairs = utterances
        .par_iter()
        .map(|u| build_training_pair_with(&frontend, &u.clean, &u.noisy, &config.method))
        .collect::<Result<Vec<_>>>()?;
    train_pairs(&pairs, config, on_checkpoint)
}

pub fn train_pairs(
    pairs: &[TrainingPair],
    config: &TrainingConfig,
    on_checkpoint: &mut dyn FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let method = config.method;
    if let Some(p) = pairs.iter().find(|p| p.config != method) {
        return Err(Error::InvalidMethod(format!(
            "pair built for {} given to a {} run",
            p.config, method
        )));
    }
    let head = method.head();
    let objective = method.objective;

    let (train_idx, valid_idx) = split_indices(pairs.len(), config.seed);
    let inputs: Vec<&Array2<f64>> = train_idx.iter().map(|&i| &pairs[i].input.values).collect();
    let targets: Vec<&Array2<f64>> = train_idx.iter().map(|&i| &pairs[i].target.values).collect();
    let output_dim = pairs[0].target.dims();
    let normalizer = Normalizer::fit(
        &inputs,
        (objective == Objective::Mapping).then_some(&targets[..]),
        output_dim,
    );
    let prepared: Vec<PreparedPair> = pairs.iter().map(|p| prepare(p, &normalizer)).collect();

    let shape = ModelShape {
        layer_count: config.layers,
        cell_count: config.cells,
        input_dim: pairs[0].input.dims(),
        output_dim,
    };
    let mut params = init_parameters(shape, config.seed)?;
    let mut velocity = params.zeros_like();
    let mut rng = StdRng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order = train_idx.clone();
    let mut reports = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f64, ModelParameters)>> = batch
                .par_iter()
                .map(|&i| utterance_gradient(&params, head, objective, &prepared[i]))
                .collect();
            let mut grad = params.zeros_like();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = r.map_err(|e| match e {
                    Error::NumericalOverflow(_) => Error::Diverged {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                batch_loss += loss;
                grad.add_assign(&g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            grad.scale(1.0 / batch.len() as f64);
            let norm = grad.l2_norm();
            if norm > config.clip_norm {
                grad.scale(config.clip_norm / norm);
            }
            velocity.scale(config.momentum);
            velocity.add_assign(&grad);
            let lr = config.learning_rate;
            for (p, (_, v)) in params.tensors_mut().into_iter().zip(velocity.tensors()) {
                p.iter_mut().zip(v).for_each(|(p, v)| *p -= lr * v);
            }
            if !params.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
        }
        let train_loss = loss_sum / order.len() as f64;
        let valid_loss = if valid_idx.is_empty() {
            None
        } else {
            let losses = valid_idx
                .par_iter()
                .map(|&i| utterance_loss(&params, head, objective, &prepared[i]))
                .collect::<Result<Vec<f64>>>()?;
            Some(losses.iter().sum::<f64>() / losses.len() as f64)
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.6} valid {}",
            valid_loss.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
        reports.push(LossReport {
            epoch,
            train_loss,
            valid_loss,
        });
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < config.epochs {
            on_checkpoint(
                epoch,
                &Checkpoint {
                    method,
                    params: params.clone(),
                    normalizer: normalizer.clone(),
                },
            )?;
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            method,
            params,
            normalizer,
        },
        reports,
        train_indices: train_idx,
        valid_indices: valid_idx,
    })
}

/// Loss log lines: `epoch<TAB>train<TAB>valid` (valid is `-` when there is no validation split).
pub fn format_loss_log(reports: &[LossReport]) -> String {
    let mut s = String::from("# epoch\ttrain_loss\tvalid_loss\n");
    for r in reports {
        s.push_str(&format!(
            "{}\t{:.9e}\t{}\n",
            r.epoch,
            r.train_loss,
            r.valid_loss.map_or("-".to_string(), |v| format!("{v:.9e}"))
        ));
    }
    s
}
