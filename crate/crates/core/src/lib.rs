//! Supervised monaural speech-enhancement front-end.
//!
//! A bidirectional LSTM separator is trained with one of three objectives
//! (ratio masking, direct mapping, signal approximation) over fft, log-fft,
//! fbank or log-fbank representations, and enhanced magnitudes can be
//! resynthesized with the noisy phase.

pub mod audio;
pub mod checkpoint;
pub mod dsp;
pub mod enhancement;
pub mod error;
pub mod evaluation;
pub mod neural;
pub mod synth;
pub mod targets;
pub mod training;

pub use audio::Waveform;
pub use checkpoint::{Checkpoint, Normalizer};
pub use dsp::{ComplexSpectrogram, Domain, FeatureMatrix, FrontEnd, MelFilterbank};
pub use enhancement::{Enhanced, Enhancer};
pub use error::{Error, Result};
pub use evaluation::{EvaluationReport, Metric, System};
pub use neural::{HeadKind, ModelParameters, ModelShape};
pub use targets::{MethodConfig, Objective, TrainingPair};
