//! Model checkpoints and the feature normalization they carry.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic          b"SEPF"
//! version        u32 (= 1)
//! layer_count    u32
//! cell_count     u32   cells per direction
//! input_dim      u32
//! output_dim     u32
//! head           u8    0 sigmoid, 1 softplus
//! input_domain   u8    0 fft, 1 log-fft, 2 fbank, 3 log-fbank
//! output_domain  u8
//! objective      u8    0 masking, 1 mapping, 2 signal approximation
//! input_mean     f32 × input_dim
//! input_std      f32 × input_dim
//! target_offset  f32 × output_dim
//! target_scale   f32 × output_dim
//! tensors        f32, in ModelParameters::tensors() order:
//!                for each layer: fwd w_ih (4H×in), fwd w_hh (4H×H), fwd bias (4H),
//!                                bwd w_ih, bwd w_hh, bwd bias;
//!                head weight (out×2H), head bias (out).
//!                Matrices are row-major; gate blocks ordered i, f, g, o.
//! ```

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::dsp::Domain;
use crate::error::{Error, Result};
use crate::neural::{HeadKind, ModelParameters, ModelShape};
use crate::targets::{MethodConfig, Objective};

pub const MAGIC: &[u8; 4] = b"SEPF";
pub const VERSION: u32 = 1;

const STD_FLOOR: f64 = 1e-6;

/// Per-dimension affine maps between raw features and network space.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub input_mean: Array1<f64>,
    pub input_std: Array1<f64>,
    /// Mapping targets are stored as `(clean - offset) / scale`; identity for mask objectives.
    pub target_offset: Array1<f64>,
    pub target_scale: Array1<f64>,
}

impl Normalizer {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_mean: Array1::zeros(input_dim),
            input_std: Array1::ones(input_dim),
            target_offset: Array1::zeros(output_dim),
            target_scale: Array1::ones(output_dim),
        }
    }

    /// Global per-dimension statistics over the given utterances. With `targets`, the
    /// target map sends each dimension's training minimum to 1 in units of its
    /// standard deviation, which keeps every training target inside the softplus range.
    pub fn fit(inputs: &[&Array2<f64>], targets: Option<&[&Array2<f64>]>, output_dim: usize) -> Self {
        let (input_mean, input_std) = moments(inputs);
        let (target_offset, target_scale) = match targets {
            Some(ts) if !ts.is_empty() => {
                let (_, scale) = moments(ts);
                let dims = scale.len();
                let mut min = Array1::from_elem(dims, f64::INFINITY);
                for t in ts {
                    for row in t.rows() {
                        min.zip_mut_with(&row, |m, &v| *m = m.min(v));
                    }
                }
                (&min - &scale, scale)
            }
            _ => (Array1::zeros(output_dim), Array1::ones(output_dim)),
        };
        Self {
            input_mean,
            input_std,
            target_offset,
            target_scale,
        }
    }

    pub fn normalize_input(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.input_mean) / &self.input_std
    }

    pub fn normalize_target(&self, y: &Array2<f64>) -> Array2<f64> {
        (y - &self.target_offset) / &self.target_scale
    }

    pub fn denormalize_output(&self, y: &Array2<f64>) -> Array2<f64> {
        y * &self.target_scale + &self.target_offset
    }

    fn round_to_f32(&mut self) {
        for a in [
            &mut self.input_mean,
            &mut self.input_std,
            &mut self.target_offset,
            &mut self.target_scale,
        ] {
            a.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

fn moments(mats: &[&Array2<f64>]) -> (Array1<f64>, Array1<f64>) {
    let dims = mats.first().map_or(0, |m| m.ncols());
    let mut count = 0usize;
    let mut sum = Array1::<f64>::zeros(dims);
    for m in mats {
        sum += &m.sum_axis(Axis(0));
        count += m.nrows();
    }
    let n = count.max(1) as f64;
    let mean = sum / n;
    let mut var = Array1::<f64>::zeros(dims);
    for m in mats {
        for row in m.rows() {
            var.zip_mut_with(&(&row - &mean), |v, d| *v += d * d);
        }
    }
    let std = (var / n).mapv(|v| {
        let s = v.sqrt();
        if s < STD_FLOOR {
            1.0
        } else {
            s
        }
    });
    (mean, std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub method: MethodConfig,
    pub params: ModelParameters,
    pub normalizer: Normalizer,
}

impl Checkpoint {
    pub fn head(&self) -> HeadKind {
        self.method.head()
    }

    /// The checkpoint as it reads back from disk (parameters rounded to f32).
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for t in out.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        out.normalizer.round_to_f32();
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.params.shape;
        let mut buf = Vec::with_capacity(32 + 4 * self.params.parameter_count());
        buf.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            shape.layer_count as u32,
            shape.cell_count as u32,
            shape.input_dim as u32,
            shape.output_dim as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&[
            self.head().tag(),
            self.method.input_domain.tag(),
            self.method.output_domain.tag(),
            self.method.objective.tag(),
        ]);
        let n = &self.normalizer;
        let stats = [&n.input_mean, &n.input_std, &n.target_offset, &n.target_scale];
        for a in stats {
            push_f32(&mut buf, a.iter());
        }
        for (_, t) in self.params.tensors() {
            push_f32(&mut buf, t.iter());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a SEPF checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let shape = ModelShape {
            layer_count: r.u32()? as usize,
            cell_count: r.u32()? as usize,
            input_dim: r.u32()? as usize,
            output_dim: r.u32()? as usize,
        };
        let head = HeadKind::from_tag(r.u8()?)?;
        let input_domain = Domain::from_tag(r.u8()?)?;
        let output_domain = Domain::from_tag(r.u8()?)?;
        let objective = Objective::from_tag(r.u8()?)?;
        let method = MethodConfig::new(input_domain, output_domain, objective)?;
        if method.head() != head {
            return Err(Error::Format(format!(
                "head {head:?} does not match method {method}"
            )));
        }
        let normalizer = Normalizer {
            input_mean: Array1::from(r.f32s(shape.input_dim)?),
            input_std: Array1::from(r.f32s(shape.input_dim)?),
            target_offset: Array1::from(r.f32s(shape.output_dim)?),
            target_scale: Array1::from(r.f32s(shape.output_dim)?),
        };
        let mut params = ModelParameters::zeros(shape)
            .map_err(|e| Error::Format(format!("bad architecture header: {e}")))?;
        for t in params.tensors_mut() {
            let vals = r.f32s(t.len())?;
            t.copy_from_slice(&vals);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after parameters",
                bytes.len() - r.pos
            )));
        }
        if !params.all_finite() {
            return Err(Error::Format("non-finite parameter in checkpoint".into()));
        }
        Ok(Self {
            method,
            params,
            normalizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn push_f32<'a>(buf: &mut Vec<u8>, vals: impl Iterator<Item = &'a f64>) {
    for v in vals {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}
