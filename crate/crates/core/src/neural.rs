//! Stacked bidirectional LSTM with a dense output head, forward evaluation and
//! exact backpropagation through time.
//!
//! Gate order in every weight matrix is input, forget, cell candidate, output.
//! Each layer's output at frame `t` is `[h_fwd(t), h_bwd(t)]`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::dsp::{Domain, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Sigmoid,
    Softplus,
}

impl HeadKind {
    pub fn tag(self) -> u8 {
        match self {
            HeadKind::Sigmoid => 0,
            HeadKind::Softplus => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(HeadKind::Sigmoid),
            1 => Ok(HeadKind::Softplus),
            _ => Err(Error::Format(format!("unknown head tag {tag}"))),
        }
    }

    fn activate(self, x: f64) -> f64 {
        match self {
            HeadKind::Sigmoid => sigmoid(x),
            HeadKind::Softplus => softplus(x),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            HeadKind::Sigmoid => out * (1.0 - out),
            HeadKind::Softplus => sigmoid(pre),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub layer_count: usize,
    /// Cells per direction.
    pub cell_count: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelShape {
    /// Desk-scale default: 2 layers × 64 cells per direction.
    pub fn desk(input_dim: usize, output_dim: usize) -> Self {
        Self {
            layer_count: 2,
            cell_count: 64,
            input_dim,
            output_dim,
        }
    }

    /// 4 layers × 512 cells per direction.
    pub fn paper_scale(input_dim: usize, output_dim: usize) -> Self {
        Self {
            layer_count: 4,
            cell_count: 512,
            input_dim,
            output_dim,
        }
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.cell_count
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layer_count == 0 || self.cell_count == 0 || self.input_dim == 0 || self.output_dim == 0
        {
            return Err(Error::Config(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One direction of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// 4H × in
    pub w_ih: Array2<f64>,
    /// 4H × H
    pub w_hh: Array2<f64>,
    /// 4H
    pub bias: Array1<f64>,
}

impl LstmWeights {
    fn zeros(input_dim: usize, cells: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * cells, input_dim)),
            w_hh: Array2::zeros((4 * cells, cells)),
            bias: Array1::zeros(4 * cells),
        }
    }

    fn cells(&self) -> usize {
        self.w_hh.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

/// All trainable weights. Also used as the container for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub layers: Vec<BiLstmLayer>,
    /// out × 2H
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    pub shape: ModelShape,
}

impl ModelParameters {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let h = shape.cell_count;
        let layers = (0..shape.layer_count)
            .map(|l| {
                let d = shape.layer_input_dim(l);
                BiLstmLayer {
                    forward: LstmWeights::zeros(d, h),
                    backward: LstmWeights::zeros(d, h),
                }
            })
            .collect();
        Ok(Self {
            layers,
            head_w: Array2::zeros((shape.output_dim, 2 * h)),
            head_b: Array1::zeros(shape.output_dim),
            shape,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape).expect("shape already validated")
    }

    /// Flat views of every tensor in checkpoint order: per layer, forward then
    /// backward direction, each as `w_ih`, `w_hh`, `bias`; then head weight, head bias.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 6 + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, w) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                out.push((format!("layer{l}.{dir}.w_ih"), slice(&w.w_ih)));
                out.push((format!("layer{l}.{dir}.w_hh"), slice(&w.w_hh)));
                out.push((format!("layer{l}.{dir}.bias"), w.bias.as_slice().unwrap()));
            }
        }
        out.push(("head.w".into(), slice(&self.head_w)));
        out.push(("head.b".into(), self.head_b.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 6 + 2);
        for layer in &mut self.layers {
            for w in [&mut layer.forward, &mut layer.backward] {
                out.push(w.w_ih.as_slice_mut().unwrap());
                out.push(w.w_hh.as_slice_mut().unwrap());
                out.push(w.bias.as_slice_mut().unwrap());
            }
        }
        out.push(self.head_w.as_slice_mut().unwrap());
        out.push(self.head_b.as_slice_mut().unwrap());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParameters) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Runs the network on `input` (frames × input_dim).
    pub fn forward(&self, head: HeadKind, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(head, input)?.output)
    }

    /// Forward pass keeping every activation needed by [`ModelParameters::backward`].
    pub fn forward_trace(&self, head: HeadKind, input: &Array2<f64>) -> Result<ForwardTrace> {
        if input.ncols() != self.shape.input_dim {
            return Err(Error::shape(format!(
                "input has {} dims, model expects {}",
                input.ncols(),
                self.shape.input_dim
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let fwd = run_direction(&layer.forward, &x, false);
            let bwd = run_direction(&layer.backward, &x, true);
            let h = layer.forward.cells();
            let mut out = Array2::zeros((x.nrows(), 2 * h));
            out.slice_mut(s![.., ..h]).assign(&fwd.h);
            out.slice_mut(s![.., h..]).assign(&bwd.h);
            layers.push(LayerTrace { input: x, fwd, bwd });
            x = out;
        }
        let mut pre = x.dot(&self.head_w.t());
        pre += &self.head_b;
        let output = pre.mapv(|v| head.activate(v));
        if !output.iter().all(|v| v.is_finite()) || !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow(
                "non-finite activation in forward pass".into(),
            ));
        }
        Ok(ForwardTrace {
            head,
            layers,
            hidden: x,
            pre,
            output,
        })
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `d loss / d output`.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &Array2<f64>) -> Result<ModelParameters> {
        if d_output.dim() != trace.output.dim() {
            return Err(Error::shape(format!(
                "output gradient {:?} vs output {:?}",
                d_output.dim(),
                trace.output.dim()
            )));
        }
        if trace.layers.len() != self.layers.len() || trace.hidden.ncols() != self.head_w.ncols() {
            return Err(Error::shape("trace does not belong to these parameters"));
        }
        let mut grads = self.zeros_like();

        let mut d_pre = d_output.clone();
        ndarray::Zip::from(&mut d_pre)
            .and(&trace.pre)
            .and(&trace.output)
            .for_each(|d, &p, &o| *d *= trace.head.derivative(p, o));
        grads.head_w = d_pre.t().dot(&trace.hidden);
        grads.head_b = d_pre.sum_axis(Axis(0));
        let mut d_x = d_pre.dot(&self.head_w);

        for (l, (layer, lt)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            let h = layer.forward.cells();
            let d_fwd = d_x.slice(s![.., ..h]).to_owned();
            let d_bwd = d_x.slice(s![.., h..]).to_owned();
            let g = &mut grads.layers[l];
            let dx_f = backprop_direction(&layer.forward, &lt.fwd, &lt.input, &d_fwd, false, &mut g.forward);
            let dx_b =
                backprop_direction(&layer.backward, &lt.bwd, &lt.input, &d_bwd, true, &mut g.backward);
            d_x = dx_f + dx_b;
        }
        Ok(grads)
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

pub fn init_parameters(shape: ModelShape, seed: u64) -> Result<ModelParameters> {
    let mut params = ModelParameters::zeros(shape)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let fill = |a: &mut [f64], fan_in: usize, rng: &mut StdRng| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        a.iter_mut().for_each(|x| *x = dist.sample(rng));
    };
    let h = shape.cell_count;
    for (l, layer) in params.layers.iter_mut().enumerate() {
        let d = shape.layer_input_dim(l);
        for w in [&mut layer.forward, &mut layer.backward] {
            fill(w.w_ih.as_slice_mut().unwrap(), d, &mut rng);
            fill(w.w_hh.as_slice_mut().unwrap(), h, &mut rng);
            w.bias.fill(0.0);
            w.bias.slice_mut(s![h..2 * h]).fill(1.0);
        }
    }
    fill(params.head_w.as_slice_mut().unwrap(), 2 * h, &mut rng);
    Ok(params)
}

/// Evaluates the network on a feature matrix; the result is tagged with `output_domain`.
pub fn forward(
    params: &ModelParameters,
    head: HeadKind,
    input: &FeatureMatrix,
    output_domain: Domain,
) -> Result<FeatureMatrix> {
    let values = params.forward(head, &input.values)?;
    Ok(FeatureMatrix {
        values,
        domain: output_domain,
        meta: crate::dsp::FeatureMeta {
            mel_bands: output_domain.is_mel().then_some(params.shape.output_dim),
            ..input.meta
        },
    })
}

/// Activations of one direction, indexed by frame.
#[derive(Debug, Clone)]
pub struct DirectionTrace {
    /// Activated gates [i, f, g, o], T × 4H.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Array2<f64>,
    pub fwd: DirectionTrace,
    pub bwd: DirectionTrace,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub head: HeadKind,
    pub layers: Vec<LayerTrace>,
    /// Output of the last recurrent layer, T × 2H.
    pub hidden: Array2<f64>,
    pub pre: Array2<f64>,
    pub output: Array2<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn time_order(frames: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..frames).rev())
    } else {
        Box::new(0..frames)
    }
}

fn run_direction(w: &LstmWeights, x: &Array2<f64>, reverse: bool) -> DirectionTrace {
    let frames = x.nrows();
    let h = w.cells();
    let mut gates = x.dot(&w.w_ih.t());
    gates += &w.bias;
    let mut c = Array2::zeros((frames, h));
    let mut tanh_c = Array2::zeros((frames, h));
    let mut hs = Array2::<f64>::zeros((frames, h));
    let w_hh = slice(&w.w_hh);

    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in time_order(frames, reverse) {
        let mut z = gates.row_mut(t);
        let z = z.as_slice_mut().unwrap();
        for (r, zr) in z.iter_mut().enumerate() {
            *zr += dot(&w_hh[r * h..(r + 1) * h], &h_prev);
        }
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let g_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            z[j] = i_g;
            z[h + j] = f_g;
            z[2 * h + j] = g_g;
            z[3 * h + j] = o_g;
            let cj = f_g * c_prev[j] + i_g * g_g;
            let tc = cj.tanh();
            c[[t, j]] = cj;
            tanh_c[[t, j]] = tc;
            hs[[t, j]] = o_g * tc;
        }
        h_prev.copy_from_slice(hs.row(t).as_slice().unwrap());
        c_prev.copy_from_slice(c.row(t).as_slice().unwrap());
    }
    DirectionTrace {
        gates,
        c,
        tanh_c,
        h: hs,
    }
}

/// Accumulates weight gradients into `g` and returns the gradient w.r.t. the layer input.
fn backprop_direction(
    w: &LstmWeights,
    tr: &DirectionTrace,
    x: &Array2<f64>,
    d_h_out: &Array2<f64>,
    reverse: bool,
    g: &mut LstmWeights,
) -> Array2<f64> {
    let frames = x.nrows();
    let h = w.cells();
    let mut d_z = Array2::<f64>::zeros((frames, 4 * h));
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zero = vec![0.0; h];
    let w_hh = slice(&w.w_hh);
    let gw_hh = g.w_hh.as_slice_mut().unwrap();

    // visit frames in the opposite order to the forward recurrence
    for t in time_order(frames, !reverse) {
        let prev = if reverse {
            (t + 1 < frames).then(|| t + 1)
        } else {
            t.checked_sub(1)
        };
        let gates = tr.gates.row(t);
        let c_prev: ArrayView1<f64> = match prev {
            Some(p) => tr.c.row(p),
            None => ArrayView1::from(&zero[..]),
        };
        let h_prev: ArrayView1<f64> = match prev {
            Some(p) => tr.h.row(p),
            None => ArrayView1::from(&zero[..]),
        };
        let mut dz_row = d_z.row_mut(t);
        let dz = dz_row.as_slice_mut().unwrap();
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = tr.tanh_c[[t, j]];
            let dh = d_h_out[[t, j]] + dh_next[j];
            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g_g * i_g * (1.0 - i_g);
            dz[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
            dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
            dz[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            let row = &w_hh[r * h..(r + 1) * h];
            let grow = &mut gw_hh[r * h..(r + 1) * h];
            for j in 0..h {
                dh_next[j] += row[j] * dzr;
                grow[j] += dzr * h_prev[j];
            }
        }
    }
    g.w_ih += &d_z.t().dot(x);
    g.bias += &d_z.sum_axis(Axis(0));
    d_z.dot(&w.w_ih)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> ModelShape {
        ModelShape {
            layer_count: 2,
            cell_count: 4,
            input_dim: 3,
            output_dim: 2,
        }
    }

    fn random_input(frames: usize, dims: usize, seed: u64) -> Array2<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        Array2::from_shape_fn((frames, dims), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn stable_activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn zero_network_outputs_constants() {
        let p = ModelParameters::zeros(tiny()).unwrap();
        let x = random_input(5, 3, 1);
        let y = p.forward(HeadKind::Sigmoid, &x).unwrap();
        assert!(y.iter().all(|&v| v == 0.5));
        let y = p.forward(HeadKind::Softplus, &x).unwrap();
        assert!(y.iter().all(|&v| v == 2f64.ln()));
    }

    #[test]
    fn init_is_seeded() {
        let a = init_parameters(tiny(), 7).unwrap();
        let b = init_parameters(tiny(), 7).unwrap();
        let c = init_parameters(tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in &a.layers {
            assert!(layer.forward.bias.slice(s![4..8]).iter().all(|&v| v == 1.0));
            assert!(layer.forward.bias.slice(s![..4]).iter().all(|&v| v == 0.0));
            let bound = 1.0 / (layer.forward.w_ih.ncols() as f64).sqrt();
            assert!(layer.forward.w_ih.iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut shape = tiny();
        shape.cell_count = 0;
        assert!(init_parameters(shape, 0).is_err());
        let p = init_parameters(tiny(), 0).unwrap();
        assert!(p.forward(HeadKind::Sigmoid, &Array2::zeros((4, 5))).is_err());
        let tr = p.forward_trace(HeadKind::Sigmoid, &Array2::zeros((4, 3))).unwrap();
        assert!(p.backward(&tr, &Array2::zeros((3, 2))).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let mut p = ModelParameters::zeros(tiny()).unwrap();
        let x = random_input(3, 3, 2);
        assert!(p.forward(HeadKind::Softplus, &x).is_ok());
        // positive biases make every hidden unit positive, so the head sum exceeds f64::MAX
        for layer in &mut p.layers {
            layer.forward.bias.fill(1.0);
            layer.backward.bias.fill(1.0);
        }
        p.head_w.fill(f64::MAX);
        assert!(matches!(
            p.forward(HeadKind::Softplus, &x),
            Err(Error::NumericalOverflow(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let p = init_parameters(tiny(), 3).unwrap();
        let x = random_input(5, 3, 4);
        let tr = p.forward_trace(HeadKind::Sigmoid, &x).unwrap();
        let g = p.backward(&tr, &Array2::zeros((5, 2))).unwrap();
        assert_eq!(g.l2_norm(), 0.0);
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let p = init_parameters(tiny(), 3).unwrap();
        let x = random_input(5, 3, 4);
        let tr = p.forward_trace(HeadKind::Softplus, &x).unwrap();
        let d = random_input(5, 2, 5);
        let g1 = p.backward(&tr, &d).unwrap();
        let g2 = p.backward(&tr, &(&d * 2.0)).unwrap();
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    /// Central differences of `sum(c * forward(x))` against the analytic gradient, every parameter.
    fn check_gradients(head: HeadKind, seed: u64) {
        let mut p = init_parameters(tiny(), seed).unwrap();
        let x = random_input(6, 3, seed + 1);
        let c = random_input(6, 2, seed + 2);
        let loss = |p: &ModelParameters| (p.forward(head, &x).unwrap() * &c).sum();
        let tr = p.forward_trace(head, &x).unwrap();
        let g = p.backward(&tr, &c).unwrap();
        let analytic: Vec<f64> = g.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        let step = 1e-6;
        let mut k = 0;
        for t in 0..p.tensors_mut().len() {
            for i in 0..p.tensors_mut()[t].len() {
                let orig = p.tensors_mut()[t][i];
                p.tensors_mut()[t][i] = orig + step;
                let up = loss(&p);
                p.tensors_mut()[t][i] = orig - step;
                let down = loss(&p);
                p.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * step);
                let a = analytic[k];
                // differences of a unit-scale loss carry about 1e-10 of rounding noise
                assert!((a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()) + 1e-9, "tensor {t} index {i}: analytic {a}, numeric {fd}");
                k += 1;
            }
        }
        assert_eq!(k, analytic.len());
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(HeadKind::Sigmoid, 11);
        check_gradients(HeadKind::Softplus, 12);
    }

    /// Swaps the directions of every layer; the next layer's input columns and the head
    /// columns follow the swapped halves.
    fn mirrored(p: &ModelParameters) -> ModelParameters {
        let h = p.shape.cell_count;
        let swap_halves = |m: &Array2<f64>| {
            let mut out = m.clone();
            out.slice_mut(s![.., ..h]).assign(&m.slice(s![.., h..]));
            out.slice_mut(s![.., h..]).assign(&m.slice(s![.., ..h]));
            out
        };
        let mut q = p.clone();
        for (l, layer) in q.layers.iter_mut().enumerate() {
            std::mem::swap(&mut layer.forward, &mut layer.backward);
            if l > 0 {
                layer.forward.w_ih = swap_halves(&layer.forward.w_ih);
                layer.backward.w_ih = swap_halves(&layer.backward.w_ih);
            }
        }
        q.head_w = swap_halves(&p.head_w);
        q
    }

    proptest::proptest! {
        #[test]
        fn time_reversal_symmetry(seed in 0u64..500, frames in 1usize..9) {
            let p = init_parameters(tiny(), seed).unwrap();
            let x = random_input(frames, 3, seed);
            let y = p.forward(HeadKind::Sigmoid, &x).unwrap();
            let xr = x.slice(s![..;-1, ..]).to_owned();
            let yr = mirrored(&p).forward(HeadKind::Sigmoid, &xr).unwrap();
            let back = yr.slice(s![..;-1, ..]);
            for (a, b) in y.iter().zip(back.iter()) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn outputs_stay_in_head_range(seed in 0u64..500, scale in 0.1f64..50.0) {
            let p = init_parameters(tiny(), seed).unwrap();
            let x = random_input(7, 3, seed) * scale;
            let m = p.forward(HeadKind::Sigmoid, &x).unwrap();
            proptest::prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
            let f = p.forward(HeadKind::Softplus, &x).unwrap();
            proptest::prop_assert!(f.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
