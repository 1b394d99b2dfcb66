use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out x in
    pub weight: Matrix,
    pub bias: Option<DVector<f64>>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut z = &self.weight * x;
        if let Some(b) = &self.bias {
            for mut col in z.column_iter_mut() {
                col += b;
            }
        }
        z
    }
}

/// A view encoder: one linear map, or an MLP with ReLU between layers and
/// a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    layers: Vec<Layer>,
}

/// Shape of an encoder to initialize.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub layers: Vec<Layer>,
}

impl EncoderGrad {
    pub fn zeros_like(enc: &Encoder) -> Self {
        EncoderGrad {
            layers: enc
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: l.bias.as_ref().map(|b| DVector::zeros(b.len())),
                })
                .collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &EncoderGrad, scale: f64) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            mine.weight.zip_apply(&theirs.weight, |a, b| *a += scale * b);
            if let (Some(a), Some(b)) = (mine.bias.as_mut(), theirs.bias.as_ref()) {
                a.axpy(scale, b, 1.0);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite())
                && l.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
        })
    }
}

/// Layer inputs recorded by a forward pass, needed for backpropagation.
/// `inputs[i]` is what layer `i` consumed; `inputs[0]` is the encoder input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Matrix>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl Encoder {
    pub fn new(kind: EncoderKind, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("encoder needs at least one layer"));
        }
        if kind == EncoderKind::Linear && (layers.len() != 1 || layers[0].bias.is_some()) {
            return Err(Error::contract("linear encoder has exactly one bias-free layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::contract(format!("layer {i} has a zero dimension")));
            }
            if let Some(b) = &l.bias {
                if b.len() != l.out_dim() {
                    return Err(Error::contract(format!("layer {i} bias length mismatch")));
                }
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::contract(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Encoder { kind, layers })
    }

    pub fn linear(weight: Matrix) -> Result<Self> {
        Encoder::new(EncoderKind::Linear, vec![Layer { weight, bias: None }])
    }

    pub fn identity(dim: usize) -> Self {
        Encoder {
            kind: EncoderKind::Linear,
            layers: vec![Layer {
                weight: Matrix::identity(dim, dim),
                bias: None,
            }],
        }
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| &l.weight)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite())
                && l.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
        })
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(Error::contract(format!(
                "encoder expects {} input rows, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].apply(x);
        if last > 0 {
            relu_inplace(&mut h);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = layer.apply(&h);
            if i < last {
                relu_inplace(&mut h);
            }
        }
        Ok(h)
    }

    pub fn trace(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        let mut output = Matrix::zeros(0, 0);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&inputs[i]);
            if i < last {
                relu_inplace(&mut z);
                inputs.push(z);
            } else {
                output = z;
            }
        }
        Ok(ForwardTrace { inputs, output })
    }

    /// Gradients of `<upstream, forward(x)>` with respect to every parameter
    /// and to `x`.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<(EncoderGrad, Matrix)> {
        let trace = self.trace(x)?;
        self.backward_trace(&trace, upstream, true)
            .map(|(g, dx)| (g, dx.expect("input gradient requested")))
    }

    /// Backpropagates through a recorded trace. ReLU uses subgradient 0 at
    /// exactly-zero pre-activations (the recorded activation is 0 there).
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        upstream: &Matrix,
        want_input_grad: bool,
    ) -> Result<(EncoderGrad, Option<Matrix>)> {
        if upstream.shape() != trace.output.shape() {
            return Err(Error::contract(format!(
                "upstream gradient is {}x{}, encoder output is {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                trace.output.nrows(),
                trace.output.ncols()
            )));
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let a_prev = &trace.inputs[i];
            let weight = linalg::mul_bt(&g, a_prev);
            let bias = layer
                .bias
                .as_ref()
                .map(|_| DVector::from_iterator(g.nrows(), g.row_iter().map(|r| r.sum())));
            grads.push(Layer { weight, bias });
            if i > 0 {
                let mut back = layer.weight.transpose() * &g;
                back.zip_apply(a_prev, |gv, av| {
                    if av <= 0.0 {
                        *gv = 0.0;
                    }
                });
                g = back;
            } else if want_input_grad {
                input_grad = Some(layer.weight.transpose() * &g);
            }
        }
        grads.reverse();
        Ok((EncoderGrad { layers: grads }, input_grad))
    }

    /// `params -= step * grad`
    pub fn apply_update(&mut self, grad: &EncoderGrad, step: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.weight.zip_apply(&g.weight, |w, d| *w -= step * d);
            if let (Some(b), Some(gb)) = (l.bias.as_mut(), g.bias.as_ref()) {
                b.axpy(-step, gb, 1.0);
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

fn relu_inplace(m: &mut Matrix) {
    m.apply(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Fan-in scaled uniform weights in `[-1/sqrt(in), 1/sqrt(in)]`; MLP biases
/// start at zero, linear encoders carry none.
pub fn init_encoder(spec: &EncoderSpec, seed: u64) -> Result<Encoder> {
    if spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden.contains(&0) {
        return Err(Error::contract("encoder dimensions must be positive"));
    }
    if spec.kind == EncoderKind::Linear && !spec.hidden.is_empty() {
        return Err(Error::contract("linear encoders have no hidden layers"));
    }
    let mut dims = vec![spec.input_dim];
    dims.extend(&spec.hidden);
    dims.push(spec.output_dim);
    let mut rng = seeds::rng(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            // Draw in row-major order so the stream layout matches the
            // checkpoint layout.
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weight[(r, c)] = rng.random_range(-bound..bound);
                }
            }
            let bias = match spec.kind {
                EncoderKind::Linear => None,
                EncoderKind::Mlp => Some(DVector::zeros(fan_out)),
            };
            Layer { weight, bias }
        })
        .collect();
    Encoder::new(spec.kind, layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(input: usize, hidden: Vec<usize>, out: usize, seed: u64) -> Encoder {
        init_encoder(
            &EncoderSpec {
                kind: EncoderKind::Mlp,
                input_dim: input,
                hidden,
                output_dim: out,
            },
            seed,
        )
        .unwrap()
    }

    fn with_random_biases(mut enc: Encoder, seed: u64) -> Encoder {
        let mut rng = seeds::rng(seed);
        for l in enc.layers_mut() {
            if let Some(b) = l.bias.as_mut() {
                b.apply(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        enc
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(mlp(5, vec![7], 3, 1), mlp(5, vec![7], 3, 1));
        assert_ne!(mlp(5, vec![7], 3, 1), mlp(5, vec![7], 3, 2));
    }

    #[test]
    fn init_shapes() {
        let lin = init_encoder(
            &EncoderSpec { kind: EncoderKind::Linear, input_dim: 3, hidden: vec![], output_dim: 3 },
            0,
        )
        .unwrap();
        assert_eq!(lin.layers().len(), 1);
        assert_eq!(lin.layers()[0].weight.shape(), (3, 3));
        assert!(lin.layers()[0].bias.is_none());

        let m = mlp(50, vec![256], 100, 0);
        assert_eq!(m.layers()[0].weight.shape(), (256, 50));
        assert_eq!(m.layers()[1].weight.shape(), (100, 256));
        let bound = 1.0 / 50f64.sqrt();
        assert!(m.layers()[0].weight.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_rejects_zero_dimension() {
        let spec = EncoderSpec { kind: EncoderKind::Mlp, input_dim: 4, hidden: vec![0], output_dim: 2 };
        assert!(matches!(init_encoder(&spec, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn new_rejects_unchained_layers() {
        let layers = vec![
            Layer { weight: Matrix::zeros(3, 2), bias: None },
            Layer { weight: Matrix::zeros(2, 4), bias: None },
        ];
        assert!(Encoder::new(EncoderKind::Mlp, layers).is_err());
    }

    #[test]
    fn forward_examples() {
        let x = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(Encoder::identity(3).forward(&x).unwrap(), x);

        let relu = Encoder::new(
            EncoderKind::Mlp,
            vec![
                Layer { weight: Matrix::from_column_slice(2, 1, &[1.0, -1.0]), bias: None },
                Layer { weight: Matrix::identity(2, 2), bias: None },
            ],
        )
        .unwrap();
        let out = relu.forward(&Matrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(out, Matrix::from_column_slice(2, 1, &[2.0, 0.0]));
    }

    #[test]
    fn forward_matches_manual_recomputation() {
        let enc = with_random_biases(mlp(4, vec![6, 5], 3, 3), 4);
        let x = Matrix::from_fn(4, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin());
        let mut h = x.clone();
        for (i, l) in enc.layers().iter().enumerate() {
            let mut z = &l.weight * &h;
            let b = l.bias.as_ref().unwrap();
            for r in 0..z.nrows() {
                for c in 0..z.ncols() {
                    z[(r, c)] += b[r];
                    if i + 1 < enc.layers().len() {
                        z[(r, c)] = z[(r, c)].max(0.0);
                    }
                }
            }
            h = z;
        }
        assert!((enc.forward(&x).unwrap() - h).norm() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_rows() {
        assert!(Encoder::identity(3).forward(&Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn linear_backward_is_bilinear() {
        let w = Matrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 - 1.0);
        let enc = Encoder::linear(w.clone()).unwrap();
        let x = Matrix::from_fn(3, 5, |i, j| (i * j) as f64 * 0.1 + 0.2);
        let up = Matrix::from_fn(2, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let (g, dx) = enc.backward(&x, &up).unwrap();
        assert!((&g.layers[0].weight - &up * x.transpose()).norm() < 1e-12);
        assert!((dx - w.transpose() * &up).norm() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let enc = mlp(4, vec![5], 3, 9);
        let x = Matrix::from_fn(4, 6, |i, j| (i + j) as f64 - 3.0);
        let (g, dx) = enc.backward(&x, &Matrix::zeros(3, 6)).unwrap();
        assert!(g.layers.iter().all(|l| l.weight.norm() == 0.0));
        assert_eq!(dx.norm(), 0.0);
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let enc = mlp(4, vec![5], 3, 9);
        assert!(enc.backward(&Matrix::zeros(4, 6), &Matrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        let enc = with_random_biases(mlp(4, vec![6, 5], 3, 11), 12);
        let x = Matrix::from_fn(4, 9, |i, j| ((i * 9 + j) as f64 * 0.71).cos());
        let up = Matrix::from_fn(3, 9, |i, j| ((i + 3 * j) as f64 * 0.43).sin());
        let objective = |e: &Encoder, x: &Matrix| e.forward(x).unwrap().dot(&up);
        let (g, dx) = enc.backward(&x, &up).unwrap();
        let h = 1e-6;
        let mut num = Vec::new();
        let mut ana = Vec::new();
        for li in 0..enc.layers().len() {
            let (rows, cols) = enc.layers()[li].weight.shape();
            for r in 0..rows {
                for c in 0..cols {
                    let mut p = enc.clone();
                    let mut m = enc.clone();
                    p.layers_mut()[li].weight[(r, c)] += h;
                    m.layers_mut()[li].weight[(r, c)] -= h;
                    num.push((objective(&p, &x) - objective(&m, &x)) / (2.0 * h));
                    ana.push(g.layers[li].weight[(r, c)]);
                }
                let mut p = enc.clone();
                let mut m = enc.clone();
                p.layers_mut()[li].bias.as_mut().unwrap()[r] += h;
                m.layers_mut()[li].bias.as_mut().unwrap()[r] -= h;
                num.push((objective(&p, &x) - objective(&m, &x)) / (2.0 * h));
                ana.push(g.layers[li].bias.as_ref().unwrap()[r]);
            }
        }
        for r in 0..x.nrows() {
            for c in 0..x.ncols() {
                let mut p = x.clone();
                let mut m = x.clone();
                p[(r, c)] += h;
                m[(r, c)] -= h;
                num.push((objective(&enc, &p) - objective(&enc, &m)) / (2.0 * h));
                ana.push(dx[(r, c)]);
            }
        }
        let num = DVector::from_vec(num);
        let ana = DVector::from_vec(ana);
        assert!((&num - &ana).norm() / num.norm() < 1e-4);
    }
}
