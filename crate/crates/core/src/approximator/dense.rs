use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, gemm_nt, gemm_tn};
use super::{take_array, Module, NamedArray};
use crate::math::{sqrt, tanh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => tanh(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Fully connected network. Each layer's weights are stored input-major
/// (`[input][output]`) followed by its bias, all in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a batched forward pass.
#[derive(Debug, Clone)]
pub struct DenseTape {
    pub batch: usize,
    /// `values[0]` is the input, `values[i + 1]` the output of layer `i`.
    pub values: Vec<Vec<f64>>,
}

impl DenseTape {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("tape holds the input")
    }
}

impl DenseNetwork {
    /// Zero-initialized network.
    pub fn zeros(layers: &[LayerSpec]) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(Error::Shape {
                    expected: pair[0].output,
                    actual: pair[1].input,
                });
            }
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in layers {
            offsets.push(total);
            total += l.input * l.output + l.output;
        }
        Ok(Self {
            layers: layers.to_vec(),
            offsets,
            params: vec![0.0; total],
        })
    }

    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; the
    /// last layer is additionally scaled by `final_scale`.
    pub fn init<R: Rng + ?Sized>(layers: &[LayerSpec], final_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let bound = 1.0 / sqrt(l.input as f64) * if i == last { final_scale } else { 1.0 };
            let start = net.offsets[i];
            for p in &mut net.params[start..start + l.input * l.output + l.output] {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
        }
        Ok(net)
    }

    /// Hidden layers of `hidden` width with `hidden_act`, then an output layer.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            specs.push(LayerSpec {
                input: prev,
                output: h,
                activation: hidden_act,
            });
            prev = h;
        }
        specs.push(LayerSpec {
            input: prev,
            output,
            activation: output_act,
        });
        Self::init(&specs, final_scale, rng)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, bias)` of layer `i`.
    pub fn layer_params(&self, i: usize) -> (&[f64], &[f64]) {
        let l = &self.layers[i];
        let w = self.offsets[i];
        let b = w + l.input * l.output;
        (&self.params[w..b], &self.params[b..b + l.output])
    }

    pub fn layer_params_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let l = self.layers[i];
        let w = self.offsets[i];
        let (weights, rest) = self.params[w..].split_at_mut(l.input * l.output);
        (weights, &mut rest[..l.output])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, 1)?.pop_output())
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<DenseTape> {
        let expected = batch * self.input_dim();
        if x.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for (i, l) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_params(i);
            let mut y = vec![0.0; batch * l.output];
            for row in y.chunks_exact_mut(l.output) {
                row.copy_from_slice(b);
            }
            gemm(batch, l.input, l.output, &values[i], w, 1.0, &mut y);
            for v in &mut y {
                *v = l.activation.apply(*v);
                if !v.is_finite() {
                    return Err(Error::NonFinite { layer: i });
                }
            }
            values.push(y);
        }
        Ok(DenseTape { batch, values })
    }

    /// Reverse pass. `d_output` is the gradient of the scalar loss with respect
    /// to the network output (already including any `1/batch` factor).
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &DenseTape, d_output: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = tape.batch;
        let expected = batch * self.output_dim();
        if d_output.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: d_output.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = self.layers[i];
            let y = &tape.values[i + 1];
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= l.activation.derivative_from_output(yv);
            }
            let (w, _) = self.layer_params(i);
            let wo = self.offsets[i];
            let bo = wo + l.input * l.output;
            gemm_tn(l.input, batch, l.output, &tape.values[i], &delta, 0.0, &mut grads[wo..bo]);
            let gb = &mut grads[bo..bo + l.output];
            for row in delta.chunks_exact(l.output) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut prev = vec![0.0; batch * l.input];
            gemm_nt(batch, l.output, l.input, &delta, w, 0.0, &mut prev);
            if prev.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Mean loss and its exact gradient for a batch. `loss` maps the batch output
    /// to `(sum of per-sample losses, d sum / d output)`.
    pub fn gradients<F>(&self, x: &[f64], batch: usize, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let tape = self.forward_batch(x, batch)?;
        let (total, mut d_out) = loss(tape.output());
        let inv = 1.0 / batch as f64;
        for d in &mut d_out {
            *d *= inv;
        }
        let (grads, _) = self.backward(&tape, &d_out)?;
        Ok((total * inv, grads))
    }
}

impl DenseTape {
    fn pop_output(mut self) -> Vec<f64> {
        self.values.pop().unwrap_or_default()
    }
}

impl Module for DenseNetwork {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.params]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.params]
    }

    fn named_arrays(&self) -> Vec<NamedArray> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_params(i);
            out.push(NamedArray {
                name: format!("l{i}.weight"),
                shape: vec![l.input, l.output],
                data: w.to_vec(),
            });
            out.push(NamedArray {
                name: format!("l{i}.bias"),
                shape: vec![l.output],
                data: b.to_vec(),
            });
        }
        out
    }

    fn load_named_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        for i in 0..self.layers.len() {
            let l = self.layers[i];
            let w = take_array(arrays, &format!("l{i}.weight"), &[l.input, l.output])?;
            let b = take_array(arrays, &format!("l{i}.bias"), &[l.output])?;
            let (wd, bd) = self.layer_params_mut(i);
            wd.copy_from_slice(w);
            bd.copy_from_slice(b);
        }
        Ok(())
    }
}
