use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, gemm_nt, gemm_tn};
use super::{take_array, Module, NamedArray};
use crate::math::sqrt;
use crate::{Error, Result};

/// Square convolution with "valid" padding, followed by relu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    in_h: usize,
    in_w: usize,
    in_c: usize,
    out_h: usize,
    out_w: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn im2col(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let patch = self.patch();
        let mut cols = vec![0.0; batch * self.positions() * patch];
        let in_size = self.in_h * self.in_w * self.in_c;
        let mut row = 0;
        for b in 0..batch {
            let img = &x[b * in_size..(b + 1) * in_size];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let dst = &mut cols[row * patch..(row + 1) * patch];
                    let mut k = 0;
                    for ky in 0..self.kernel {
                        let iy = oy * self.stride + ky;
                        let start = (iy * self.in_w + ox * self.stride) * self.in_c;
                        let len = self.kernel * self.in_c;
                        dst[k..k + len].copy_from_slice(&img[start..start + len]);
                        k += len;
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], batch: usize) -> Vec<f64> {
        let patch = self.patch();
        let in_size = self.in_h * self.in_w * self.in_c;
        let mut x = vec![0.0; batch * in_size];
        let mut row = 0;
        for b in 0..batch {
            let img = &mut x[b * in_size..(b + 1) * in_size];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let src = &cols[row * patch..(row + 1) * patch];
                    let mut k = 0;
                    for ky in 0..self.kernel {
                        let iy = oy * self.stride + ky;
                        let start = (iy * self.in_w + ox * self.stride) * self.in_c;
                        let len = self.kernel * self.in_c;
                        for (d, s) in img[start..start + len].iter_mut().zip(&src[k..k + len]) {
                            *d += s;
                        }
                        k += len;
                    }
                    row += 1;
                }
            }
        }
        x
    }
}

/// Convolutional image encoder over channel-last (`H x W x C`) images.
/// Produces a flattened feature vector for a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    input: (usize, usize, usize),
    specs: Vec<ConvSpec>,
    geometry: Vec<Geometry>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvTape {
    pub batch: usize,
    /// `values[0]` is the input, `values[i + 1]` the output of layer `i`.
    pub values: Vec<Vec<f64>>,
}

impl ConvTape {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("tape holds the input")
    }
}

impl ConvEncoder {
    pub fn zeros(input: (usize, usize, usize), specs: &[ConvSpec]) -> Result<Self> {
        let (mut h, mut w, mut c) = input;
        let mut geometry = Vec::with_capacity(specs.len());
        let mut offsets = Vec::with_capacity(specs.len());
        let mut total = 0;
        for s in specs {
            if s.kernel == 0 || s.stride == 0 || s.channels == 0 || s.kernel > h || s.kernel > w {
                return Err(Error::Parameter(format!("conv layer {s:?} does not fit input {h}x{w}x{c}")));
            }
            let g = Geometry {
                in_h: h,
                in_w: w,
                in_c: c,
                out_h: (h - s.kernel) / s.stride + 1,
                out_w: (w - s.kernel) / s.stride + 1,
                out_c: s.channels,
                kernel: s.kernel,
                stride: s.stride,
            };
            offsets.push(total);
            total += g.patch() * g.out_c + g.out_c;
            h = g.out_h;
            w = g.out_w;
            c = g.out_c;
            geometry.push(g);
        }
        Ok(Self {
            input,
            specs: specs.to_vec(),
            geometry,
            offsets,
            params: vec![0.0; total],
        })
    }

    pub fn init<R: Rng + ?Sized>(input: (usize, usize, usize), specs: &[ConvSpec], rng: &mut R) -> Result<Self> {
        let mut enc = Self::zeros(input, specs)?;
        for (i, g) in enc.geometry.clone().iter().enumerate() {
            let bound = 1.0 / sqrt(g.patch() as f64);
            let start = enc.offsets[i];
            for p in &mut enc.params[start..start + g.patch() * g.out_c + g.out_c] {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
        }
        Ok(enc)
    }

    /// Three layers: 8x8/4, 4x4/2, 3x3/1 with 32 channels each.
    pub fn default_specs() -> Vec<ConvSpec> {
        vec![
            ConvSpec { kernel: 8, stride: 4, channels: 32 },
            ConvSpec { kernel: 4, stride: 2, channels: 32 },
            ConvSpec { kernel: 3, stride: 1, channels: 32 },
        ]
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn specs(&self) -> &[ConvSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }

    pub fn output_dim(&self) -> usize {
        let g = self.geometry.last().expect("at least one layer");
        g.positions() * g.out_c
    }

    fn layer_slices(&self, i: usize) -> (&[f64], &[f64]) {
        let g = &self.geometry[i];
        let w = self.offsets[i];
        let b = w + g.patch() * g.out_c;
        (&self.params[w..b], &self.params[b..b + g.out_c])
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<ConvTape> {
        let expected = batch * self.input_dim();
        if x.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.geometry.len() + 1);
        values.push(x.to_vec());
        for (i, g) in self.geometry.iter().enumerate() {
            let cols = g.im2col(&values[i], batch);
            let rows = batch * g.positions();
            let (w, b) = self.layer_slices(i);
            let mut y = vec![0.0; rows * g.out_c];
            for r in y.chunks_exact_mut(g.out_c) {
                r.copy_from_slice(b);
            }
            gemm(rows, g.patch(), g.out_c, &cols, w, 1.0, &mut y);
            for v in &mut y {
                if *v < 0.0 {
                    *v = 0.0;
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite { layer: i });
                }
            }
            values.push(y);
        }
        Ok(ConvTape { batch, values })
    }

    /// Returns parameter gradients and the gradient with respect to the input image.
    pub fn backward(&self, tape: &ConvTape, d_output: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
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
        for i in (0..self.geometry.len()).rev() {
            let g = self.geometry[i];
            for (d, &y) in delta.iter_mut().zip(&tape.values[i + 1]) {
                if y <= 0.0 {
                    *d = 0.0;
                }
            }
            let rows = batch * g.positions();
            let cols = g.im2col(&tape.values[i], batch);
            let wo = self.offsets[i];
            let bo = wo + g.patch() * g.out_c;
            gemm_tn(g.patch(), rows, g.out_c, &cols, &delta, 0.0, &mut grads[wo..bo]);
            let gb = &mut grads[bo..bo + g.out_c];
            for r in delta.chunks_exact(g.out_c) {
                for (gbi, d) in gb.iter_mut().zip(r) {
                    *gbi += d;
                }
            }
            let (w, _) = self.layer_slices(i);
            let mut dcols = vec![0.0; rows * g.patch()];
            gemm_nt(rows, g.out_c, g.patch(), &delta, w, 0.0, &mut dcols);
            delta = g.col2im(&dcols, batch);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
        }
        Ok((grads, delta))
    }
}

impl Module for ConvEncoder {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.params]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.params]
    }

    fn named_arrays(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for (i, g) in self.geometry.iter().enumerate() {
            let (w, b) = self.layer_slices(i);
            out.push(NamedArray {
                name: format!("conv{i}.weight"),
                shape: vec![g.kernel, g.kernel, g.in_c, g.out_c],
                data: w.to_vec(),
            });
            out.push(NamedArray {
                name: format!("conv{i}.bias"),
                shape: vec![g.out_c],
                data: b.to_vec(),
            });
        }
        out
    }

    fn load_named_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        for i in 0..self.geometry.len() {
            let g = self.geometry[i];
            let w = take_array(arrays, &format!("conv{i}.weight"), &[g.kernel, g.kernel, g.in_c, g.out_c])?;
            let b = take_array(arrays, &format!("conv{i}.bias"), &[g.out_c])?;
            let wo = self.offsets[i];
            let bo = wo + g.patch() * g.out_c;
            self.params[wo..bo].copy_from_slice(w);
            self.params[bo..bo + g.out_c].copy_from_slice(b);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_encoder_on_full_image() {
        let enc = ConvEncoder::init((84, 84, 3), &ConvEncoder::default_specs(), &mut seeded(0, 0)).unwrap();
        // 84 -> 20 -> 9 -> 7
        assert_eq!(enc.output_dim(), 7 * 7 * 32);
        let x = vec![0.5; 84 * 84 * 3];
        let tape = enc.forward_batch(&x, 1).unwrap();
        assert_eq!(tape.output().len(), 1568);
    }

    #[test]
    fn single_kernel_matches_hand_convolution() {
        // 3x3 single-channel image, 2x2 kernel, stride 1 -> 2x2 output.
        let mut enc = ConvEncoder::zeros((3, 3, 1), &[ConvSpec { kernel: 2, stride: 1, channels: 1 }]).unwrap();
        enc.params.copy_from_slice(&[1.0, 2.0, 3.0, 4.0, -10.0]);
        let img = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let out = enc.forward_batch(&img, 1).unwrap();
        // top-left: 1*1 + 2*2 + 4*3 + 5*4 - 10 = 27
        assert_eq!(out.output(), &[27.0, 37.0, 57.0, 67.0]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        let g = Geometry {
            in_h: 5,
            in_w: 6,
            in_c: 2,
            out_h: 2,
            out_w: 2,
            out_c: 1,
            kernel: 3,
            stride: 2,
        };
        let mut rng = seeded(4, 0);
        let x: Vec<f64> = (0..2 * 60).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..2 * 4 * 18).map(|_| rng.random::<f64>()).collect();
        let lhs: f64 = g.im2col(&x, 2).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(g.col2im(&c, 2).iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_kernel() {
        assert!(ConvEncoder::zeros((4, 4, 1), &[ConvSpec { kernel: 5, stride: 1, channels: 1 }]).is_err());
    }
}
