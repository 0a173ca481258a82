use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::approximator::{prefixed, strip_prefix, Activation, ConvEncoder, ConvSpec, ConvTape, DenseNetwork, DenseTape, Gradients, LayerSpec, Module, NamedArray};
use crate::envs::ObsLayout;
use crate::experience::ACTION_DIM;
use crate::{Error, Result};

/// Policy network: optional image encoder, a shared relu trunk, a tanh
/// action head and an optional linear auxiliary head on the trunk features.
///
/// Input rows follow [`ObsLayout`]: low-dimensional values, then the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    layout: ObsLayout,
    encoder: Option<ConvEncoder>,
    trunk: DenseNetwork,
    action: DenseNetwork,
    aux: Option<DenseNetwork>,
}

pub struct ActorTape {
    batch: usize,
    encoder: Option<ConvTape>,
    trunk: DenseTape,
    action: DenseTape,
    aux: Option<DenseTape>,
}

impl ActorTape {
    /// `batch x 4` actions in `[-1, 1]`.
    pub fn actions(&self) -> &[f64] {
        self.action.output()
    }

    /// `batch x aux_dim` predictions, if the network has an aux head.
    pub fn aux(&self) -> Option<&[f64]> {
        self.aux.as_ref().map(|t| t.output())
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl ActorNet {
    pub fn init<R: Rng + ?Sized>(layout: ObsLayout, hidden: &[usize], aux_dim: usize, conv: &[ConvSpec], final_scale: f64, rng: &mut R) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Parameter("actor needs at least one hidden layer".into()));
        }
        let encoder = match layout.image_size {
            Some(s) => Some(ConvEncoder::init((s, s, 3), conv, rng)?),
            None => None,
        };
        let trunk_in = layout.lowdim + encoder.as_ref().map_or(0, |e| e.output_dim());
        if trunk_in == 0 {
            return Err(Error::Parameter("actor has no inputs".into()));
        }
        let mut specs = Vec::with_capacity(hidden.len());
        let mut prev = trunk_in;
        for &h in hidden {
            specs.push(LayerSpec {
                input: prev,
                output: h,
                activation: Activation::Relu,
            });
            prev = h;
        }
        let trunk = DenseNetwork::init(&specs, 1.0, rng)?;
        let head = |out: usize, act: Activation, scale: f64, rng: &mut R| {
            DenseNetwork::init(
                &[LayerSpec {
                    input: prev,
                    output: out,
                    activation: act,
                }],
                scale,
                rng,
            )
        };
        let action = head(ACTION_DIM, Activation::Tanh, final_scale, rng)?;
        let aux = if aux_dim > 0 { Some(head(aux_dim, Activation::Identity, 1.0, rng)?) } else { None };
        Ok(Self {
            layout,
            encoder,
            trunk,
            action,
            aux,
        })
    }

    pub fn layout(&self) -> ObsLayout {
        self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layout.total()
    }

    pub fn aux_dim(&self) -> usize {
        self.aux.as_ref().map_or(0, |a| a.output_dim())
    }

    pub fn forward_batch(&self, obs: &[f64], batch: usize) -> Result<ActorTape> {
        let width = self.input_dim();
        if obs.len() != batch * width {
            return Err(Error::Shape {
                expected: batch * width,
                actual: obs.len(),
            });
        }
        let low = self.layout.lowdim;
        let (encoder, trunk_in) = match &self.encoder {
            None => (None, obs.to_vec()),
            Some(enc) => {
                let images: Vec<f64> = obs.chunks_exact(width).flat_map(|r| r[low..].iter().copied()).collect();
                let tape = enc.forward_batch(&images, batch)?;
                let feat = enc.output_dim();
                let mut x = Vec::with_capacity(batch * (low + feat));
                for (row, f) in obs.chunks_exact(width).zip(tape.output().chunks_exact(feat)) {
                    x.extend_from_slice(&row[..low]);
                    x.extend_from_slice(f);
                }
                (Some(tape), x)
            }
        };
        let trunk = self.trunk.forward_batch(&trunk_in, batch)?;
        let action = self.action.forward_batch(trunk.output(), batch)?;
        let aux = match &self.aux {
            Some(a) => Some(a.forward_batch(trunk.output(), batch)?),
            None => None,
        };
        Ok(ActorTape {
            batch,
            encoder,
            trunk,
            action,
            aux,
        })
    }

    pub fn act(&self, obs: &[f64]) -> Result<[f64; ACTION_DIM]> {
        let tape = self.forward_batch(obs, 1)?;
        let mut a = [0.0; ACTION_DIM];
        a.copy_from_slice(tape.actions());
        Ok(a)
    }

    /// Parameter gradients given loss gradients on the actions and, if
    /// present, on the aux predictions.
    pub fn backward(&self, tape: &ActorTape, d_action: &[f64], d_aux: Option<&[f64]>) -> Result<Gradients> {
        let (g_action, mut d_feat) = self.action.backward(&tape.action, d_action)?;
        let g_aux = match (&self.aux, &tape.aux, d_aux) {
            (Some(net), Some(t), Some(d)) => {
                let (g, d_in) = net.backward(t, d)?;
                for (a, b) in d_feat.iter_mut().zip(d_in) {
                    *a += b;
                }
                Some(g)
            }
            (Some(net), _, _) => Some(vec![0.0; net.param_count()]),
            _ => None,
        };
        let (g_trunk, d_in) = self.trunk.backward(&tape.trunk, &d_feat)?;
        let mut grads = Vec::with_capacity(4);
        if let (Some(enc), Some(t)) = (&self.encoder, &tape.encoder) {
            let low = self.layout.lowdim;
            let feat = enc.output_dim();
            let d_enc: Vec<f64> = d_in.chunks_exact(low + feat).flat_map(|r| r[low..].iter().copied()).collect();
            let (g_enc, _) = enc.backward(t, &d_enc)?;
            grads.push(g_enc);
        }
        grads.push(g_trunk);
        grads.push(g_action);
        if let Some(g) = g_aux {
            grads.push(g);
        }
        Ok(grads)
    }
}

impl Module for ActorNet {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = Vec::with_capacity(4);
        if let Some(e) = &self.encoder {
            b.extend(e.blocks());
        }
        b.extend(self.trunk.blocks());
        b.extend(self.action.blocks());
        if let Some(a) = &self.aux {
            b.extend(a.blocks());
        }
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = Vec::with_capacity(4);
        if let Some(e) = &mut self.encoder {
            b.extend(e.blocks_mut());
        }
        b.extend(self.trunk.blocks_mut());
        b.extend(self.action.blocks_mut());
        if let Some(a) = &mut self.aux {
            b.extend(a.blocks_mut());
        }
        b
    }

    fn named_arrays(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            out.extend(prefixed("encoder", e.named_arrays()));
        }
        out.extend(prefixed("trunk", self.trunk.named_arrays()));
        out.extend(prefixed("action", self.action.named_arrays()));
        if let Some(a) = &self.aux {
            out.extend(prefixed("aux", a.named_arrays()));
        }
        out
    }

    fn load_named_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        if let Some(e) = &mut self.encoder {
            e.load_named_arrays(&strip_prefix("encoder", arrays))?;
        }
        self.trunk.load_named_arrays(&strip_prefix("trunk", arrays))?;
        self.action.load_named_arrays(&strip_prefix("action", arrays))?;
        if let Some(a) = &mut self.aux {
            a.load_named_arrays(&strip_prefix("aux", arrays))?;
        }
        Ok(())
    }
}
