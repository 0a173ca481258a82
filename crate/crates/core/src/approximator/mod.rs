//! Differentiable function approximators with hand-written reverse mode.
//!
//! Parameters of every module are grouped into flat blocks. Gradients, optimizer
//! state and target copies all follow the same block order, which keeps the
//! optimizer and checkpoint code independent of the network topology.

mod adam;
mod conv;
mod dense;
mod gemm;
mod target;

pub use adam::{Adam, AdamConfig, AdamState};
pub use conv::{ConvEncoder, ConvSpec, ConvTape};
pub use dense::{Activation, DenseNetwork, DenseTape, LayerSpec};
pub use target::{TargetMode, TargetPair};

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A named parameter array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Gradients laid out like [`Module::blocks`].
pub type Gradients = Vec<Vec<f64>>;

pub trait Module {
    /// Flat parameter blocks, in a fixed order.
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    /// Parameters split into named arrays for serialization.
    fn named_arrays(&self) -> Vec<NamedArray>;
    /// Inverse of [`Module::named_arrays`]; names and shapes must match.
    fn load_named_arrays(&mut self, arrays: &[NamedArray]) -> Result<()>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn zero_gradients(&self) -> Gradients {
        self.blocks().iter().map(|b| alloc::vec![0.0; b.len()]).collect()
    }

    fn l2_norm_sq(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).map(|p| p * p).sum()
    }

    /// Adds `2 * lambda * theta` to `grads` and returns `lambda * sum(theta^2)`.
    fn add_l2(&self, lambda: f64, grads: &mut Gradients) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        for (block, g) in self.blocks().into_iter().zip(grads.iter_mut()) {
            for (p, gi) in block.iter().zip(g.iter_mut()) {
                penalty += p * p;
                *gi += 2.0 * lambda * p;
            }
        }
        lambda * penalty
    }

    fn copy_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.copy_from_slice(src);
        }
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|p| p.is_finite()))
    }
}

/// Finds an array by name and checks its shape.
pub(crate) fn take_array<'a>(arrays: &'a [NamedArray], name: &str, shape: &[usize]) -> Result<&'a [f64]> {
    let a = arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| Error::Format(alloc::format!("missing array {name}")))?;
    if a.shape != shape || a.data.len() != shape.iter().product::<usize>() {
        return Err(Error::Format(alloc::format!(
            "array {name} has shape {:?}, expected {:?}",
            a.shape,
            shape
        )));
    }
    Ok(&a.data)
}

pub(crate) fn prefixed(prefix: &str, arrays: Vec<NamedArray>) -> Vec<NamedArray> {
    arrays
        .into_iter()
        .map(|mut a| {
            a.name = alloc::format!("{prefix}.{}", a.name);
            a
        })
        .collect()
}

pub(crate) fn strip_prefix(prefix: &str, arrays: &[NamedArray]) -> Vec<NamedArray> {
    let p = alloc::format!("{prefix}.");
    arrays
        .iter()
        .filter_map(|a| {
            a.name.strip_prefix(p.as_str()).map(|rest| NamedArray {
                name: rest.into(),
                shape: a.shape.clone(),
                data: a.data.clone(),
            })
        })
        .collect()
}
