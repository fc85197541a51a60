//! Sparse distributed memory, used as a reference point for the gradient
//! write. A fixed ±1 address matrix selects the locations within Hamming
//! radius `delta` of a key; writes add the value to every selected
//! location's content column.
//!
//! Seen as a two-layer network (address layer with a binary activation,
//! linear content layer), a gradient write on the content layer performs
//! the same additive update plus a correction that removes what is
//! already stored: `C + beta * 2 (v - v_hat) a^T`.

use rand::Rng;

use super::{Activation, MemoryLayout, MemoryParams};
use crate::autodiff::{Real, Tensor, TensorError};

#[derive(Clone, Debug)]
pub struct SdmState<T: Real> {
    /// `[locations, key_dim]`, entries in {-1, +1}. Never modified.
    address: Tensor<T>,
    /// `[value_dim, locations]`.
    pub content: Tensor<T>,
    pub delta: f64,
}

impl<T: Real> SdmState<T> {
    pub fn new(address: Tensor<T>, value_dim: usize, delta: f64) -> Result<Self, TensorError> {
        if address.shape().len() != 2 || !address.data().iter().all(|&v| v == T::one() || v == -T::one()) {
            return Err(TensorError::InvalidArgument {
                op: "SdmState::new",
                msg: "address must be a ±1 matrix".into(),
            });
        }
        let locations = address.shape()[0];
        Ok(Self {
            address,
            content: Tensor::zeros(&[value_dim, locations]),
            delta,
        })
    }

    pub fn random<R: Rng>(locations: usize, key_dim: usize, value_dim: usize, delta: f64, rng: &mut R) -> Self {
        let a = (0..locations * key_dim)
            .map(|_| if rng.gen::<bool>() { T::one() } else { -T::one() })
            .collect();
        Self::new(Tensor::new(a, &[locations, key_dim]).unwrap(), value_dim, delta).unwrap()
    }

    pub fn address(&self) -> &Tensor<T> {
        &self.address
    }

    pub fn key_dim(&self) -> usize {
        self.address.shape()[1]
    }

    pub fn locations(&self) -> usize {
        self.address.shape()[0]
    }

    /// Binary activation over locations, `[locations]`.
    pub fn activation(&self, key: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let n = self.key_dim();
        let m = self.address.matmul(&key.reshape(&[n, 1])?)?;
        let a = m
            .data()
            .iter()
            .map(|&mi| {
                if 0.5 * (n as f64 - mi.as_f64()) <= self.delta {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        Tensor::new(a, &[self.locations()])
    }

    /// `C a`, `[value_dim]`.
    pub fn read(&self, key: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let a = self.activation(key)?;
        let out = self.content.matmul(&a.reshape(&[self.locations(), 1])?)?;
        out.reshape(&[self.content.shape()[0]])
    }

    /// `C <- C + v a^T`.
    pub fn write(&self, key: &Tensor<T>, value: &Tensor<T>) -> Result<Self, TensorError> {
        let a = self.activation(key)?;
        let dv = self.content.shape()[0];
        if value.numel() != dv {
            return Err(TensorError::ShapeMismatch {
                op: "sdm write",
                left: vec![dv],
                right: value.shape().to_vec(),
            });
        }
        let outer = value.reshape(&[dv, 1])?.matmul(&a.reshape(&[1, self.locations()])?)?;
        Ok(Self {
            address: self.address.clone(),
            content: self.content.add(&outer)?,
            delta: self.delta,
        })
    }

    /// The same memory as a two-layer network: address layer with the
    /// binary activation, then a linear content layer. Batch of one.
    pub fn as_memory(&self) -> MemoryParams<T> {
        let layout = MemoryLayout {
            widths: vec![self.key_dim(), self.locations(), self.content.shape()[0]],
            activations: vec![Activation::Threshold { delta: self.delta }, Activation::Identity],
        };
        MemoryParams {
            layers: vec![self.address.expand(0, 1).unwrap(), self.content.expand(0, 1).unwrap()],
            activations: layout.activations,
        }
    }
}

/// Functional form of [`SdmState::write`].
pub fn sdm_reference_update<T: Real>(
    sdm: &SdmState<T>,
    key: &Tensor<T>,
    value: &Tensor<T>,
) -> Result<SdmState<T>, TensorError> {
    sdm.write(key, value)
}
