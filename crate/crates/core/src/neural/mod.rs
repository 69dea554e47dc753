//! Batched dense networks with hand-written reverse-mode gradients.
//!
//! Weights are stored `in × out` so a layer evaluates `Z = X·W + b` on a
//! batch `X` with one row per item.

mod adam;
mod checkpoint;
mod dense;
mod multiscale;

pub use adam::AdamState;
pub use checkpoint::{from_json, to_json, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dense::{Dense, DenseCache, DenseNet};
pub use multiscale::{MultiscaleCache, MultiscaleNet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sin,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sin => z.sin(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative at the pre-activation `z`; `relu'(0) = 0`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sin => z.cos(),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Anything holding trainable `f64` parameters in a fixed traversal order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if flat.len() != expected {
            return Err(Error::LengthMismatch {
                what: "flat parameter vector",
                expected,
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.visit_mut(&mut |s| s.fill(0.0));
        g
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}

/// Structural checks run after deserialization.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}
