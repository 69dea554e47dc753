use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Parameters, Validate};
use crate::error::{Error, Result};

/// One affine layer, `Z = X·W + b` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Fully connected network; hidden layers use `activation`, the last layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes need at least two positive entries, got {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Dense::fan_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::LengthMismatch {
                what: "network input",
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    /// Single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Batched evaluation without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let act = self.activation;
        let mut a = self.layers[0].affine(&x);
        for layer in &self.layers[1..] {
            a.mapv_inplace(|z| act.apply(z));
            a = layer.affine(&a.view());
        }
        Ok(a)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, DenseCache)> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut current = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&current.view());
            inputs.push(current);
            if i == last {
                return Ok((z, DenseCache { inputs, pre }));
            }
            let act = self.activation;
            current = z.mapv(|v| act.apply(v));
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Returns parameter gradients and, if requested, the gradient w.r.t. the input batch.
    pub fn backward(
        &self,
        cache: &DenseCache,
        grad_out: Array2<f64>,
        want_input_grad: bool,
    ) -> (DenseNet, Option<Array2<f64>>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            grads.push(Dense {
                weights: cache.inputs[i].t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i == 0 {
                if want_input_grad {
                    input_grad = Some(delta.dot(&layer.weights.t()));
                }
                break;
            }
            let mut upstream = delta.dot(&layer.weights.t());
            let act = self.activation;
            upstream.zip_mut_with(&cache.pre[i - 1], |g, &z| *g *= act.derivative(z));
            delta = upstream;
        }
        grads.reverse();
        (
            DenseNet {
                layers: grads,
                activation: self.activation,
            },
            input_grad,
        )
    }
}

impl Parameters for DenseNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for layer in &self.layers {
            f(layer.weights.as_slice_memory_order().expect("contiguous weights"));
            f(layer.bias.as_slice_memory_order().expect("contiguous bias"));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for layer in &mut self.layers {
            f(layer.weights.as_slice_memory_order_mut().expect("contiguous weights"));
            f(layer.bias.as_slice_memory_order_mut().expect("contiguous bias"));
        }
    }
}

impl Validate for DenseNet {
    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.fan_in() == 0 || layer.fan_out() == 0 {
                return Err(Error::invalid(format!("layer {i} has an empty dimension")));
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::invalid(format!("layer {i} bias does not match its width")));
            }
            if !layer.weights.is_standard_layout() {
                return Err(Error::invalid(format!("layer {i} weights are not row-major")));
            }
            if i > 0 && self.layers[i - 1].fan_out() != layer.fan_in() {
                return Err(Error::invalid(format!("layer {i} does not chain with layer {}", i - 1)));
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }
}
