use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Activation, DenseCache, DenseNet, Parameters, Validate};
use crate::error::{Error, Result};

/// Subnets fed with scaled copies of the input; outputs are concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleNet {
    pub scales: Vec<f64>,
    pub subnets: Vec<DenseNet>,
}

#[derive(Debug, Clone)]
pub struct MultiscaleCache {
    subnets: Vec<DenseCache>,
}

impl MultiscaleNet {
    /// One subnet of shape `sizes` per scale, initialized in scale order.
    pub fn init<R: Rng + ?Sized>(
        scales: &[f64],
        sizes: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        check_scales(scales)?;
        let subnets = scales
            .iter()
            .map(|_| DenseNet::init(sizes, activation, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scales: scales.to_vec(),
            subnets,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.subnets[0].input_dim()
    }

    pub fn subnet_output_dim(&self) -> usize {
        self.subnets[0].output_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.subnet_output_dim() * self.subnets.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let outs = self
            .subnets
            .par_iter()
            .zip(&self.scales)
            .map(|(net, &scale)| net.predict((&x * scale).view()))
            .collect::<Result<Vec<_>>>()?;
        Ok(join(&outs))
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MultiscaleCache)> {
        let results = self
            .subnets
            .par_iter()
            .zip(&self.scales)
            .map(|(net, &scale)| net.forward_batch((&x * scale).view()))
            .collect::<Result<Vec<_>>>()?;
        let (outs, caches): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        Ok((join(&outs), MultiscaleCache { subnets: caches }))
    }

    pub fn backward(
        &self,
        cache: &MultiscaleCache,
        grad_out: Array2<f64>,
        want_input_grad: bool,
    ) -> (MultiscaleNet, Option<Array2<f64>>) {
        let width = self.subnet_output_dim();
        let results: Vec<_> = self
            .subnets
            .par_iter()
            .zip(&cache.subnets)
            .enumerate()
            .map(|(i, (net, c))| {
                let block = grad_out.slice(s![.., i * width..(i + 1) * width]).to_owned();
                net.backward(c, block, want_input_grad)
            })
            .collect();
        let mut input_grad: Option<Array2<f64>> = None;
        let mut grads = Vec::with_capacity(results.len());
        for ((g, gin), &scale) in results.into_iter().zip(&self.scales) {
            grads.push(g);
            if let Some(gin) = gin {
                match input_grad.as_mut() {
                    Some(acc) => acc.scaled_add(scale, &gin),
                    None => input_grad = Some(gin * scale),
                }
            }
        }
        (
            MultiscaleNet {
                scales: self.scales.clone(),
                subnets: grads,
            },
            input_grad,
        )
    }
}

fn join(outs: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = outs.iter().map(|a| a.view()).collect();
    concatenate(Axis(1), &views).expect("subnet outputs share their row count")
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::invalid("a multiscale network needs at least one scale"));
    }
    if let Some(bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!("scales must be positive and finite, got {bad}")));
    }
    Ok(())
}

impl Parameters for MultiscaleNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for net in &self.subnets {
            net.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for net in &mut self.subnets {
            net.visit_mut(f);
        }
    }
}

impl Validate for MultiscaleNet {
    fn validate(&self) -> Result<()> {
        check_scales(&self.scales)?;
        if self.scales.len() != self.subnets.len() {
            return Err(Error::invalid(format!(
                "{} scales for {} subnets",
                self.scales.len(),
                self.subnets.len()
            )));
        }
        for net in &self.subnets {
            net.validate()?;
            if net.input_dim() != self.subnets[0].input_dim() || net.output_dim() != self.subnets[0].output_dim() {
                return Err(Error::invalid("subnets must share input and output arity"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::neural::Dense;

    #[test]
    fn unit_scales_match_plain_subnets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ms = MultiscaleNet::init(&[1.0, 1.0, 1.0], &[2, 4, 3], Activation::Sin, &mut rng).unwrap();
        let x = [0.3, -0.8];
        let joined: Vec<f64> = ms.subnets.iter().flat_map(|n| n.forward(&x).unwrap()).collect();
        assert_eq!(ms.forward(&x).unwrap(), joined);
        assert_eq!(ms.output_dim(), 9);
    }

    #[test]
    fn scale_multiplies_input() {
        let sine = DenseNet {
            layers: vec![
                Dense { weights: array![[1.0]], bias: array![0.0] },
                Dense { weights: array![[1.0]], bias: array![0.0] },
            ],
            activation: Activation::Sin,
        };
        let ms = MultiscaleNet { scales: vec![7.0], subnets: vec![sine] };
        let y = ms.forward(&[0.2]).unwrap();
        assert!((y[0] - (7.0f64 * 0.2).sin()).abs() < 1e-15);
    }

    #[test]
    fn input_gradient_carries_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ms = MultiscaleNet::init(&[1.0, 3.0], &[1, 4, 1], Activation::Sin, &mut rng).unwrap();
        let x = array![[0.4]];
        let (_, cache) = ms.forward_batch(x.view()).unwrap();
        // Gradient of the second output only.
        let (_, gin) = ms.backward(&cache, array![[0.0, 1.0]], true);
        let h = 1e-6;
        let f = |v: f64| ms.forward(&[v]).unwrap()[1];
        let fd = (f(0.4 + h) - f(0.4 - h)) / (2.0 * h);
        let analytic = gin.unwrap()[[0, 0]];
        assert!((analytic - fd).abs() < 1e-7 * (1.0 + fd.abs()));
        let (_, plain_cache) = ms.subnets[1].forward_batch(array![[1.2]].view()).unwrap();
        let (_, plain) = ms.subnets[1].backward(&plain_cache, array![[1.0]], true);
        assert!((analytic - 3.0 * plain.unwrap()[[0, 0]]).abs() < 1e-14);
    }

    #[test]
    fn invalid_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(MultiscaleNet::init(&[], &[1, 2], Activation::Sin, &mut rng).is_err());
        assert!(MultiscaleNet::init(&[1.0, -2.0], &[1, 2], Activation::Sin, &mut rng).is_err());
    }
}
