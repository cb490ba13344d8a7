//! Feed-forward networks used for the observation and feature maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Tanh,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("network dims must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each affine layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }
}

/// One affine layer; `weight` is `fan_in × fan_out` so that rows map as `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Tape handles for an [`Mlp`]'s weights, in layer order.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_in, fan_out], w).expect("layer shape"),
                    bias: Tensor::zeros(&[1, fan_out]),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Dense {
                weight: Tensor::zeros(&[i, o]),
                bias: Tensor::zeros(&[1, o]),
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::dim("Mlp::from_layers", &[dims.len()], &[layers.len()]));
        }
        for ((i, o), l) in dims.iter().zip(&layers) {
            if l.weight.shape() != [*i, *o] {
                return Err(Error::dim("Mlp::from_layers", &[*i, *o], l.weight.shape()));
            }
            if l.bias.numel() != *o {
                return Err(Error::dim("Mlp::from_layers", &[1, *o], l.bias.shape()));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// Weight and bias tensors in a fixed order, with stable names.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            out.push((format!("{prefix}.{i}.bias"), &l.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::dim(
                "mlp_forward",
                &[x.rows(), self.spec.input_dim],
                x.shape(),
            ));
        }
        Ok(())
    }

    /// Forward pass on a batch of row vectors without recording anything.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.matmul(&l.weight)?.add_row(&l.bias)?;
            h = if i < last {
                match self.spec.activation {
                    Activation::Tanh => h.map(f64::tanh),
                    Activation::Relu => h.map(|v| v.max(0.0)),
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Identity => h,
                    OutputActivation::Tanh => h.map(f64::tanh),
                }
            };
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("mlp_forward"));
        }
        Ok(h)
    }

    /// Puts the weights on `tape`, as parameters when `trainable`.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        MlpVars { layers }
    }

    /// Forward pass recorded on `tape` using previously registered weights.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var> {
        self.check_input(tape.value(x))?;
        let last = vars.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            h = tape.matmul(h, w)?;
            h = tape.add_row(h, b)?;
            h = if i < last {
                match self.spec.activation {
                    Activation::Tanh => tape.tanh(h)?,
                    Activation::Relu => tape.relu(h)?,
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Identity => h,
                    OutputActivation::Tanh => tape.tanh(h)?,
                }
            };
        }
        Ok(h)
    }

    /// Collects gradients for `vars` in the order of [`Mlp::tensors_mut`].
    pub fn collect_grads(
        &self,
        grads: &mut super::tape::Gradients,
        vars: &MlpVars,
    ) -> Vec<Tensor> {
        vars.layers
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .map(|v| grads.take(v).expect("parameter gradient"))
            .collect()
    }
}
