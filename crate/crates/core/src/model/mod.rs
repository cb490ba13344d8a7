//! The alternator model and its data types.

pub mod coefficients;
pub mod config;
pub mod process;
pub mod trajectory;

pub use config::AlternatorConfig;
pub use process::{Alternator, ModelParams, ModelVars, NetworkConfig};
pub use trajectory::{matrix_from_csv, matrix_to_csv, Trajectory};

use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, Dense, Mlp, MlpSpec};

impl Alternator {
    /// Text that pins the config and both network layouts; its digest keys checkpoints.
    pub fn descriptor(&self) -> String {
        serde_json::json!({
            "config": self.config(),
            "otn": self.params().otn.spec(),
            "ftn": self.params().ftn.spec(),
        })
        .to_string()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .params()
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Checkpoint::new(&self.descriptor(), tensors)
    }

    /// Rebuilds a model from a checkpoint written for the same config and layout.
    pub fn from_checkpoint(config: AlternatorConfig, net: &NetworkConfig, ckpt: &Checkpoint) -> Result<Self> {
        let spec = |i, o| MlpSpec {
            input_dim: i,
            hidden_dims: net.hidden_dims.clone(),
            output_dim: o,
            activation: net.activation,
            output_activation: crate::numerics::OutputActivation::Identity,
        };
        let load = |prefix: &str, spec: MlpSpec| -> Result<Mlp> {
            let layers = (0..spec.layer_dims().len())
                .map(|i| {
                    let get = |part: &str| {
                        let name = format!("{prefix}.{i}.{part}");
                        ckpt.get(&name)
                            .cloned()
                            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))
                    };
                    Ok(Dense {
                        weight: get("weight")?,
                        bias: get("bias")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Mlp::from_layers(spec, layers)
        };
        let otn = load("otn", spec(config.feat_dim, config.obs_dim))?;
        let ftn = load("ftn", spec(config.obs_dim, config.feat_dim))?;
        let model = Alternator::new(config, ModelParams { otn, ftn })?;
        if model.to_checkpoint().digest != ckpt.digest {
            return Err(Error::format(
                "checkpoint",
                "spec digest does not match the configured model",
            ));
        }
        Ok(model)
    }
}
