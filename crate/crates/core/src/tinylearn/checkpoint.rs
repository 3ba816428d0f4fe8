//! Model checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```json
//! {
//!   "format": "adacong-densenet",
//!   "version": 1,
//!   "activation": "relu",
//!   "dims": [32, 64, 10],
//!   "params": [ ... ]
//! }
//! ```
//!
//! `dims` lists layer widths from input to output. `params` is flat: for each
//! layer in order, its `outputs x inputs` weights in row-major order followed
//! by its `outputs` biases.

use serde::{Deserialize, Serialize};

use super::net::{Activation, DenseNet, Layer};
use crate::error::{Error, Result};

pub const FORMAT: &str = "adacong-densenet";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub activation: Activation,
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_net(net: &DenseNet) -> Self {
        let params = net
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            activation: net.activation,
            dims: net.dims(),
            params,
        }
    }

    pub fn into_net(self) -> Result<DenseNet> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.dims.len() < 2 {
            return Err(Error::Checkpoint("need at least two widths".into()));
        }
        let expected: usize = self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if expected != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "dims imply {expected} parameters, found {}",
                self.params.len()
            )));
        }
        let mut rest = self.params.as_slice();
        let mut layers = Vec::with_capacity(self.dims.len() - 1);
        for w in self.dims.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let (weights, tail) = rest.split_at(inputs * outputs);
            let (biases, tail) = tail.split_at(outputs);
            layers.push(Layer {
                inputs,
                outputs,
                weights: weights.to_vec(),
                biases: biases.to_vec(),
            });
            rest = tail;
        }
        DenseNet::from_layers(layers, self.activation)
    }
}

pub fn to_json(net: &DenseNet) -> String {
    serde_json::to_string(&Checkpoint::from_net(net)).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<DenseNet> {
    let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    ckpt.into_net()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn roundtrip_is_exact() {
        let net = DenseNet::new(&[4, 3, 2], Activation::Relu, &mut stream(2, Stream::Init)).unwrap();
        let back = from_json(&to_json(&net)).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn layout_is_documented_order() {
        let net = DenseNet::from_layers(
            vec![Layer { inputs: 2, outputs: 1, weights: vec![1.0, 2.0], biases: vec![3.0] }],
            Activation::None,
        )
        .unwrap();
        let c = Checkpoint::from_net(&net);
        assert_eq!(c.params, vec![1.0, 2.0, 3.0]);
        assert_eq!(c.dims, vec![2, 1]);
    }

    #[test]
    fn rejects_bad_documents() {
        let ok = r#"{"format":"adacong-densenet","version":1,"activation":"none","dims":[2,1],"params":[1,2,3]}"#;
        assert!(from_json(ok).is_ok());
        let short = ok.replace("[1,2,3]", "[1,2]");
        assert!(from_json(&short).is_err());
        let version = ok.replace("\"version\":1", "\"version\":9");
        assert!(from_json(&version).is_err());
        let extra = ok.replace("\"params\"", "\"extra\":0,\"params\"");
        assert!(from_json(&extra).is_err());
    }
}
