//! JSON checkpoint format.
//!
//! ```json
//! {"format":"dflm-network","version":1,"layer_dims":[2,64,1],
//!  "activation":"relu","weights":[[...],[...]],"biases":[[...],[...]]}
//! ```
//!
//! Weights are row-major `out × in`. Floats are written in shortest
//! round-trip form and parsed with correct rounding, so save/load is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Network, NnError, Result};

const FORMAT_TAG: &str = "dflm-network";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            layer_dims: self.layer_dims.clone(),
            activation: self.activation,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        serde_json::to_string(&doc).expect("finite parameters always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| NnError::Format(e.to_string()))?;
        if doc.format != FORMAT_TAG {
            return Err(NnError::Format(format!(
                "unexpected format tag `{}`",
                doc.format
            )));
        }
        if doc.version != FORMAT_VERSION {
            return Err(NnError::Format(format!(
                "unsupported checkpoint version {}",
                doc.version
            )));
        }
        Network::from_parameters(&doc.layer_dims, doc.activation, doc.weights, doc.biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            seed in any::<u64>(),
            hidden in proptest::collection::vec(1usize..6, 0..3),
            tanh in any::<bool>(),
            scale in -1e6f64..1e6,
        ) {
            let mut dims = vec![2];
            dims.extend(hidden);
            dims.push(1);
            let act = if tanh { Activation::Tanh } else { Activation::Relu };
            let mut net = Network::new(&dims, act, seed).unwrap();
            let p: Vec<f64> = net.parameters().iter().map(|v| v * scale).collect();
            net.set_parameters(&p).unwrap();
            let back = Network::from_json(&net.to_json()).unwrap();
            let bits = |n: &Network| n.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&net));
            prop_assert_eq!(back.layer_dims(), net.layer_dims());
            prop_assert_eq!(back.activation(), net.activation());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Network::new(&[2, 5, 5, 1], Activation::Tanh, 77).unwrap();
        net.save(&path).unwrap();
        assert_eq!(Network::load(&path).unwrap(), net);
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(Network::from_json("{}").is_err());
        let net = Network::new(&[1, 1], Activation::Relu, 0).unwrap();
        let tampered = net.to_json().replace("dflm-network", "other");
        assert!(matches!(Network::from_json(&tampered), Err(NnError::Format(_))));
        let wrong_shape = net.to_json().replace("\"layer_dims\":[1,1]", "\"layer_dims\":[2,1]");
        assert!(Network::from_json(&wrong_shape).is_err());
    }
}
