//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! A [`Network`] maps a point in `R^k` to a scalar. Hidden layers apply the
//! configured [`Activation`]; the output layer is affine. Gradients are
//! available with respect to the parameters ([`Network::backprop`]) and with
//! respect to the input ([`Network::grad_input`]). Both use the convention
//! that the ReLU derivative at exactly zero is zero.
//!
//! The pointwise routines are the reference semantics. [`Network::forward_tape`]
//! evaluates many points at once through a GEMM kernel and is what the
//! training loop uses.

mod adam;
mod batch;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use batch::BatchTape;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by network construction, evaluation and optimization.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient entry in layer {layer}; optimizer step aborted")]
    NonFiniteGradient { layer: usize },
    #[error("non-finite parameter in layer {layer}")]
    NonFiniteParameter { layer: usize },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(NnError::InvalidArchitecture(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

/// Dense MLP `u(x; θ)` with scalar output.
///
/// Layer `l` holds an `out × in` row-major weight matrix and a bias vector of
/// length `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_dims: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(NnError::InvalidArchitecture(
            "need at least an input and an output dimension".into(),
        ));
    }
    if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
        return Err(NnError::InvalidArchitecture(format!(
            "layer {pos} has zero width"
        )));
    }
    let out = *layer_dims.last().expect("len checked");
    if out != 1 {
        return Err(NnError::InvalidArchitecture(format!(
            "output dimension must be 1, got {out}"
        )));
    }
    Ok(())
}

impl Network {
    /// He-initialized network: weights `N(0, 2/fan_in)`, biases zero.
    ///
    /// `layer_dims` lists the input dimension, the hidden widths and the
    /// output dimension, which must be 1. An empty hidden list yields an
    /// affine model.
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Network with every parameter set to zero.
    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|p| vec![0.0; p[0] * p[1]]).collect();
        let biases = layer_dims.windows(2).map(|p| vec![0.0; p[1]]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit row-major parameters.
    pub fn from_parameters(
        layer_dims: &[usize],
        activation: Activation,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(NnError::InvalidArchitecture(format!(
                "expected {layers} weight and bias arrays, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for (l, pair) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != pair[0] * pair[1] {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {l} weights: expected {}x{} entries, got {}",
                    pair[1],
                    pair[0],
                    weights[l].len()
                )));
            }
            if biases[l].len() != pair[1] {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {l} biases: expected {}, got {}",
                    pair[1],
                    biases[l].len()
                )));
            }
            if !weights[l].iter().chain(&biases[l]).all(|v| v.is_finite()) {
                return Err(NnError::NonFiniteParameter { layer: l });
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Number of affine layers (hidden layers plus the output layer).
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Row-major `out × in` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Flattened parameters: per layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`Network::parameters`].
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(NnError::DimensionMismatch {
                expected: self.num_parameters(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Runs the network on `x`, keeping every pre-activation and activation.
    ///
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    fn trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let input = &acts[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + self.biases[l][o]
                })
                .collect();
            let a = if l + 1 < layers {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    /// `u(x; θ)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (_, acts) = self.trace(x);
        Ok(acts.last().expect("at least one layer")[0])
    }

    /// Reverse sweep from the output seeded with `upstream`. Returns the
    /// parameter gradient and the gradient with respect to the input.
    fn reverse(&self, x: &[f64], upstream: f64) -> (GradientSet, Vec<f64>) {
        let (pre, acts) = self.trace(x);
        let layers = self.num_layers();
        let mut grads = GradientSet::zeros_for(self);
        let mut delta = vec![upstream];
        for l in (0..layers).rev() {
            let fan_in = self.layer_dims[l];
            let input = &acts[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                for (i, &a) in input.iter().enumerate() {
                    gw[o * fan_in + i] = d * a;
                }
            }
            grads.biases[l].copy_from_slice(&delta);
            let w = &self.weights[l];
            let mut back = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (b, &wv) in back.iter_mut().zip(row) {
                    *b += d * wv;
                }
            }
            if l > 0 {
                for ((b, &z), &a) in back.iter_mut().zip(&pre[l - 1]).zip(&acts[l]) {
                    *b *= self.activation.derivative(z, a);
                }
            }
            delta = back;
        }
        (grads, delta)
    }

    /// `upstream · ∂u(x;θ)/∂θ`.
    pub fn backprop(&self, x: &[f64], upstream: f64) -> Result<GradientSet> {
        self.check_input(x)?;
        Ok(self.reverse(x, upstream).0)
    }

    /// `∇_x u(x;θ)`.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.reverse(x, 1.0).1)
    }

    /// Smallest pre-activation magnitude over the hidden layers at `x`.
    ///
    /// Finite-difference checks of ReLU networks are only meaningful when
    /// this is bounded away from zero.
    pub fn min_hidden_preactivation(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (pre, _) = self.trace(x);
        let hidden = pre.len() - 1;
        Ok(pre[..hidden]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }
}

/// Gradient with respect to every parameter of a [`Network`], laid out like
/// the network's own weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_for(net: &Network) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Same flattening order as [`Network::parameters`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        self.weights.len() == net.weights.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    /// `self += scale · other`.
    ///
    /// # Panics
    /// If the two sets belong to different architectures.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        assert_eq!(self.weights.len(), other.weights.len(), "gradient shape mismatch");
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(other.weights.iter().chain(&other.biases))
        {
            assert_eq!(a.len(), b.len(), "gradient shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        (0..self.weights.len()).find(|&l| {
            !self.weights[l]
                .iter()
                .chain(&self.biases[l])
                .all(|v| v.is_finite())
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}
