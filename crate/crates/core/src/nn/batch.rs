//! Batched forward/backward passes over row-major point matrices.

use super::{GradientSet, Network, NnError, Result};

/// Activations recorded by [`Network::forward_tape`], ready for a reverse
/// sweep with per-point upstream seeds.
#[derive(Debug, Clone)]
pub struct BatchTape<'a> {
    net: &'a Network,
    n: usize,
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

/// `c = a · b` for row-major operands described by explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the debug assertions above describe the extents touched by the
    // kernel; every call site passes buffers sized exactly for these shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Network {
    /// Forward pass over `points` (`n × input_dim`, row-major) that keeps the
    /// intermediate values for [`BatchTape::backward`].
    pub fn forward_tape(&self, points: &[f64]) -> Result<BatchTape<'_>> {
        let k = self.input_dim();
        if points.len() % k != 0 {
            return Err(NnError::DimensionMismatch {
                expected: k,
                got: points.len() % k,
            });
        }
        let n = points.len() / k;
        let layers = self.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(points.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let mut z = vec![0.0; n * fan_out];
            gemm(
                n,
                fan_in,
                fan_out,
                &acts[l],
                (fan_in, 1),
                &self.weights[l],
                (1, fan_in),
                &mut z,
            );
            let bias = &self.biases[l];
            for row in z.chunks_exact_mut(fan_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let a = if l + 1 < layers {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Ok(BatchTape {
            net: self,
            n,
            pre,
            acts,
        })
    }
}

/// Rows per block in [`Network::forward_batch`]; keeps the activations of a
/// block in cache.
const BLOCK: usize = 256;

impl Network {
    /// Batched forward pass over `points` (row-major, `n × input_dim`)
    /// without recording a tape.
    pub fn forward_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let k = self.input_dim();
        if points.len() % k != 0 {
            return Err(NnError::DimensionMismatch {
                expected: k,
                got: points.len() % k,
            });
        }
        let layers = self.num_layers();
        let widest = *self.layer_dims.iter().max().expect("at least two layers");
        let mut cur = vec![0.0; BLOCK * widest];
        let mut next = vec![0.0; BLOCK * widest];
        let mut out = Vec::with_capacity(points.len() / k);
        for block in points.chunks(BLOCK * k) {
            let m = block.len() / k;
            for l in 0..layers {
                let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
                let src: &[f64] = if l == 0 { block } else { &cur[..m * fan_in] };
                let z = &mut next[..m * fan_out];
                gemm(m, fan_in, fan_out, src, (fan_in, 1), &self.weights[l], (1, fan_in), z);
                let bias = &self.biases[l];
                let hidden = l + 1 < layers;
                for row in z.chunks_exact_mut(fan_out) {
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += b;
                        if hidden {
                            *v = self.activation.apply(*v);
                        }
                    }
                }
                std::mem::swap(&mut cur, &mut next);
            }
            out.extend_from_slice(&cur[..m]);
        }
        Ok(out)
    }
}

impl BatchTape<'_> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Network outputs, one per point.
    pub fn outputs(&self) -> &[f64] {
        self.acts.last().expect("tape has an output layer")
    }

    pub fn into_outputs(mut self) -> Vec<f64> {
        self.acts.pop().expect("tape has an output layer")
    }

    /// `Σ_p upstream[p] · ∂u(x_p;θ)/∂θ`.
    pub fn backward(&self, upstream: &[f64]) -> Result<GradientSet> {
        if upstream.len() != self.n {
            return Err(NnError::DimensionMismatch {
                expected: self.n,
                got: upstream.len(),
            });
        }
        let net = self.net;
        let dims = &net.layer_dims;
        let mut grads = GradientSet::zeros_for(net);
        let mut delta = upstream.to_vec();
        for l in (0..net.num_layers()).rev() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            gemm(
                fan_out,
                self.n,
                fan_in,
                &delta,
                (1, fan_out),
                &self.acts[l],
                (fan_in, 1),
                &mut grads.weights[l],
            );
            let gb = &mut grads.biases[l];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let mut back = vec![0.0; self.n * fan_in];
            gemm(
                self.n,
                fan_out,
                fan_in,
                &delta,
                (fan_out, 1),
                &net.weights[l],
                (fan_in, 1),
                &mut back,
            );
            for ((b, &z), &a) in back.iter_mut().zip(&self.pre[l - 1]).zip(&self.acts[l]) {
                *b *= net.activation.derivative(z, a);
            }
            delta = back;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::super::Activation;
    use super::*;

    fn points(n: usize, k: usize) -> Vec<f64> {
        (0..n * k).map(|i| ((i as f64) * 0.37).sin() * 0.5).collect()
    }

    #[test]
    fn batch_matches_pointwise() {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = Network::new(&[2, 16, 16, 1], act, 11).unwrap();
            let xs = points(600, 2);
            let batch = net.forward_batch(&xs).unwrap();
            assert_eq!(batch.len(), 600);
            assert_eq!(batch, net.forward_tape(&xs).unwrap().into_outputs());
            for (x, &b) in xs.chunks_exact(2).zip(&batch) {
                let p = net.forward(x).unwrap();
                assert!((p - b).abs() <= 1e-13 * (1.0 + p.abs()), "{p} vs {b}");
            }
        }
    }

    #[test]
    fn batch_backward_is_sum_of_pointwise() {
        let net = Network::new(&[2, 8, 8, 1], Activation::Tanh, 4).unwrap();
        let xs = points(9, 2);
        let up: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let tape = net.forward_tape(&xs).unwrap();
        let g = tape.backward(&up).unwrap();
        let mut expect = GradientSet::zeros_for(&net);
        for (x, &u) in xs.chunks_exact(2).zip(&up) {
            expect.add_scaled(&net.backprop(x, u).unwrap(), 1.0);
        }
        for (a, b) in g.to_flat().iter().zip(expect.to_flat()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn ragged_input_is_rejected() {
        let net = Network::new(&[2, 4, 1], Activation::Relu, 0).unwrap();
        assert!(net.forward_tape(&[1.0, 2.0, 3.0]).is_err());
        let tape = net.forward_tape(&[1.0, 2.0]).unwrap();
        assert!(tape.backward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn empty_batch() {
        let net = Network::new(&[2, 4, 1], Activation::Relu, 0).unwrap();
        let tape = net.forward_tape(&[]).unwrap();
        assert!(tape.is_empty());
        assert_eq!(tape.backward(&[]).unwrap().max_abs(), 0.0);
    }
}
