//! Scalar fields `R^k → R`: the common interface for networks and
//! closed-form test functions wherever a `u` is evaluated.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::nn::Network;

/// A function `u: R^k → R` that can be evaluated pointwise or in batches.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    /// # Panics
    /// Implementations may panic if `x.len() != self.dim()`.
    fn value(&self, x: &[f64]) -> f64;

    /// Evaluates every row of `points` (`n × dim`, row-major) into `out`.
    fn values(&self, points: &[f64], out: &mut [f64]) {
        for (p, o) in points.chunks_exact(self.dim()).zip(out.iter_mut()) {
            *o = self.value(p);
        }
    }

    /// `∇u(x)`. The default is a central difference with step `1e-6·max(1,|x_i|)`.
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = self.value(&probe);
            probe[i] = x[i] - h;
            let down = self.value(&probe);
            probe[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
    }
}

impl ScalarField for Network {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.forward(x).expect("point dimension matches network input")
    }

    fn values(&self, points: &[f64], out: &mut [f64]) {
        let v = self
            .forward_batch(points)
            .expect("point dimension matches network input");
        out.copy_from_slice(&v);
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = self.grad_input(x).expect("point dimension matches network input");
        out.copy_from_slice(&g);
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn values(&self, points: &[f64], out: &mut [f64]) {
        (**self).values(points, out)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Closure-backed field with an optional analytic gradient.
#[derive(Clone)]
pub struct ClosedForm {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForm")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ClosedForm {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c).with_gradient(|_, g| g.fill(0.0))
    }

    /// `u(x) = a·x`.
    pub fn linear(a: Vec<f64>) -> Self {
        let dim = a.len();
        let grad = a.clone();
        Self::new(dim, move |x| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum())
            .with_gradient(move |_, g| g.copy_from_slice(&grad))
    }

    /// `u(x) = |x|²`.
    pub fn squared_norm(dim: usize) -> Self {
        Self::new(dim, |x| x.iter().map(|v| v * v).sum()).with_gradient(|x, g| {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = 2.0 * xi;
            }
        })
    }

    /// `u(x) = sin(2mπx₁)·sin(2mπx₂)`.
    pub fn sine_product(m: u32) -> Self {
        let w = 2.0 * PI * m as f64;
        Self::new(2, move |x| (w * x[0]).sin() * (w * x[1]).sin()).with_gradient(move |x, g| {
            let (s1, c1) = (w * x[0]).sin_cos();
            let (s2, c2) = (w * x[1]).sin_cos();
            g[0] = w * c1 * s2;
            g[1] = w * s1 * c2;
        })
    }
}

impl ScalarField for ClosedForm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.gradient {
            Some(g) => g(x, out),
            None => FdOnly(self).gradient(x, out),
        }
    }
}

/// Forces the default finite-difference gradient.
struct FdOnly<'a>(&'a ClosedForm);

impl ScalarField for FdOnly<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.0.value)(x)
    }
}
