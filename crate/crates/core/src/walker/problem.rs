use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::BoxDomain;
use crate::field::ClosedForm;

type DriftFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
type ForceFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
type PlainForceFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
enum Force {
    Plain(Arc<PlainForceFn>),
    Coupled(Arc<ForceFn>),
}
type BoundaryFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Elliptic problem `½Δu + V(x,u)·∇u − G(x,u) = 0` in a box with Dirichlet
/// data `u = g` on the boundary.
///
/// Absent drift or force terms are zero. `V` and `G` may be declared as
/// depending on `u`; only then does the walker engine evaluate the frozen
/// network along the path.
#[derive(Clone)]
pub struct PdeProblem {
    domain: BoxDomain,
    drift: Option<Arc<DriftFn>>,
    drift_uses_u: bool,
    force: Option<Force>,
    boundary: Arc<BoundaryFn>,
    exact: Option<ClosedForm>,
    wavenumber: Option<u32>,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("domain", &self.domain)
            .field("drift", &self.drift.is_some())
            .field("force", &self.force.is_some())
            .field("exact", &self.exact.is_some())
            .field("wavenumber", &self.wavenumber)
            .finish()
    }
}

impl PdeProblem {
    /// `Δu = 0` with `g ≡ 0`.
    pub fn laplace(domain: BoxDomain) -> Self {
        Self {
            domain,
            drift: None,
            drift_uses_u: false,
            force: None,
            boundary: Arc::new(|_| 0.0),
            exact: None,
            wavenumber: None,
        }
    }

    /// `Δu = f` on `(−0.5, 0.5)²` with `g ≡ 0` and solution
    /// `u = sin(2mπx₁) sin(2mπx₂)`.
    ///
    /// `f` is taken as `Δu = −2(2mπ)² sin(2mπx₁) sin(2mπx₂)` so that the stated
    /// `u` really solves the problem; the force term is `G = ½f`.
    pub fn poisson(m: u32) -> Self {
        let w = 2.0 * PI * m as f64;
        let half_f = move |x: &[f64]| -w * w * (w * x[0]).sin() * (w * x[1]).sin();
        Self::laplace(BoxDomain::unit_square())
            .with_force(half_f)
            .with_exact(ClosedForm::sine_product(m))
            .with_wavenumber(m)
    }

    pub fn with_boundary(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Arc::new(g);
        self
    }

    /// Drift depending on position only.
    pub fn with_drift(mut self, v: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(move |x, _u, out| v(x, out)));
        self.drift_uses_u = false;
        self
    }

    pub fn with_constant_drift(self, v: Vec<f64>) -> Self {
        self.with_drift(move |_, out| out.copy_from_slice(&v))
    }

    /// Drift `V(x, u(x))`.
    pub fn with_coupled_drift(
        mut self,
        v: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.drift = Some(Arc::new(v));
        self.drift_uses_u = true;
        self
    }

    /// Force depending on position only.
    pub fn with_force(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.force = Some(Force::Plain(Arc::new(g)));
        self
    }

    /// Force `G(x, u(x))`.
    pub fn with_coupled_force(
        mut self,
        g: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.force = Some(Force::Coupled(Arc::new(g)));
        self
    }

    pub fn with_exact(mut self, exact: ClosedForm) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn with_wavenumber(mut self, m: u32) -> Self {
        self.wavenumber = Some(m);
        self
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    pub fn has_force(&self) -> bool {
        self.force.is_some()
    }

    /// Whether `V` or `G` read the value of `u`.
    pub fn needs_u(&self) -> bool {
        (self.drift.is_some() && self.drift_uses_u) || matches!(self.force, Some(Force::Coupled(_)))
    }

    /// Writes `V(x, u)` into `out`; zero when there is no drift.
    pub fn drift_at(&self, x: &[f64], u: f64, out: &mut [f64]) {
        match &self.drift {
            Some(v) => v(x, u, out),
            None => out.fill(0.0),
        }
    }

    /// `G(x, u)`; `u` is ignored unless the force was declared coupled.
    #[inline]
    pub fn force_at(&self, x: &[f64], u: f64) -> f64 {
        match &self.force {
            None => 0.0,
            Some(Force::Plain(g)) => g(x),
            Some(Force::Coupled(g)) => g(x, u),
        }
    }

    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        (self.boundary)(x)
    }

    pub fn exact(&self) -> Option<&ClosedForm> {
        self.exact.as_ref()
    }

    pub fn wavenumber(&self) -> Option<u32> {
        self.wavenumber
    }
}
