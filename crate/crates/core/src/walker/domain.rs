use serde::{Deserialize, Serialize};

use super::WalkerError;

/// Axis-aligned box `Π (lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Default for BoxDomain {
    fn default() -> Self {
        Self::unit_square()
    }
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, WalkerError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(WalkerError::InvalidDomain(format!(
                "corner dimensions {} and {} must agree and be positive",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(WalkerError::InvalidDomain(
                "lower corner must be strictly below upper corner".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `(−0.5, 0.5)²`.
    pub fn unit_square() -> Self {
        Self {
            lower: vec![-0.5, -0.5],
            upper: vec![0.5, 0.5],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l < *v && *v < *u)
    }

    /// Distance from an interior point to the nearest face.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest point of the closed box.
    pub fn clamp_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    /// The box shrunk by `margin` on every side, if anything is left.
    pub fn shrunk(&self, margin: f64) -> Option<BoxDomain> {
        let lower: Vec<f64> = self.lower.iter().map(|l| l + margin).collect();
        let upper: Vec<f64> = self.upper.iter().map(|u| u - margin).collect();
        BoxDomain::new(lower, upper).ok()
    }

    /// `(k−1)`-volume of each face, ordered `lower_0, upper_0, lower_1, …`.
    pub fn face_measures(&self) -> Vec<f64> {
        let k = self.dim();
        (0..2 * k)
            .map(|face| {
                let axis = face / 2;
                (0..k).filter(|&j| j != axis).map(|j| self.side(j)).product()
            })
            .collect()
    }
}
