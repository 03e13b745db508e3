//! Sampling of collocation points and the empirical losses.

use rand::distr::{Distribution, Open01, Uniform};
use rand::Rng;

use super::TrainError;
use crate::field::ScalarField;
use crate::nn::{GradientSet, Network};
use crate::target::TargetMean;
use crate::walker::BoxDomain;

/// `n` i.i.d. uniform points strictly inside the box, row-major.
pub fn sample_interior<R: Rng + ?Sized>(domain: &BoxDomain, n: usize, rng: &mut R) -> Vec<f64> {
    let k = domain.dim();
    let mut pts = Vec::with_capacity(n * k);
    for _ in 0..n {
        for a in 0..k {
            let u: f64 = Open01.sample(rng);
            pts.push(domain.lower()[a] + u * domain.side(a));
        }
    }
    pts
}

/// `n` points uniform on the boundary surface: a face is picked with
/// probability proportional to its measure, then a uniform point on it.
pub fn sample_boundary<R: Rng + ?Sized>(domain: &BoxDomain, n: usize, rng: &mut R) -> Vec<f64> {
    let k = domain.dim();
    let measures = domain.face_measures();
    let total: f64 = measures.iter().sum();
    let pick = Uniform::new(0.0, total).expect("positive total face measure");
    let mut pts = Vec::with_capacity(n * k);
    for _ in 0..n {
        let mut r = pick.sample(rng);
        let mut face = measures.len() - 1;
        for (f, m) in measures.iter().enumerate() {
            if r < *m {
                face = f;
                break;
            }
            r -= m;
        }
        let axis = face / 2;
        for a in 0..k {
            if a == axis {
                pts.push(if face % 2 == 0 {
                    domain.lower()[a]
                } else {
                    domain.upper()[a]
                });
            } else {
                let u: f64 = rng.random();
                pts.push(domain.lower()[a] + u * domain.side(a));
            }
        }
    }
    pts
}

/// Mean squared residual `(1/n) Σ (out_i − target_i)²` and its gradient.
fn squared_loss(net: &Network, points: &[f64], targets: &[f64]) -> Result<(f64, GradientSet), TrainError> {
    let tape = net.forward_tape(points)?;
    if tape.len() != targets.len() {
        return Err(TrainError::SizeMismatch {
            points: tape.len(),
            targets: targets.len(),
        });
    }
    if targets.is_empty() {
        return Ok((0.0, GradientSet::zeros_for(net)));
    }
    let inv = 1.0 / targets.len() as f64;
    let residual: Vec<f64> = tape.outputs().iter().zip(targets).map(|(u, y)| u - y).collect();
    let loss = residual.iter().map(|r| r * r).sum::<f64>() * inv;
    let upstream: Vec<f64> = residual.iter().map(|r| 2.0 * r * inv).collect();
    Ok((loss, tape.backward(&upstream)?))
}

/// `(1/N_r) Σ |u(x_i; θ) − ȳ_i|²` with the targets held fixed.
pub fn interior_loss(
    net: &Network,
    points: &[f64],
    targets: &[TargetMean],
) -> Result<(f64, GradientSet), TrainError> {
    let y: Vec<f64> = targets.iter().map(|t| t.mean).collect();
    squared_loss(net, points, &y)
}

/// `(1/N_b) Σ |u(x_l; θ) − g(x_l)|²`.
pub fn boundary_loss(
    net: &Network,
    points: &[f64],
    g: impl Fn(&[f64]) -> f64,
) -> Result<(f64, GradientSet), TrainError> {
    let y: Vec<f64> = points.chunks_exact(net.input_dim()).map(g).collect();
    squared_loss(net, points, &y)
}

/// Loss value only, for fields without parameters.
pub fn residual_loss<F: ScalarField + ?Sized>(field: &F, points: &[f64], targets: &[f64]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let mut u = vec![0.0; targets.len()];
    field.values(points, &mut u);
    u.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / targets.len() as f64
}

/// `√Σ(u − u*)² / √Σu*²` over an `n × n × …` grid of the closed box.
pub fn relative_l2_error<A, B>(field: &A, exact: &B, domain: &BoxDomain, n: usize) -> f64
where
    A: ScalarField + ?Sized,
    B: ScalarField + ?Sized,
{
    let k = domain.dim();
    let total = n.pow(k as u32);
    let mut pts = Vec::with_capacity(total * k);
    for idx in 0..total {
        let mut rem = idx;
        let start = pts.len();
        pts.resize(start + k, 0.0);
        for a in (0..k).rev() {
            let i = rem % n;
            rem /= n;
            pts[start + a] = domain.lower()[a] + domain.side(a) * i as f64 / (n - 1) as f64;
        }
    }
    let mut u = vec![0.0; total];
    let mut v = vec![0.0; total];
    field.values(&pts, &mut u);
    exact.values(&pts, &mut v);
    let num: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = v.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ClosedForm;
    use crate::nn::Activation;
    use crate::walker::rng::keyed_rng;

    #[test]
    fn interior_points_are_strictly_inside_and_reproducible() {
        let d = BoxDomain::unit_square();
        let a = sample_interior(&d, 1000, &mut keyed_rng(&[1]));
        let b = sample_interior(&d, 1000, &mut keyed_rng(&[1]));
        assert_eq!(a, b);
        assert!(a.chunks(2).all(|p| d.contains_open(p)));
    }

    #[test]
    fn boundary_points_lie_on_faces() {
        let d = BoxDomain::unit_square();
        let pts = sample_boundary(&d, 4, &mut keyed_rng(&[2]));
        for p in pts.chunks(2) {
            assert!(p.iter().any(|v| v.abs() == 0.5), "{p:?}");
            assert!(d.contains_closed(p));
        }
    }

    #[test]
    fn hand_computed_losses() {
        // affine net u(x) = 1 for every x
        let net = Network::from_parameters(&[2, 1], Activation::Relu, vec![vec![0.0, 0.0]], vec![vec![1.0]]).unwrap();
        let t = [TargetMean {
            mean: 3.0,
            sample_variance: 0.0,
            n: 1,
        }];
        let (loss, g) = interior_loss(&net, &[0.2, 0.3], &t).unwrap();
        assert_eq!(loss, 4.0);
        // d/db of (b − 3)² at b = 1 is −4; weights see −4·x
        assert_eq!(g.biases(0), &[-4.0]);
        assert_eq!(g.weights(0), &[-0.8, -1.2]);

        let half = Network::from_parameters(&[2, 1], Activation::Relu, vec![vec![0.0, 0.0]], vec![vec![0.5]]).unwrap();
        let (loss, _) = boundary_loss(&half, &[0.5, 0.1], |_| 0.0).unwrap();
        assert_eq!(loss, 0.25);

        let t = [TargetMean {
            mean: 1.0,
            sample_variance: 0.0,
            n: 1,
        }];
        let (loss, g) = interior_loss(&net, &[0.2, 0.3], &t).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        assert!(matches!(
            interior_loss(&net, &[0.2, 0.3, 0.1, 0.1], &t),
            Err(TrainError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn relative_error_of_exact_is_zero() {
        let d = BoxDomain::unit_square();
        let u = ClosedForm::sine_product(1);
        assert_eq!(relative_l2_error(&u, &u, &d, 21), 0.0);
        let half = ClosedForm::new(2, |x| 0.5 * ClosedForm::sine_product(1).value(x));
        assert!((relative_l2_error(&half, &u, &d, 21) - 0.5).abs() < 1e-12);
    }
}
