use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use super::{BoxDomain, PdeProblem, RngStream, WalkMode, WalkerError, WalkerRecord};
use crate::field::ScalarField;

/// `pos + drift·δt + √δt·noise`.
pub fn step_euler_maruyama(
    pos: &[f64],
    drift: &[f64],
    dt: f64,
    noise: &[f64],
) -> Result<Vec<f64>, WalkerError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WalkerError::NonPositiveStep(dt));
    }
    for len in [drift.len(), noise.len()] {
        if len != pos.len() {
            return Err(WalkerError::DimensionMismatch {
                expected: pos.len(),
                got: len,
            });
        }
    }
    let s = dt.sqrt();
    Ok(pos
        .iter()
        .zip(drift.iter().zip(noise))
        .map(|(p, (v, z))| p + v * dt + s * z)
        .collect())
}

/// First boundary crossing of the segment `prev → next`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitCrossing {
    /// Fraction of the step taken before hitting the boundary.
    pub fraction: f64,
    pub point: Vec<f64>,
    /// Face index `2·axis` (lower) or `2·axis + 1` (upper).
    pub face: usize,
}

/// Returns the first crossing if `next` is not strictly inside the domain.
///
/// Among faces crossed by the segment, the smallest fraction wins; ties go to
/// the lowest face index. The exit point is snapped onto its face.
pub fn detect_exit(prev: &[f64], next: &[f64], domain: &BoxDomain) -> Option<ExitCrossing> {
    if domain.contains_open(next) {
        return None;
    }
    let mut best: Option<(f64, usize)> = None;
    for axis in 0..domain.dim() {
        let (lo, hi) = (domain.lower()[axis], domain.upper()[axis]);
        let d = next[axis] - prev[axis];
        for (face, wall, crossed) in [
            (2 * axis, lo, next[axis] <= lo),
            (2 * axis + 1, hi, next[axis] >= hi),
        ] {
            if !crossed {
                continue;
            }
            let lambda = if d == 0.0 {
                0.0
            } else {
                ((wall - prev[axis]) / d).clamp(0.0, 1.0)
            };
            if best.is_none_or(|(b, _)| lambda < b) {
                best = Some((lambda, face));
            }
        }
    }
    let (fraction, face) = best?;
    let mut point: Vec<f64> = prev
        .iter()
        .zip(next)
        .map(|(p, n)| p + fraction * (n - p))
        .collect();
    let tmp = point.clone();
    domain.clamp_into(&tmp, &mut point);
    let axis = face / 2;
    point[axis] = if face % 2 == 0 {
        domain.lower()[axis]
    } else {
        domain.upper()[axis]
    };
    Some(ExitCrossing {
        fraction,
        point,
        face,
    })
}

/// Largest `δt ≤ δt_max` dividing `Δt` evenly, with the step count.
pub fn substeps(horizon: f64, dt_max: f64) -> Result<(usize, f64), WalkerError> {
    for v in [horizon, dt_max] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(WalkerError::NonPositiveStep(v));
        }
    }
    let n = ((horizon / dt_max) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

/// Walk parameters shared by all points of an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub mode: WalkMode,
    /// `Δt`.
    pub horizon: f64,
    /// `δt`; must divide `Δt`.
    pub step: f64,
    /// `N_s`.
    pub walkers: usize,
}

impl WalkConfig {
    /// Number of Euler–Maruyama steps per walker.
    pub fn step_count(&self) -> Result<usize, WalkerError> {
        for v in [self.horizon, self.step] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WalkerError::NonPositiveStep(v));
            }
        }
        let ratio = self.horizon / self.step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(WalkerError::StepMismatch {
                horizon: self.horizon,
                step: self.step,
            });
        }
        if self.walkers == 0 {
            return Err(WalkerError::NoWalkers);
        }
        Ok(n as usize)
    }
}

/// Simulates `N_s` walkers from `x0` over `[0, Δt]`.
///
/// `u_eval` is only consulted when the drift or force depends on `u`. Walkers
/// are absorbed at the first boundary crossing; the force integral and the
/// Girsanov exponent then accrue only the fraction of the step before exit.
/// Walker `j` draws from `rng.walker(j)`, so the output does not depend on
/// evaluation order.
pub fn simulate_batch<U: ScalarField + ?Sized>(
    x0: &[f64],
    problem: &PdeProblem,
    u_eval: &U,
    config: &WalkConfig,
    rng: &RngStream,
) -> Result<Vec<WalkerRecord>, WalkerError> {
    let k = problem.dim();
    if x0.len() != k {
        return Err(WalkerError::DimensionMismatch {
            expected: k,
            got: x0.len(),
        });
    }
    if !problem.domain().contains_closed(x0) {
        return Err(WalkerError::StartOutside(x0.to_vec()));
    }
    let steps = config.step_count()?;
    let mut scratch = Scratch::new(k);
    Ok((0..config.walkers as u64)
        .map(|j| walk_one(x0, problem, u_eval, config, steps, rng, j, &mut scratch))
        .collect())
}

struct Scratch {
    next: Vec<f64>,
    db: Vec<f64>,
    v: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Self {
            next: vec![0.0; k],
            db: vec![0.0; k],
            v: vec![0.0; k],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_one<U: ScalarField + ?Sized>(
    x0: &[f64],
    problem: &PdeProblem,
    u_eval: &U,
    config: &WalkConfig,
    steps: usize,
    rng: &RngStream,
    walker_index: u64,
    scratch: &mut Scratch,
) -> WalkerRecord {
    let k = x0.len();
    let dt = config.step;
    let sqrt_dt = dt.sqrt();
    let domain = problem.domain();
    let needs_u = problem.needs_u();
    let drifted = config.mode == WalkMode::XProcess;
    let weighted = config.mode == WalkMode::BProcess && problem.has_drift();
    let need_v = problem.has_drift();

    let mut gen = rng.walker(walker_index);
    let mut pos = x0.to_vec();
    let Scratch { next, db, v } = scratch;
    v.fill(0.0);
    let mut force_integral = 0.0;
    let mut girsanov_log = 0.0;
    let mut exit_time = None;

    // a start on the boundary is absorbed immediately
    if !domain.contains_open(&pos) {
        exit_time = Some(0.0);
    }

    for m in 0..steps {
        if exit_time.is_some() {
            break;
        }
        let u_here = if needs_u { u_eval.value(&pos) } else { f64::NAN };
        let g = problem.force_at(&pos, u_here);
        if need_v {
            problem.drift_at(&pos, u_here, v);
        }
        for i in 0..k {
            let z: f64 = StandardNormal.sample(&mut gen);
            db[i] = sqrt_dt * z;
            next[i] = pos[i] + db[i] + if drifted { v[i] * dt } else { 0.0 };
        }
        let frac = match detect_exit(&pos, next, domain) {
            Some(cross) => {
                next.copy_from_slice(&cross.point);
                exit_time = Some((m as f64 + cross.fraction) * dt);
                cross.fraction
            }
            None => 1.0,
        };
        force_integral += g * frac * dt;
        if weighted {
            let vdb: f64 = v.iter().zip(db.iter()).map(|(a, b)| a * b).sum();
            let vv: f64 = v.iter().map(|a| a * a).sum();
            girsanov_log += frac * (vdb - 0.5 * vv * dt);
        }
        std::mem::swap(&mut pos, next);
    }

    WalkerRecord {
        walker_index,
        mode: config.mode,
        start: x0.to_vec(),
        terminal: pos,
        exit_time,
        force_integral,
        girsanov_log,
    }
}

/// Debug dump: `point_index, walker_index, exited, exit_time, terminal_0…,
/// force_integral, girsanov_log`. The header is written when `header` is set.
pub fn write_records_csv<W: Write>(
    out: W,
    point_index: u64,
    records: &[WalkerRecord],
    header: bool,
) -> Result<(), WalkerError> {
    let mut w = csv::Writer::from_writer(out);
    let k = records.first().map_or(0, |r| r.terminal.len());
    if header {
        let mut cols = vec![
            "point_index".to_string(),
            "walker_index".into(),
            "exited".into(),
            "exit_time".into(),
        ];
        cols.extend((0..k).map(|i| format!("terminal_{i}")));
        cols.push("force_integral".into());
        cols.push("girsanov_log".into());
        w.write_record(&cols)?;
    }
    for r in records {
        let mut row = vec![
            point_index.to_string(),
            r.walker_index.to_string(),
            r.exited().to_string(),
            r.exit_time.map_or(String::new(), |t| t.to_string()),
        ];
        row.extend(r.terminal.iter().map(f64::to_string));
        row.push(r.force_integral.to_string());
        row.push(r.girsanov_log.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
