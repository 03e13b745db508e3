//! Least-squares fits on log-log data.

/// Slope and intercept of `ln y = a + b ln x`. Needs two distinct `x` and
/// positive data.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

/// Joint fit `ln z = c + p ln x + q ln y`; returns `(p, q, c)`.
pub fn loglog_plane(xs: &[f64], ys: &[f64], zs: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if ys.len() != n || zs.len() != n || n < 3 {
        return None;
    }
    if xs.iter().chain(ys).chain(zs).any(|v| !(*v > 0.0)) {
        return None;
    }
    let rows: Vec<[f64; 3]> = (0..n).map(|i| [1.0, xs[i].ln(), ys[i].ln()]).collect();
    let rhs: Vec<f64> = zs.iter().map(|v| v.ln()).collect();
    let mut a = [[0.0f64; 4]; 3];
    for (r, z) in rows.iter().zip(&rhs) {
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += r[i] * r[j];
            }
            a[i][3] += r[i] * z;
        }
    }
    // Gaussian elimination with partial pivoting on the 3×3 normal equations
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..4 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..3).map(|i| a[i][3] / a[i][i]).collect();
    Some((sol[1], sol[2], sol[0]))
}
