//! Dense phase-1 simplex for feasibility of `A x = b, x ≥ 0`.

use crate::error::{Error, Result};

/// Pivot and reduced-cost tolerance.
pub const PIVOT_TOL: f64 = 1e-9;
/// Largest residual `‖Ax − b‖∞` accepted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOne {
    pub x: Vec<f64>,
    /// `‖Ax − b‖∞` at the returned point.
    pub residual: f64,
    pub pivots: usize,
}

impl PhaseOne {
    pub fn is_feasible(&self) -> bool {
        self.residual <= FEASIBILITY_TOL
    }
}

/// Minimizes the sum of artificial variables with Bland's rule. The returned
/// point is clamped to `x ≥ 0`.
pub fn phase_one(a: &[Vec<f64>], b: &[f64]) -> Result<PhaseOne> {
    let m = a.len();
    if b.len() != m {
        return Err(Error::Dimension(format!("{m} constraint rows but {} right-hand sides", b.len())));
    }
    let n = a.first().map_or(0, Vec::len);
    if a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("constraint rows differ in length".into()));
    }
    let width = n + m;
    let mut t = vec![vec![0.0; width + 1]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut cost = vec![0.0; width + 1];
    for row in &t {
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[width] -= row[width];
    }

    let mut pivots = 0;
    while let Some(enter) = (0..width).find(|&j| cost[j] < -PIVOT_TOL) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > PIVOT_TOL {
                let ratio = t[i][width] / t[i][enter];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - PIVOT_TOL
                            || (ratio <= best + PIVOT_TOL && basis[i] < basis[r])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        // the phase-1 objective is bounded below, so a leaving row exists
        let Some((r, _)) = leave else { break };
        pivot(&mut t, &mut cost, r, enter);
        basis[r] = enter;
        pivots += 1;
    }

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][width].max(0.0);
        }
    }
    let residual = a
        .iter()
        .zip(b)
        .map(|(row, bi)| (row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() - bi).abs())
        .fold(0.0, f64::max);
    Ok(PhaseOne { x, residual, pivots })
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, q)| *v -= f * q);
            }
        }
    }
    let f = cost[c];
    cost.iter_mut().zip(&pivot_row).for_each(|(v, q)| *v -= f * q);
}
