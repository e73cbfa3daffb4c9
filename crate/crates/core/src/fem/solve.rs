//! Sparse SPD solves: band Cholesky by default, Jacobi-preconditioned CG when
//! the band factor would not fit the memory budget.

use crate::error::{MsgfemError, Result};
use crate::fem::sparse::SymmetricSparseOperator;

/// Relative residual every solve must reach, measured by [`relative_residual`].
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Relative tolerance of the CG fallback.
pub const CG_TOL: f64 = 1e-12;
/// Band factors larger than this many bytes switch to CG.
pub const DEFAULT_BAND_BUDGET: usize = 2 << 30;

/// Cholesky factor `A = L Lᵀ` stored as the lower band.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    dim: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn storage_bytes(op: &SymmetricSparseOperator) -> usize {
        op.dim() * (op.bandwidth() + 1) * std::mem::size_of::<f64>()
    }

    pub fn factor(op: &SymmetricSparseOperator) -> Result<Self> {
        let dim = op.dim();
        let bw = op.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0; dim * w];
        for i in 0..dim {
            for (j, a) in op.row(i) {
                if j <= i {
                    band[i * w + (j + bw - i)] = a;
                }
            }
        }
        for i in 0..dim {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(bw));
                let row_i = &band[i * w + (k0 + bw - i)..i * w + (j + bw - i)];
                let row_j = &band[j * w + (k0 + bw - j)..j * w + bw];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let s = band[i * w + (j + bw - i)] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(MsgfemError::NotSpd { pivot: i, value: s });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { dim, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        let (bw, w) = (self.bw, self.bw + 1);
        for i in 0..self.dim {
            let i0 = i.saturating_sub(bw);
            let row = &self.band[i * w + (i0 + bw - i)..i * w + bw];
            let dot: f64 = row.iter().zip(&x[i0..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / self.band[i * w + bw];
        }
        for i in (0..self.dim).rev() {
            x[i] /= self.band[i * w + bw];
            let xi = x[i];
            let i0 = i.saturating_sub(bw);
            let row = &self.band[i * w + (i0 + bw - i)..i * w + bw];
            for (xk, l) in x[i0..i].iter_mut().zip(row) {
                *xk -= l * xi;
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn conjugate_gradient(
    op: &SymmetricSparseOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    let diag: Vec<f64> = (0..n).map(|i| op.get(i, i)).collect();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(MsgfemError::NotSpd { pivot: i, value: diag[i] });
    }
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = op.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(MsgfemError::NotSpd { pivot: 0, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(MsgfemError::NoConvergence(format!("CG stalled after {max_iter} iterations")))
}

/// Solve `op · x = rhs` for an SPD operator, refining until the relative
/// residual is at most [`RESIDUAL_TOL`].
pub fn solve_spd(op: &SymmetricSparseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    solve_spd_with_budget(op, rhs, DEFAULT_BAND_BUDGET)
}

pub fn solve_spd_with_budget(
    op: &SymmetricSparseOperator,
    rhs: &[f64],
    band_budget: usize,
) -> Result<Vec<f64>> {
    solve_spd_with(op, rhs, &SolverOptions { band_budget, ..SolverOptions::default() })
}

/// Tolerances and memory budget of [`solve_spd_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub residual_tol: f64,
    pub cg_tol: f64,
    pub band_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { residual_tol: RESIDUAL_TOL, cg_tol: CG_TOL, band_budget: DEFAULT_BAND_BUDGET }
    }
}

pub fn solve_spd_with(op: &SymmetricSparseOperator, rhs: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    if rhs.len() != op.dim() {
        return Err(MsgfemError::Dimension { expected: op.dim(), got: rhs.len() });
    }
    if op.dim() == 0 {
        return Ok(Vec::new());
    }
    let residual = |x: &[f64]| op.residual_compensated(x, rhs);
    let x = if BandCholesky::storage_bytes(op) > opts.band_budget {
        conjugate_gradient(op, rhs, opts.cg_tol, 20 * op.dim() + 100)?
    } else {
        let chol = BandCholesky::factor(op)?;
        let mut x = chol.solve(rhs);
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            let r = residual(&x);
            let rn = norm2(&r);
            if rn <= 1e-2 * opts.residual_tol * norm2(rhs) || rn >= 0.5 * last {
                break;
            }
            last = rn;
            let dx = chol.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        }
        x
    };
    let rel = relative_residual(op, &x, rhs);
    if rel > opts.residual_tol {
        return Err(MsgfemError::NoConvergence(format!("relative residual {rel:e} after refinement")));
    }
    Ok(x)
}

/// Normwise backward error `‖b − Ax‖ / (‖b‖ + ‖|A||x|‖)` with a compensated
/// residual. Normalizing by `‖b‖` alone is unreachable in double precision
/// when `‖|A||x|‖ ≫ ‖b‖`, since rounding `x` already costs `u‖|A||x|‖`.
pub fn relative_residual(op: &SymmetricSparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let scale = norm2(b) + op.abs_mul_norm(x);
    let r = norm2(&op.residual_compensated(x, b));
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SymmetricSparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SymmetricSparseOperator::from_triplets(n, t)
    }

    #[test]
    fn identity_returns_rhs() {
        let id = SymmetricSparseOperator::diagonal(&[1.0; 5]);
        let b = [1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(solve_spd(&id, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn two_by_two_hand_check() {
        let a = SymmetricSparseOperator::from_triplets(
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
        );
        let x = solve_spd(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SymmetricSparseOperator::from_triplets(
            2,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        );
        assert!(matches!(BandCholesky::factor(&a), Err(MsgfemError::NotSpd { pivot: 1, .. })));
        assert!(solve_spd(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplace_1d(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = solve_spd(&a, &b).unwrap();
        let x2 = solve_spd_with_budget(&a, &b, 0).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-8 * (1.0 + p.abs()));
        }
        let r: Vec<f64> = a.mul_vec(&x1).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= RESIDUAL_TOL * norm2(&b));
    }
}
