//! Global particular function, coarse space and the coarse Galerkin solve.

use nalgebra::DMatrix;

use crate::decomposition::{Cover, PartitionOfUnity};
use crate::error::{MsgfemError, Result};
use crate::fem::assembly::energy_norm;
use crate::fem::mesh::{transfer, CellBox, StructuredMesh};
use crate::fem::sparse::SymmetricSparseOperator;
use crate::local::LocalSolution;

/// Columns whose scaled Cholesky pivot falls below this are dropped.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// One coarse basis function `I_h(χ_i φ_{i,k})`, stored on the nodes of `ω_i`.
#[derive(Debug, Clone)]
pub struct CoarseColumn {
    pub subdomain: usize,
    pub k: usize,
    pub support: CellBox,
    pub values: Vec<f64>,
    /// `A_{ω_i} · values`.
    pub applied: Vec<f64>,
    /// `‖values‖_{a,ε}`.
    pub norm: f64,
}

impl CoarseColumn {
    /// `a_ε(self, v)` for `v` supported on `other`.
    fn pair(&self, v: &[f64], other: &CellBox) -> f64 {
        let Some(common) = self.support.intersect(other) else {
            return 0.0;
        };
        common
            .nodes()
            .map(|(ix, iy)| {
                self.applied[self.support.local_node(ix, iy)] * v[other.local_node(ix, iy)]
            })
            .sum()
    }

    /// `Σ_nodes values · r` for a global nodal vector `r`.
    fn dot_global(&self, mesh: &StructuredMesh, r: &[f64]) -> f64 {
        self.support
            .nodes()
            .zip(&self.values)
            .map(|((ix, iy), v)| v * r[mesh.node_id(ix, iy)])
            .sum()
    }
}

/// Coarse space with its energy Gram matrix and the pivoted factor of the
/// retained columns.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    columns: Vec<CoarseColumn>,
    /// Gram matrix of unit-energy columns.
    scaled_gram: DMatrix<f64>,
    retained: Vec<usize>,
    dropped: Vec<usize>,
    /// Lower Cholesky factor of the retained scaled Gram block.
    factor: DMatrix<f64>,
    per_subdomain: Vec<usize>,
}

impl CoarseSpace {
    /// Columns `I_h(χ_i φ_{i,k})` for `k < n_loc` (capped by each basis).
    pub fn assemble(pu: &PartitionOfUnity, locals: &[LocalSolution], n_loc: usize) -> Result<Self> {
        let mut columns = Vec::new();
        let mut per_subdomain = Vec::with_capacity(locals.len());
        for sol in locals {
            let i = sol.local.index();
            let count = n_loc.min(sol.basis.len());
            per_subdomain.push(count);
            for (k, phi) in sol.basis.vectors.iter().take(count).enumerate() {
                let values = sol.local.cutoff(phi, pu.local(i));
                columns.push(CoarseColumn::new(i, k, *sol.local.subdomain(), values, sol.local.op_omega())?);
            }
        }
        Self::from_columns(columns, per_subdomain)
    }

    /// Build from explicit columns, in drop order.
    pub fn from_columns(columns: Vec<CoarseColumn>, per_subdomain: Vec<usize>) -> Result<Self> {
        let m = columns.len();
        let mut scaled_gram = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let ca = &columns[a];
                let cb = &columns[b];
                if ca.norm == 0.0 || cb.norm == 0.0 {
                    continue;
                }
                let g = if a == b { 1.0 } else { ca.pair(&cb.values, &cb.support) / (ca.norm * cb.norm) };
                scaled_gram[(a, b)] = g;
                scaled_gram[(b, a)] = g;
            }
        }
        let mut space = Self {
            columns,
            scaled_gram,
            retained: Vec::new(),
            dropped: Vec::new(),
            factor: DMatrix::zeros(0, 0),
            per_subdomain,
        };
        space.factorize()?;
        Ok(space)
    }

    /// Restrict to eigenvector indices `k < n_loc`, reusing the Gram matrix.
    pub fn truncate(&self, n_loc: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.columns.len()).filter(|&c| self.columns[c].k < n_loc).collect();
        let columns = keep.iter().map(|&c| self.columns[c].clone()).collect();
        let scaled_gram = self.scaled_gram.select_rows(&keep).select_columns(&keep);
        let per_subdomain = self.per_subdomain.iter().map(|&n| n.min(n_loc)).collect();
        let mut space = Self {
            columns,
            scaled_gram,
            retained: Vec::new(),
            dropped: Vec::new(),
            factor: DMatrix::zeros(0, 0),
            per_subdomain,
        };
        space.factorize()?;
        Ok(space)
    }

    /// Sequential Cholesky in column order, dropping columns whose pivot is
    /// at most [`PIVOT_THRESHOLD`] of their (unit) diagonal.
    fn factorize(&mut self) -> Result<()> {
        let m = self.columns.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut retained = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..m {
            if self.columns[j].norm == 0.0 {
                dropped.push(j);
                continue;
            }
            let r = retained.len();
            let mut y = vec![0.0; r + 1];
            for (p, &c) in retained.iter().enumerate() {
                let dot: f64 = (0..p).map(|q| rows[p][q] * y[q]).sum();
                y[p] = (self.scaled_gram[(c, j)] - dot) / rows[p][p];
            }
            let d = self.scaled_gram[(j, j)] - y[..r].iter().map(|v| v * v).sum::<f64>();
            if d > PIVOT_THRESHOLD * self.scaled_gram[(j, j)] {
                y[r] = d.sqrt();
                rows.push(y);
                retained.push(j);
            } else {
                dropped.push(j);
            }
        }
        let r = retained.len();
        let mut factor = DMatrix::zeros(r, r);
        for (p, row) in rows.iter().enumerate() {
            for (q, &v) in row.iter().enumerate() {
                factor[(p, q)] = v;
            }
        }
        self.retained = retained;
        self.dropped = dropped;
        self.factor = factor;
        Ok(())
    }

    pub fn columns(&self) -> &[CoarseColumn] {
        &self.columns
    }

    /// Number of retained columns.
    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Indices of dropped columns, in drop order.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn per_subdomain(&self) -> &[usize] {
        &self.per_subdomain
    }

    /// Eigenvalues of the retained scaled Gram block, ascending.
    pub fn gram_spectrum(&self) -> Vec<f64> {
        let g = self.scaled_gram.select_rows(&self.retained).select_columns(&self.retained);
        let mut ev: Vec<f64> = g.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Solve `(L Lᵀ) x = rhs` on the retained block.
    fn solve_factor(&self, rhs: &[f64]) -> Vec<f64> {
        let r = self.retained.len();
        let mut y = rhs.to_vec();
        for p in 0..r {
            let dot: f64 = (0..p).map(|q| self.factor[(p, q)] * y[q]).sum();
            y[p] = (y[p] - dot) / self.factor[(p, p)];
        }
        for p in (0..r).rev() {
            let dot: f64 = (p + 1..r).map(|q| self.factor[(q, p)] * y[q]).sum();
            y[p] = (y[p] - dot) / self.factor[(p, p)];
        }
        y
    }

    /// `u + Σ_k c_k b_k` over the retained columns (global nodal vector).
    pub fn combine(&self, mesh: &StructuredMesh, base: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let mut u = base.to_vec();
        for (&c, &coef) in self.retained.iter().zip(coeffs) {
            let col = &self.columns[c];
            for ((ix, iy), v) in col.support.nodes().zip(&col.values) {
                u[mesh.node_id(ix, iy)] += coef * v;
            }
        }
        u
    }

    /// Unit-energy projections `b_kᵀ r / ‖b_k‖` of a global residual.
    fn project(&self, mesh: &StructuredMesh, r: &[f64]) -> Vec<f64> {
        self.retained
            .iter()
            .map(|&c| {
                let col = &self.columns[c];
                col.dot_global(mesh, r) / col.norm
            })
            .collect()
    }
}

impl CoarseColumn {
    pub fn new(
        subdomain: usize,
        k: usize,
        support: CellBox,
        values: Vec<f64>,
        op: &SymmetricSparseOperator,
    ) -> Result<Self> {
        let applied = op.mul_vec(&values);
        let norm = energy_norm(op, &values)?;
        Ok(Self { subdomain, k, support, values, applied, norm })
    }
}

/// `u_h^p = Σ_i I_h(χ_i ψ_i|ω_i)` as a global nodal vector.
pub fn assemble_particular(
    mesh: &StructuredMesh,
    pu: &PartitionOfUnity,
    locals: &[LocalSolution],
) -> Vec<f64> {
    let mut u = vec![0.0; mesh.node_count()];
    for sol in locals {
        let i = sol.local.index();
        let chi = pu.local(i);
        for (((ix, iy), &c), &p) in pu.subdomain(i).nodes().zip(chi).zip(&sol.particular.restricted) {
            u[mesh.node_id(ix, iy)] += c * p;
        }
    }
    u
}

/// Coarse Galerkin solution `u^G = u_p + B c`.
#[derive(Debug, Clone)]
pub struct GfemSolution {
    pub particular: Vec<f64>,
    /// Coefficient of every column (zero for dropped ones).
    pub coefficients: Vec<f64>,
    pub solution: Vec<f64>,
    pub coarse_dim: usize,
    pub per_subdomain: Vec<usize>,
    /// `max_k |a(b_k, r)| / ‖b_k‖` relative to the same quantity at `u_p`.
    pub galerkin_defect: f64,
}

/// Solve `(BᵀAB) c = Bᵀ(F − A u_p)` with one step of refinement.
///
/// `fine_op` and `fine_load` live on all mesh nodes; rows on the outer
/// boundary are ignored.
pub fn solve_coarse(
    mesh: &StructuredMesh,
    fine_op: &SymmetricSparseOperator,
    fine_load: &[f64],
    coarse: &CoarseSpace,
    particular: &[f64],
) -> Result<GfemSolution> {
    let residual = |u: &[f64]| -> Vec<f64> {
        let au = fine_op.mul_vec(u);
        (0..mesh.node_count())
            .map(|id| {
                let (ix, iy) = mesh.node_coords(id);
                if mesh.is_boundary_node(ix, iy) {
                    0.0
                } else {
                    fine_load[id] - au[id]
                }
            })
            .collect()
    };
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let r0 = residual(particular);
    let g0 = coarse.project(mesh, &r0);
    let g0_max = max_abs(&g0);
    if coarse.is_empty() || g0_max == 0.0 {
        return Ok(GfemSolution {
            particular: particular.to_vec(),
            coefficients: vec![0.0; coarse.columns.len()],
            solution: particular.to_vec(),
            coarse_dim: coarse.dim(),
            per_subdomain: coarse.per_subdomain.clone(),
            galerkin_defect: 0.0,
        });
    }
    let mut scaled = coarse.solve_factor(&g0);
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(MsgfemError::Assembly("coarse system produced non-finite coefficients".into()));
    }
    let unscale = |s: &[f64]| -> Vec<f64> {
        s.iter().zip(&coarse.retained).map(|(v, &c)| v / coarse.columns[c].norm).collect()
    };
    let mut u = coarse.combine(mesh, particular, &unscale(&scaled));
    let mut g = coarse.project(mesh, &residual(&u));
    for _ in 0..2 {
        if max_abs(&g) <= 1e-13 * g0_max {
            break;
        }
        let delta = coarse.solve_factor(&g);
        scaled.iter_mut().zip(&delta).for_each(|(s, d)| *s += d);
        u = coarse.combine(mesh, particular, &unscale(&scaled));
        g = coarse.project(mesh, &residual(&u));
    }
    let mut coefficients = vec![0.0; coarse.columns.len()];
    for (&c, v) in coarse.retained.iter().zip(unscale(&scaled)) {
        coefficients[c] = v;
    }
    Ok(GfemSolution {
        particular: particular.to_vec(),
        coefficients,
        solution: u,
        coarse_dim: coarse.dim(),
        per_subdomain: coarse.per_subdomain.clone(),
        galerkin_defect: max_abs(&g) / g0_max,
    })
}

/// Energy errors of a coarse solution against the fine reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub err_energy: f64,
    pub err_rel: f64,
    pub reference_norm: f64,
    /// Best local errors `ẽ_i`.
    pub local_errors: Vec<f64>,
    /// `d_{h,n_i} ‖u_h − ψ_i‖_{a,ε,ω*_i}` when `λ_{n_i+1}` is available.
    pub local_bounds: Vec<Option<f64>>,
    /// `‖u_h − ψ_i‖_{a,ε,ω*_i}`.
    pub particular_errors: Vec<f64>,
    /// `(κ Σ ẽ_i²)^{1/2}`.
    pub bound_thm21: f64,
    pub kappa: usize,
    pub kappa_star: usize,
    pub coarse_dim: usize,
    /// `max_k |a(b_k, u_h − u^G)| / (‖b_k‖ ‖u_h − u_p‖)`.
    pub galerkin_orthogonality: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn error_report(
    mesh: &StructuredMesh,
    fine_op: &SymmetricSparseOperator,
    reference: &[f64],
    gfem: &GfemSolution,
    cover: &Cover,
    pu: &PartitionOfUnity,
    locals: &[LocalSolution],
    coarse: &CoarseSpace,
) -> Result<ErrorReport> {
    let diff: Vec<f64> = reference.iter().zip(&gfem.solution).map(|(a, b)| a - b).collect();
    let err_energy = energy_norm(fine_op, &diff)?;
    let reference_norm = energy_norm(fine_op, reference)?;
    let err_rel = if reference_norm == 0.0 { err_energy } else { err_energy / reference_norm };

    let mut local_errors = Vec::with_capacity(locals.len());
    let mut local_bounds = Vec::with_capacity(locals.len());
    let mut particular_errors = Vec::with_capacity(locals.len());
    for (sol, &n_i) in locals.iter().zip(&gfem.per_subdomain) {
        let i = sol.local.index();
        let star = sol.local.oversampling();
        let full = mesh.full_box();
        let mut harmonic = transfer(&full, reference, star);
        harmonic.iter_mut().zip(&sol.particular.psi).for_each(|(u, p)| *u -= p);
        let part_err = sol.local.energy_star(&harmonic)?;
        let target = sol.local.cutoff(&harmonic, pu.local(i));
        let cols: Vec<Vec<f64>> = sol
            .basis
            .vectors
            .iter()
            .take(n_i)
            .map(|phi| sol.local.cutoff(phi, pu.local(i)))
            .collect();
        local_errors.push(best_local_error(sol.local.op_omega(), &target, &cols)?);
        local_bounds.push(sol.basis.nwidth(n_i).ok().map(|d| d * part_err));
        particular_errors.push(part_err);
    }
    let kappa = cover.kappa();
    let bound_thm21 = (kappa as f64 * local_errors.iter().map(|e| e * e).sum::<f64>()).sqrt();

    let base: Vec<f64> = reference.iter().zip(&gfem.particular).map(|(a, b)| a - b).collect();
    let base_norm = energy_norm(fine_op, &base)?;
    let galerkin_orthogonality = if base_norm == 0.0 || coarse.is_empty() {
        0.0
    } else {
        let ae = fine_op.mul_vec(&diff);
        coarse
            .retained()
            .iter()
            .map(|&c| {
                let col = &coarse.columns()[c];
                col.dot_global(mesh, &ae).abs() / (col.norm * base_norm)
            })
            .fold(0.0, f64::max)
    };

    Ok(ErrorReport {
        err_energy,
        err_rel,
        reference_norm,
        local_errors,
        local_bounds,
        particular_errors,
        bound_thm21,
        kappa,
        kappa_star: cover.kappa_star(),
        coarse_dim: gfem.coarse_dim,
        galerkin_orthogonality,
    })
}

/// `min_c ‖target − Σ c_k cols_k‖_A` by A-orthogonal Gram–Schmidt with
/// reorthogonalization.
pub fn best_local_error(op: &SymmetricSparseOperator, target: &[f64], cols: &[Vec<f64>]) -> Result<f64> {
    let mut basis: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(cols.len());
    for col in cols {
        let original = energy_norm(op, col)?;
        if original == 0.0 {
            continue;
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for (q, aq) in &basis {
                let c: f64 = aq.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = energy_norm(op, &v)?;
        if nrm <= 1e-13 * original {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        let av = op.mul_vec(&v);
        basis.push((v, av));
    }
    let mut w = target.to_vec();
    for _ in 0..2 {
        for (q, aq) in &basis {
            let c: f64 = aq.iter().zip(&w).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    energy_norm(op, &w)
}
