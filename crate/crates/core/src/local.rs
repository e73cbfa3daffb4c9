//! Local problems on the oversampling domains.
//!
//! For each `ω*_i` this module solves the local reaction-diffusion problem
//! with natural boundary conditions on `∂ω*_i ∩ Ω`, parameterizes the
//! discrete generalized harmonic space by its free boundary values (interior
//! dofs eliminated through a Schur complement), and solves the dense
//! symmetric-definite eigenproblem
//!
//! ```text
//! a_{ε,ω}(I_h(χφ), I_h(χv)) = λ a_{ε,ω*}(φ, v)   ∀ v harmonic
//! ```
//!
//! whose eigenvalue square roots are the discrete Kolmogorov n-widths.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::coefficient::{CellCoefficients, SourceField};
use crate::decomposition::{Cover, PartitionOfUnity};
use crate::error::{MsgfemError, Result};
use crate::fem::assembly::{assemble_energy, assemble_load, energy_norm};
use crate::fem::mesh::{transfer, CellBox, DofSet, StructuredMesh};
use crate::fem::solve::{norm2, relative_residual, solve_spd, BandCholesky};
use crate::fem::sparse::SymmetricSparseOperator;

/// Eigenvalues in `[-EIG_CLAMP·λ₁, 0)` are treated as zero.
pub const EIG_CLAMP: f64 = 1e-12;

/// Assembled data for one oversampling domain.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    index: usize,
    eps: f64,
    subdomain: CellBox,
    oversampling: CellBox,
    dofs: DofSet,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    op_star: SymmetricSparseOperator,
    op_free: SymmetricSparseOperator,
    op_omega: SymmetricSparseOperator,
}

impl LocalProblem {
    pub fn build(
        mesh: &StructuredMesh,
        coeff: &CellCoefficients,
        eps: f64,
        cover: &Cover,
        i: usize,
    ) -> Result<Self> {
        if i >= cover.len() {
            return Err(MsgfemError::Request(format!(
                "subdomain {i} out of range (cover has {})",
                cover.len()
            )));
        }
        let subdomain = *cover.subdomain(i);
        let oversampling = *cover.oversampling(i);
        let dofs = DofSet::new(oversampling, |ix, iy| mesh.is_boundary_node(ix, iy));
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for (k, &local) in dofs.free().iter().enumerate() {
            let (ix, iy) = oversampling.global_node(local);
            if oversampling.has_interior_node(ix, iy) {
                interior.push(k);
            } else {
                boundary.push(k);
            }
        }
        if interior.is_empty() {
            return Err(MsgfemError::DegenerateDomain(format!(
                "oversampling domain {i} has no interior nodes"
            )));
        }
        let op_star = assemble_energy(mesh, coeff, eps, &oversampling)?;
        let free_nodes: Vec<usize> = dofs.free().to_vec();
        let op_free = op_star.principal(&free_nodes);
        let op_omega = assemble_energy(mesh, coeff, eps, &subdomain)?;
        Ok(Self {
            index: i,
            eps,
            subdomain,
            oversampling,
            dofs,
            interior,
            boundary,
            op_star,
            op_free,
            op_omega,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn subdomain(&self) -> &CellBox {
        &self.subdomain
    }

    pub fn oversampling(&self) -> &CellBox {
        &self.oversampling
    }

    /// Dofs of `V_{h,Γ}(ω*)`.
    pub fn dofs(&self) -> &DofSet {
        &self.dofs
    }

    /// Free-dof indices of `V_{h,0}(ω*)`.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Free-dof indices on `∂ω* ∩ Ω`.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// `a_{ε,ω*}` on all box nodes of `ω*`.
    pub fn op_star(&self) -> &SymmetricSparseOperator {
        &self.op_star
    }

    /// `a_{ε,ω*}` restricted to `V_{h,Γ}(ω*)`.
    pub fn op_free(&self) -> &SymmetricSparseOperator {
        &self.op_free
    }

    /// `a_{ε,ω}` on all box nodes of `ω`.
    pub fn op_omega(&self) -> &SymmetricSparseOperator {
        &self.op_omega
    }

    /// Local particular function with natural conditions on `∂ω* ∩ Ω`.
    pub fn solve_particular(&self, mesh: &StructuredMesh, f: &SourceField) -> Result<LocalParticular> {
        let load = self.dofs.restrict(&assemble_load(mesh, f, &self.oversampling));
        let psi_free = if f.is_zero() { vec![0.0; self.dofs.len()] } else { solve_spd(&self.op_free, &load)? };
        let psi = self.dofs.expand(&psi_free);
        let restricted = transfer(&self.oversampling, &psi, &self.subdomain);
        let residual = relative_residual(&self.op_free, &psi_free, &load);
        Ok(LocalParticular { psi, restricted, residual })
    }

    /// Relative residual of `a_{ε,ω*}(x, v) = 0` over the interior test
    /// dofs, for `x` given on the box nodes of `ω*`.
    pub fn harmonic_residual(&self, x: &[f64]) -> f64 {
        let free = self.dofs.restrict(x);
        let xb: Vec<f64> = self.boundary.iter().map(|&k| free[k]).collect();
        let xi: Vec<f64> = self.interior.iter().map(|&k| free[k]).collect();
        let aib = self.op_free.mul_block(&self.interior, &self.boundary, &xb);
        let aii = self.op_free.mul_block(&self.interior, &self.interior, &xi);
        let r: Vec<f64> = aib.iter().zip(&aii).map(|(a, b)| a + b).collect();
        let scale = norm2(&aib).max(norm2(&aii));
        if scale == 0.0 {
            0.0
        } else {
            norm2(&r) / scale
        }
    }

    /// `‖x‖_{a,ε,ω*}` for `x` on the box nodes of `ω*`.
    pub fn energy_star(&self, x: &[f64]) -> Result<f64> {
        energy_norm(&self.op_star, x)
    }

    /// `‖x‖_{a,ε,ω}` for `x` on the box nodes of `ω`.
    pub fn energy_omega(&self, x: &[f64]) -> Result<f64> {
        energy_norm(&self.op_omega, x)
    }

    pub fn build_extension(&self) -> Result<HarmonicExtension> {
        HarmonicExtension::build(self)
    }

    /// Top-`n` eigenpairs of the local eigenproblem.
    pub fn solve_eigenproblem(
        &self,
        ext: &HarmonicExtension,
        chi: &[f64],
        n: usize,
    ) -> Result<LocalSpectralBasis> {
        let m = ext.boundary_len();
        if n > m {
            return Err(MsgfemError::Request(format!(
                "{n} eigenpairs requested, harmonic space has dimension {m}"
            )));
        }
        let vectors = self.cutoff_columns(ext, chi);
        let left = gram(&vectors, &self.op_omega);
        let (eigenvalues, coords) = generalized_eigen(&left, ext.schur(), n)?;
        let vectors = coords.iter().map(|c| ext.extend(self, c)).collect();
        Ok(LocalSpectralBasis {
            subdomain: self.index,
            eps: self.eps,
            oversampling: self.oversampling,
            eigenvalues,
            vectors,
        })
    }

    /// `I_h(χ E e_k)` on the box nodes of `ω`, one per boundary dof.
    pub fn cutoff_columns(&self, ext: &HarmonicExtension, chi: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(chi.len(), self.subdomain.node_count());
        (0..ext.boundary_len())
            .map(|k| {
                let mut e = vec![0.0; ext.boundary_len()];
                e[k] = 1.0;
                self.cutoff(&ext.extend(self, &e), chi)
            })
            .collect()
    }

    /// `I_h(χ v)` on the box nodes of `ω` for `v` on the box nodes of `ω*`.
    pub fn cutoff(&self, v: &[f64], chi: &[f64]) -> Vec<f64> {
        let mut w = transfer(&self.oversampling, v, &self.subdomain);
        w.iter_mut().zip(chi).for_each(|(w, c)| *w *= c);
        w
    }
}

/// Gram matrix `G_jk = v_jᵀ A v_k`.
fn gram(vectors: &[Vec<f64>], op: &SymmetricSparseOperator) -> DMatrix<f64> {
    let m = vectors.len();
    let products: Vec<Vec<f64>> = vectors.iter().map(|v| op.mul_vec(v)).collect();
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let v: f64 = vectors[j].iter().zip(&products[k]).map(|(a, b)| a * b).sum();
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    g
}

/// Solve `left x = λ right x` for SPD `right`; returns all eigenvalues in
/// decreasing order (clamped) and the top-`n` right-orthonormal vectors.
pub(crate) fn generalized_eigen(
    left: &DMatrix<f64>,
    right: &DMatrix<f64>,
    n: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = right.nrows();
    if m == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let chol = right
        .clone()
        .cholesky()
        .ok_or_else(|| MsgfemError::Definiteness("Schur complement is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ left L⁻ᵀ
    let y = l
        .solve_lower_triangular(left)
        .ok_or_else(|| MsgfemError::Definiteness("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| MsgfemError::Definiteness("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let mut values = Vec::with_capacity(m);
    for &k in &order {
        let v = eig.eigenvalues[k];
        if v >= 0.0 {
            values.push(v);
        } else if v >= -EIG_CLAMP * top.max(0.0) {
            values.push(0.0);
        } else {
            return Err(MsgfemError::Definiteness(format!(
                "eigenvalue {v:e} below clamp window of top eigenvalue {top:e}"
            )));
        }
    }
    let lt = l.transpose();
    let mut coords = Vec::with_capacity(n);
    for &k in order.iter().take(n) {
        let yk: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        let xk = lt
            .solve_upper_triangular(&yk)
            .ok_or_else(|| MsgfemError::Definiteness("singular Cholesky factor".into()))?;
        coords.push(xk.iter().copied().collect());
    }
    Ok((values, coords))
}

/// Local particular function `ψ` on `ω*` and its restriction to `ω`.
#[derive(Debug, Clone)]
pub struct LocalParticular {
    pub psi: Vec<f64>,
    pub restricted: Vec<f64>,
    /// Relative residual of the reduced solve.
    pub residual: f64,
}

/// Harmonic extension of free boundary values into `ω*` together with the
/// Schur complement `S = A_BB − A_BI A_II⁻¹ A_IB`.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    interior_factor: BandCholesky,
    /// `−A_II⁻¹ A_IB`, one column per boundary dof.
    columns: Vec<Vec<f64>>,
    schur: DMatrix<f64>,
}

impl HarmonicExtension {
    pub fn build(local: &LocalProblem) -> Result<Self> {
        Self::from_operator(local.op_free(), local.interior(), local.boundary())
    }

    /// Eliminate `interior` from `op`, keeping `boundary` as coordinates.
    pub fn from_operator(
        op: &SymmetricSparseOperator,
        interior: &[usize],
        boundary: &[usize],
    ) -> Result<Self> {
        let a_ii = op.principal(interior);
        let interior_factor = BandCholesky::factor(&a_ii)?;
        let m = boundary.len();
        let mut columns = Vec::with_capacity(m);
        for &b in boundary {
            let mut rhs = op.mul_block(interior, &[b], &[1.0]);
            rhs.iter_mut().for_each(|v| *v = -*v);
            interior_factor.solve_in_place(&mut rhs);
            columns.push(rhs);
        }
        let a_bb = op.dense_block(boundary, boundary);
        let mut schur = DMatrix::zeros(m, m);
        for k in 0..m {
            let coupling = op.mul_block(boundary, interior, &columns[k]);
            for j in 0..m {
                schur[(j, k)] = a_bb[j][k] + coupling[j];
            }
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        Ok(Self { interior_factor, columns, schur })
    }

    pub fn boundary_len(&self) -> usize {
        self.columns.len()
    }

    pub fn schur(&self) -> &DMatrix<f64> {
        &self.schur
    }

    /// Interior values `−A_II⁻¹ A_IB b`.
    pub fn interior_values(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.columns.len());
        let len = self.interior_factor.dim();
        let mut out = vec![0.0; len];
        for (col, &bk) in self.columns.iter().zip(b) {
            if bk != 0.0 {
                out.iter_mut().zip(col).for_each(|(o, c)| *o += bk * c);
            }
        }
        out
    }

    /// Free-dof vector `E b` ordered like `op`.
    pub fn extend_free(&self, dim: usize, interior: &[usize], boundary: &[usize], b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for (&k, &v) in boundary.iter().zip(b) {
            x[k] = v;
        }
        for (&k, v) in interior.iter().zip(self.interior_values(b)) {
            x[k] = v;
        }
        x
    }

    /// `E b` on the box nodes of `ω*`.
    pub fn extend(&self, local: &LocalProblem, b: &[f64]) -> Vec<f64> {
        let free = self.extend_free(local.dofs.len(), &local.interior, &local.boundary, b);
        local.dofs.expand(&free)
    }

    /// `bᵀ S b`.
    pub fn schur_form(&self, b: &[f64]) -> f64 {
        let v = DVector::from_column_slice(b);
        (v.transpose() * &self.schur * &v)[(0, 0)]
    }
}

/// Eigenpairs of the local eigenproblem in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSpectralBasis {
    pub subdomain: usize,
    pub eps: f64,
    pub oversampling: CellBox,
    /// Every eigenvalue `λ₁ ≥ λ₂ ≥ … ≥ 0`.
    pub eigenvalues: Vec<f64>,
    /// Top eigenvectors as harmonic functions on the box nodes of `ω*`.
    pub vectors: Vec<Vec<f64>>,
}

impl LocalSpectralBasis {
    pub fn empty(local: &LocalProblem) -> Self {
        Self {
            subdomain: local.index,
            eps: local.eps,
            oversampling: local.oversampling,
            eigenvalues: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `d_{h,n}(ω, ω*) = λ_{n+1}^{1/2}`.
    pub fn nwidth(&self, n: usize) -> Result<f64> {
        self.eigenvalues.get(n).map(|v| v.sqrt()).ok_or_else(|| {
            MsgfemError::Request(format!(
                "n-width of order {n} needs {} eigenvalues, have {}",
                n + 1,
                self.eigenvalues.len()
            ))
        })
    }

    /// Persist as a text header followed by little-endian f64 eigenvalues and
    /// vectors:
    ///
    /// ```text
    /// MSGFEM-BASIS v1
    /// subdomain <i>
    /// eps <ε>
    /// ell <ℓ>
    /// n <vector count>
    /// eigenvalues <count>
    /// dofs <values per vector>
    /// box <x0> <x1> <y0> <y1>
    /// data f64le
    /// ```
    pub fn save(&self, path: &Path, ell: usize) -> Result<()> {
        let dofs = self.oversampling.node_count();
        let b = self.oversampling;
        let mut out = Vec::new();
        writeln!(out, "MSGFEM-BASIS v1")?;
        writeln!(out, "subdomain {}", self.subdomain)?;
        writeln!(out, "eps {:?}", self.eps)?;
        writeln!(out, "ell {ell}")?;
        writeln!(out, "n {}", self.vectors.len())?;
        writeln!(out, "eigenvalues {}", self.eigenvalues.len())?;
        writeln!(out, "dofs {dofs}")?;
        writeln!(out, "box {} {} {} {}", b.x0, b.x1, b.y0, b.y1)?;
        writeln!(out, "data f64le")?;
        for v in self.eigenvalues.iter().chain(self.vectors.iter().flatten()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Inverse of [`LocalSpectralBasis::save`]; returns the basis and `ℓ`.
    pub fn load(path: &Path) -> Result<(Self, usize)> {
        let bytes = fs::read(path)?;
        let marker = b"data f64le\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| MsgfemError::Parse("basis file missing data marker".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|e| MsgfemError::Parse(e.to_string()))?;
        let data = &bytes[split + marker.len()..];
        let mut lines = header.lines();
        if lines.next() != Some("MSGFEM-BASIS v1") {
            return Err(MsgfemError::Parse("missing MSGFEM-BASIS v1 magic".into()));
        }
        let mut fields = std::collections::HashMap::new();
        for l in lines {
            let (k, v) = l
                .split_once(' ')
                .ok_or_else(|| MsgfemError::Parse(format!("bad header line {l:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| -> Result<&str> {
            fields.get(k).copied().ok_or_else(|| MsgfemError::Parse(format!("missing {k}")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|e| MsgfemError::Parse(format!("{k}: {e}")))
        };
        let eps: f64 = get("eps")?.parse().map_err(|e| MsgfemError::Parse(format!("eps: {e}")))?;
        let coords: Vec<usize> = get("box")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| MsgfemError::Parse(format!("box: {e}"))))
            .collect::<Result<_>>()?;
        if coords.len() != 4 {
            return Err(MsgfemError::Parse("box needs four integers".into()));
        }
        let oversampling = CellBox::new(coords[0], coords[1], coords[2], coords[3]);
        let (n, count, dofs) = (int("n")?, int("eigenvalues")?, int("dofs")?);
        if dofs != oversampling.node_count() {
            return Err(MsgfemError::Parse("dof count does not match box".into()));
        }
        if data.len() != 8 * (count + n * dofs) {
            return Err(MsgfemError::Parse(format!(
                "expected {} data bytes, found {}",
                8 * (count + n * dofs),
                data.len()
            )));
        }
        let floats: Vec<f64> =
            data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let eigenvalues = floats[..count].to_vec();
        let vectors = floats[count..].chunks(dofs.max(1)).take(n).map(|c| c.to_vec()).collect();
        Ok((
            Self { subdomain: int("subdomain")?, eps, oversampling, eigenvalues, vectors },
            int("ell")?,
        ))
    }
}

/// Everything the coarse assembly needs from one subdomain.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub local: LocalProblem,
    pub particular: LocalParticular,
    pub basis: LocalSpectralBasis,
}

/// Build the local problem, particular function and top-`n` basis for
/// subdomain `i`; `n` is capped at the harmonic-space dimension.
#[allow(clippy::too_many_arguments)]
pub fn solve_subdomain(
    mesh: &StructuredMesh,
    coeff: &CellCoefficients,
    eps: f64,
    cover: &Cover,
    pu: &PartitionOfUnity,
    f: &SourceField,
    i: usize,
    n: usize,
) -> Result<LocalSolution> {
    let local = LocalProblem::build(mesh, coeff, eps, cover, i)?;
    let particular = local.solve_particular(mesh, f)?;
    let basis = if n == 0 || local.boundary().is_empty() {
        LocalSpectralBasis::empty(&local)
    } else {
        let ext = local.build_extension()?;
        let count = n.min(ext.boundary_len());
        local.solve_eigenproblem(&ext, pu.local(i), count)?
    };
    Ok(LocalSolution { local, particular, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;

    fn setup(n: usize, per_axis: usize, ell: usize) -> (StructuredMesh, CellCoefficients, Cover, PartitionOfUnity) {
        let mesh = StructuredMesh::new(n).unwrap();
        let coeff = CoefficientField::generate_multiscale(42, 1.0 / 16.0, 100.0).unwrap().sample(&mesh);
        let cover = Cover::build(&mesh, per_axis, ell).unwrap();
        let pu = PartitionOfUnity::build(&cover, &mesh).unwrap();
        (mesh, coeff, cover, pu)
    }

    #[test]
    fn dof_classification_matches_node_scan() {
        let (mesh, coeff, cover, _) = setup(16, 2, 2);
        for i in 0..cover.len() {
            let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, i).unwrap();
            let o = cover.oversampling(i);
            let (mut free, mut inner, mut bnd) = (0, 0, 0);
            for ix in o.x0..=o.x1 {
                for iy in o.y0..=o.y1 {
                    let on_gamma = ix == 0 || iy == 0 || ix == 16 || iy == 16;
                    let on_edge = ix == o.x0 || ix == o.x1 || iy == o.y0 || iy == o.y1;
                    if !on_gamma {
                        free += 1;
                        if on_edge {
                            bnd += 1;
                        } else {
                            inner += 1;
                        }
                    }
                }
            }
            assert_eq!(lp.dofs().len(), free);
            assert_eq!(lp.interior().len(), inner);
            assert_eq!(lp.boundary().len(), bnd);
            // ω* = [0,12)² for the lower-left subdomain: two sides on Γ
            if i == 0 {
                assert_eq!(*o, CellBox::new(0, 12, 0, 12));
                assert_eq!(bnd, 2 * 12 - 1);
                assert_eq!(lp.dofs().constrained().len(), 2 * 13 - 1);
            }
        }
    }

    #[test]
    fn interior_domain_has_no_constraints() {
        let (mesh, coeff, cover, _) = setup(24, 3, 1);
        let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, 4).unwrap();
        assert!(lp.dofs().constrained().is_empty());
        assert_eq!(lp.dofs().len(), lp.oversampling().node_count());
    }

    #[test]
    fn zero_source_gives_zero_particular() {
        let (mesh, coeff, cover, _) = setup(16, 2, 2);
        let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, 1).unwrap();
        let p = lp.solve_particular(&mesh, &SourceField::Constant(0.0)).unwrap();
        assert!(p.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_source_reaction_limit() {
        let mesh = StructuredMesh::new(256).unwrap();
        let coeff = CellCoefficients::constant(&mesh, 1.0);
        let cover = Cover::build(&mesh, 8, 2).unwrap();
        let i = 3 * 8 + 4;
        let lp = LocalProblem::build(&mesh, &coeff, 1e-4, &cover, i).unwrap();
        assert!(lp.dofs().constrained().is_empty());
        let p = lp.solve_particular(&mesh, &SourceField::Constant(1.0)).unwrap();
        let core = cover.core(i);
        let dev = core
            .nodes()
            .map(|(ix, iy)| (p.psi[lp.oversampling().local_node(ix, iy)] - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-6, "{dev}");
    }

    #[test]
    fn particular_residual_and_stability() {
        let (mesh, coeff, cover, _) = setup(32, 4, 3);
        let f = SourceField::benchmark();
        for i in [0, 5, 15] {
            let lp = LocalProblem::build(&mesh, &coeff, 0.05, &cover, i).unwrap();
            let p = lp.solve_particular(&mesh, &f).unwrap();
            assert!(p.residual <= 1e-10);
            let e = lp.energy_star(&p.psi).unwrap();
            let fl2 = crate::fem::assembly::l2_norm(&mesh, &f, lp.oversampling());
            assert!(e <= fl2 * (1.0 + 1e-8), "{e} > {fl2}");
        }
    }

    #[test]
    fn single_interior_node_by_hand() {
        // 3x3 nodes, center node interior, unit coefficient
        let mesh = StructuredMesh::new(2).unwrap();
        let coeff = CellCoefficients::constant(&mesh, 1.0);
        let op = assemble_energy(&mesh, &coeff, 0.5, &mesh.full_box()).unwrap();
        let interior = [4];
        let boundary = [0, 1, 2, 3, 5, 6, 7, 8];
        let ext = HarmonicExtension::from_operator(&op, &interior, &boundary).unwrap();
        let a_cc = op.get(4, 4);
        let b: Vec<f64> = (0..8).map(|k| 0.3 * k as f64 - 1.0).collect();
        let hand: f64 = -boundary.iter().zip(&b).map(|(&j, v)| op.get(4, j) * v).sum::<f64>() / a_cc;
        assert!((ext.interior_values(&b)[0] - hand).abs() < 1e-14);
        for (r, &j) in boundary.iter().enumerate() {
            for (c, &k) in boundary.iter().enumerate() {
                let s = op.get(j, k) - op.get(j, 4) * op.get(4, k) / a_cc;
                assert!((ext.schur()[(r, c)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn extension_membership_and_schur_identity() {
        let (mesh, coeff, cover, _) = setup(32, 2, 4);
        let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, 2).unwrap();
        let ext = lp.build_extension().unwrap();
        let m = ext.boundary_len();
        let rng = crate::coefficient::SplitMix64::new(5);
        for trial in 0..5u64 {
            let b: Vec<f64> = (0..m as u64).map(|k| rng.uniform(trial * 10_000 + k) - 0.5).collect();
            let x = ext.extend(&lp, &b);
            assert!(lp.harmonic_residual(&x) <= 1e-10);
            let full = lp.op_star().form(&x, &x);
            let s = ext.schur_form(&b);
            assert!((full - s).abs() <= 1e-12 * full.abs(), "{full} vs {s}");
        }
        // constant boundary data extends to a nonconstant function
        let x = ext.extend(&lp, &vec![1.0; m]);
        let spread = x.iter().zip(lp.dofs().region().nodes()).filter(|(_, (ix, iy))| !mesh.is_boundary_node(*ix, *iy));
        let (lo, hi) = spread.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
        assert!(hi - lo > 1e-3);
    }

    #[test]
    fn eigenpairs_are_ordered_and_orthonormal() {
        let (mesh, coeff, cover, pu) = setup(32, 2, 4);
        let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, 1).unwrap();
        let ext = lp.build_extension().unwrap();
        let basis = lp.solve_eigenproblem(&ext, pu.local(1), 8).unwrap();
        assert_eq!(basis.len(), 8);
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(basis.eigenvalues.iter().all(|&v| v >= 0.0));
        for j in 0..8 {
            assert!(lp.harmonic_residual(&basis.vectors[j]) <= 1e-10);
            for k in 0..8 {
                let free_j = lp.dofs().restrict(&basis.vectors[j]);
                let free_k = lp.dofs().restrict(&basis.vectors[k]);
                let g = lp.op_free().form(&free_j, &free_k);
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((g - want).abs() <= 1e-8, "({j},{k}) {g}");
            }
        }
        for n in 0..basis.eigenvalues.len() - 1 {
            assert!(basis.nwidth(n + 1).unwrap() <= basis.nwidth(n).unwrap());
        }
        assert!(basis.nwidth(basis.eigenvalues.len()).is_err());
        assert!(matches!(
            lp.solve_eigenproblem(&ext, pu.local(1), ext.boundary_len() + 1),
            Err(MsgfemError::Request(_))
        ));
    }

    #[test]
    fn zero_cutoff_gives_zero_spectrum() {
        let (mesh, coeff, cover, _) = setup(16, 2, 2);
        let lp = LocalProblem::build(&mesh, &coeff, 0.1, &cover, 0).unwrap();
        let ext = lp.build_extension().unwrap();
        let zero = vec![0.0; lp.subdomain().node_count()];
        let basis = lp.solve_eigenproblem(&ext, &zero, 3).unwrap();
        assert!(basis.eigenvalues.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whole_domain_patch_has_empty_basis() {
        let (mesh, coeff, cover, pu) = setup(16, 1, 3);
        let f = SourceField::benchmark();
        let sol = solve_subdomain(&mesh, &coeff, 0.1, &cover, &pu, &f, 0, 5).unwrap();
        assert!(sol.local.boundary().is_empty());
        assert!(sol.basis.is_empty());
        let ext = sol.local.build_extension().unwrap();
        assert!(sol.local.solve_eigenproblem(&ext, pu.local(0), 1).is_err());
        assert!(sol.local.solve_eigenproblem(&ext, pu.local(0), 0).unwrap().is_empty());
    }

    #[test]
    fn basis_file_round_trip() {
        let (mesh, coeff, cover, pu) = setup(16, 2, 2);
        let f = SourceField::benchmark();
        let sol = solve_subdomain(&mesh, &coeff, 0.1, &cover, &pu, &f, 3, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis3.bin");
        sol.basis.save(&path, 2).unwrap();
        let (back, ell) = LocalSpectralBasis::load(&path).unwrap();
        assert_eq!(ell, 2);
        assert_eq!(back, sol.basis);
    }
}
