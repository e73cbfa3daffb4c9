use crate::coefficient::{CellCoefficients, SourceField};
use crate::error::{MsgfemError, Result};
use crate::fem::mesh::{CellBox, StructuredMesh};
use crate::fem::sparse::SymmetricSparseOperator;

/// Q1 stiffness of `-Δ` on a square cell (independent of the side length
/// in 2D). Local nodes run counter-clockwise from the lower-left corner.
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Consistent Q1 mass on the unit square; scale by `h²`.
pub const Q1_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Global `(ix, iy)` of the four corners of cell `(cx, cy)`.
pub fn cell_nodes(cx: usize, cy: usize) -> [(usize, usize); 4] {
    [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)]
}

/// Element matrix of `ε² a ∫∇u·∇v + m ∫uv` on a square cell of side `h`.
pub fn element_energy(a: f64, eps: f64, h: f64, mass_scale: f64) -> [[f64; 4]; 4] {
    let mut e = [[0.0; 4]; 4];
    let (ks, ms) = (eps * eps * a, mass_scale * h * h);
    for (i, row) in e.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = ks * Q1_STIFFNESS[i][j] + ms * Q1_MASS[i][j];
        }
    }
    e
}

/// Energy operator `a_{ε,D}` assembled over the cells of `region`, indexed
/// by the region's box-local nodes (constrained nodes included).
pub fn assemble_energy(
    mesh: &StructuredMesh,
    coeff: &CellCoefficients,
    eps: f64,
    region: &CellBox,
) -> Result<SymmetricSparseOperator> {
    assemble_energy_scaled(mesh, coeff, eps, region, 1.0)
}

/// As [`assemble_energy`] with a scaled reaction term; only the mutation
/// smoke test uses a scale other than one.
pub(crate) fn assemble_energy_scaled(
    mesh: &StructuredMesh,
    coeff: &CellCoefficients,
    eps: f64,
    region: &CellBox,
    mass_scale: f64,
) -> Result<SymmetricSparseOperator> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(MsgfemError::Config(format!("eps must lie in (0, 1], got {eps}")));
    }
    if coeff.n() != mesh.n() {
        return Err(MsgfemError::GridMismatch(format!(
            "coefficient sampled on {} cells per axis, mesh has {}",
            coeff.n(),
            mesh.n()
        )));
    }
    let h = mesh.h();
    let mut trip = Vec::with_capacity(region.cell_count() * 16);
    for (cx, cy) in region.cells() {
        let a = coeff.get(cx, cy);
        if !(a > 0.0) || !a.is_finite() {
            return Err(MsgfemError::CoefficientBound(format!(
                "A = {a} at cell ({cx}, {cy})"
            )));
        }
        let el = element_energy(a, eps, h, mass_scale);
        let ids = cell_nodes(cx, cy).map(|(ix, iy)| region.local_node(ix, iy));
        for i in 0..4 {
            for j in 0..4 {
                trip.push((ids[i], ids[j], el[i][j]));
            }
        }
    }
    Ok(SymmetricSparseOperator::from_triplets(region.node_count(), trip))
}

/// Load vector `F(v_j) = ∫_region f v_j` with 2×2 Gauss quadrature per cell.
pub fn assemble_load(mesh: &StructuredMesh, f: &SourceField, region: &CellBox) -> Vec<f64> {
    let h = mesh.h();
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let w = 0.25 * h * h;
    let mut load = vec![0.0; region.node_count()];
    for (cx, cy) in region.cells() {
        let ids = cell_nodes(cx, cy).map(|(ix, iy)| region.local_node(ix, iy));
        for &sy in &pts {
            for &sx in &pts {
                let x = (cx as f64 + sx) * h;
                let y = (cy as f64 + sy) * h;
                let fv = f.eval(x, y) * w;
                let phi = [(1.0 - sx) * (1.0 - sy), sx * (1.0 - sy), sx * sy, (1.0 - sx) * sy];
                for k in 0..4 {
                    load[ids[k]] += fv * phi[k];
                }
            }
        }
    }
    load
}

/// `‖f‖_{L²(region)}` with the same 2×2 Gauss rule as [`assemble_load`].
pub fn l2_norm(mesh: &StructuredMesh, f: &SourceField, region: &CellBox) -> f64 {
    let h = mesh.h();
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let mut sum = 0.0;
    for (cx, cy) in region.cells() {
        for &sy in &pts {
            for &sx in &pts {
                let v = f.eval((cx as f64 + sx) * h, (cy as f64 + sy) * h);
                sum += v * v;
            }
        }
    }
    (sum * 0.25 * h * h).sqrt()
}

/// `sqrt(xᵀ A x)`, clamping tiny negative round-off to zero.
pub fn energy_norm(op: &SymmetricSparseOperator, x: &[f64]) -> Result<f64> {
    if x.len() != op.dim() {
        return Err(MsgfemError::Dimension { expected: op.dim(), got: x.len() });
    }
    let q = op.form(x, x);
    if q >= 0.0 {
        return Ok(q.sqrt());
    }
    let scale: f64 = x.iter().map(|v| v * v).sum();
    if q > -1e-14 * scale {
        Ok(0.0)
    } else {
        Err(MsgfemError::NegativeEnergy(q))
    }
}

/// Lagrange interpolant of a product of two nodal Q1 functions.
pub fn nodal_product(chi: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(chi.len(), x.len());
    chi.iter().zip(x).map(|(c, v)| c * v).collect()
}
