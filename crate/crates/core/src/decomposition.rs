//! Overlapping cover, oversampling domains and the flat-top partition of
//! unity.
//!
//! The cell grid is split into `N × N` disjoint cores. Each core grows by
//! [`COVER_LAYERS`] cells to give the subdomain `ω_i`, which grows by `ℓ`
//! more cells to give the oversampling domain `ω*_i`; both are clipped to the
//! unit square. The partition of unity ramps linearly across the `4h` band
//! around every interior core edge and is not ramped toward the outer
//! boundary.

use std::fmt::Write as _;

use crate::error::{MsgfemError, Result};
use crate::fem::mesh::{CellBox, StructuredMesh};

/// Element layers added to each core to form the subdomains.
pub const COVER_LAYERS: usize = 2;
/// Width in cells of the partition-of-unity ramp.
pub const RAMP_CELLS: usize = 2 * COVER_LAYERS;

#[derive(Debug, Clone)]
pub struct Cover {
    n: usize,
    per_axis: usize,
    ell: usize,
    cores: Vec<CellBox>,
    subdomains: Vec<CellBox>,
    oversampling: Vec<CellBox>,
    kappa: usize,
    kappa_star: usize,
}

impl Cover {
    /// `per_axis` subdomains per axis with `ell` oversampling layers.
    pub fn build(mesh: &StructuredMesh, per_axis: usize, ell: usize) -> Result<Self> {
        let n = mesh.n();
        if per_axis == 0 || !n.is_multiple_of(per_axis) {
            return Err(MsgfemError::Partition(format!(
                "{per_axis} subdomains per axis do not divide {n} cells"
            )));
        }
        let core = n / per_axis;
        if per_axis > 1 && core < RAMP_CELLS {
            return Err(MsgfemError::CoverConfig(format!(
                "core width {core} cells is smaller than the {RAMP_CELLS}-cell overlap band"
            )));
        }
        let mut cores = Vec::with_capacity(per_axis * per_axis);
        for j in 0..per_axis {
            for i in 0..per_axis {
                cores.push(CellBox::new(i * core, (i + 1) * core, j * core, (j + 1) * core));
            }
        }
        let subdomains: Vec<CellBox> = cores.iter().map(|c| c.extend(COVER_LAYERS, n)).collect();
        let oversampling: Vec<CellBox> = subdomains.iter().map(|w| w.extend(ell, n)).collect();
        let kappa = max_multiplicity(n, &subdomains);
        let kappa_star = max_multiplicity(n, &oversampling);
        Ok(Self { n, per_axis, ell, cores, subdomains, oversampling, kappa, kappa_star })
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn mesh_cells(&self) -> usize {
        self.n
    }

    pub fn core(&self, i: usize) -> &CellBox {
        &self.cores[i]
    }

    pub fn subdomain(&self, i: usize) -> &CellBox {
        &self.subdomains[i]
    }

    pub fn oversampling(&self, i: usize) -> &CellBox {
        &self.oversampling[i]
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn kappa_star(&self) -> usize {
        self.kappa_star
    }

    /// `dist(ω_i, ∂ω*_i \ ∂Ω)` in units of `h`; infinite when `ω*_i` has no
    /// edge inside the square.
    pub fn delta_star_layers(&self, i: usize) -> f64 {
        let (w, o, n) = (&self.subdomains[i], &self.oversampling[i], self.n);
        let gaps = [
            (o.x0 > 0).then(|| w.x0 - o.x0),
            (o.x1 < n).then(|| o.x1 - w.x1),
            (o.y0 > 0).then(|| w.y0 - o.y0),
            (o.y1 < n).then(|| o.y1 - w.y1),
        ];
        gaps.iter().flatten().map(|&g| g as f64).fold(f64::INFINITY, f64::min)
    }

    /// Indices `j ≠ i` whose subdomain shares at least one cell with `ω_i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| j != i && self.subdomains[i].intersect(&self.subdomains[j]).is_some())
            .collect()
    }
}

/// `(κ, κ*)` by exhaustive cell scan.
pub fn overlap_stats(cover: &Cover) -> (usize, usize) {
    (cover.kappa, cover.kappa_star)
}

fn max_multiplicity(n: usize, boxes: &[CellBox]) -> usize {
    let mut count = vec![0usize; n * n];
    for b in boxes {
        for (cx, cy) in b.cells() {
            count[cy * n + cx] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}

/// Nodal partition of unity, one vector per subdomain on its box nodes.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    boxes: Vec<CellBox>,
    chi: Vec<Vec<f64>>,
    gradient_bound: f64,
}

impl PartitionOfUnity {
    pub fn build(cover: &Cover, mesh: &StructuredMesh) -> Result<Self> {
        let n = mesh.n();
        let boxes: Vec<CellBox> = (0..cover.len()).map(|i| *cover.subdomain(i)).collect();
        let eta: Vec<Vec<f64>> = boxes.iter().map(|b| ramp(b, n)).collect();
        let mut total = vec![0.0; mesh.node_count()];
        for (b, e) in boxes.iter().zip(&eta) {
            for (local, (ix, iy)) in b.nodes().enumerate() {
                total[mesh.node_id(ix, iy)] += e[local];
            }
        }
        if let Some(node) = total.iter().position(|&t| !(t > 0.0)) {
            return Err(MsgfemError::PartitionOfUnity(format!(
                "no subdomain weight at node {node}"
            )));
        }
        let chi: Vec<Vec<f64>> = boxes
            .iter()
            .zip(&eta)
            .map(|(b, e)| {
                b.nodes()
                    .zip(e)
                    .map(|((ix, iy), &v)| if v == 0.0 { 0.0 } else { v / total[mesh.node_id(ix, iy)] })
                    .collect()
            })
            .collect();
        let h = mesh.h();
        let gradient_bound = boxes
            .iter()
            .zip(&chi)
            .map(|(b, c)| max_gradient(b, c, h))
            .fold(0.0, f64::max);
        Ok(Self { boxes, chi, gradient_bound })
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    /// `χ_i` on the nodes of `ω_i`, box-local order.
    pub fn local(&self, i: usize) -> &[f64] {
        &self.chi[i]
    }

    pub fn subdomain(&self, i: usize) -> &CellBox {
        &self.boxes[i]
    }

    /// `χ_i` as a vector over all mesh nodes.
    pub fn global(&self, i: usize, mesh: &StructuredMesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.node_count()];
        for ((ix, iy), &v) in self.boxes[i].nodes().zip(&self.chi[i]) {
            out[mesh.node_id(ix, iy)] = v;
        }
        out
    }

    /// Measured `max_i ‖∇χ_i‖_∞` of the Q1 interpolants.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// Largest `|Σ_i χ_i − 1|` over mesh nodes.
    pub fn sum_defect(&self, mesh: &StructuredMesh) -> f64 {
        let mut total = vec![0.0; mesh.node_count()];
        for (b, c) in self.boxes.iter().zip(&self.chi) {
            for ((ix, iy), &v) in b.nodes().zip(c) {
                total[mesh.node_id(ix, iy)] += v;
            }
        }
        total.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Diagnostic long-format CSV: `node,x_index,y_index,subdomain,chi` for
    /// every nonzero value.
    pub fn to_csv(&self, mesh: &StructuredMesh) -> String {
        let mut out = String::from("node,x_index,y_index,subdomain,chi\n");
        for (i, (b, c)) in self.boxes.iter().zip(&self.chi).enumerate() {
            for ((ix, iy), &v) in b.nodes().zip(c) {
                if v != 0.0 {
                    let _ = writeln!(out, "{},{ix},{iy},{i},{v:e}", mesh.node_id(ix, iy));
                }
            }
        }
        out
    }
}

/// Unnormalized flat-top weight of a subdomain on its box nodes.
fn ramp(b: &CellBox, n: usize) -> Vec<f64> {
    let w = RAMP_CELLS as f64;
    let axis = |k: usize, lo: usize, hi: usize| -> f64 {
        let mut r: f64 = 1.0;
        if lo > 0 {
            r = r.min((k - lo) as f64 / w);
        }
        if hi < n {
            r = r.min((hi - k) as f64 / w);
        }
        r
    };
    b.nodes().map(|(ix, iy)| axis(ix, b.x0, b.x1) * axis(iy, b.y0, b.y1)).collect()
}

/// Max gradient norm of a Q1 function over the cells of a box; attained at
/// cell corners since each gradient component is affine on a cell.
fn max_gradient(b: &CellBox, values: &[f64], h: f64) -> f64 {
    let mut best: f64 = 0.0;
    for (cx, cy) in b.cells() {
        let v = |ix: usize, iy: usize| values[b.local_node(ix, iy)];
        let (u0, u1, u2, u3) = (v(cx, cy), v(cx + 1, cy), v(cx + 1, cy + 1), v(cx, cy + 1));
        for (sx, sy) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            let gx = ((1.0 - sy) * (u1 - u0) + sy * (u2 - u3)) / h;
            let gy = ((1.0 - sx) * (u3 - u0) + sx * (u2 - u1)) / h;
            best = best.max((gx * gx + gy * gy).sqrt());
        }
    }
    best
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn scan_kappa(n: usize, boxes: &[CellBox]) -> usize {
        let mut best = 0;
        for cy in 0..n {
            for cx in 0..n {
                best = best.max(boxes.iter().filter(|b| b.contains_cell(cx, cy)).count());
            }
        }
        best
    }

    #[test]
    fn no_oversampling_case() {
        let mesh = StructuredMesh::new(8).unwrap();
        let c = Cover::build(&mesh, 2, 0).unwrap();
        for i in 0..c.len() {
            assert_eq!(c.subdomain(i), c.oversampling(i));
        }
        let subs: Vec<CellBox> = (0..4).map(|i| *c.subdomain(i)).collect();
        assert_eq!(c.kappa(), scan_kappa(8, &subs));
        assert_eq!(c.kappa(), 4);
    }

    #[test]
    fn kappa_cross_point_with_oversampling() {
        let mesh = StructuredMesh::new(8).unwrap();
        let c = Cover::build(&mesh, 2, 2).unwrap();
        assert_eq!(overlap_stats(&c), (4, 4));
        // the four boxes meet on the central cells
        for i in 0..4 {
            assert!(c.subdomain(i).contains_cell(3, 4));
        }
    }

    #[test]
    fn full_scale_delta_star() {
        let mesh = StructuredMesh::new(1000).unwrap();
        let c = Cover::build(&mesh, 10, 15).unwrap();
        // interior subdomain (4, 4)
        assert_eq!(c.delta_star_layers(44) * mesh.h(), 15.0 * mesh.h());
        let (k, ks) = overlap_stats(&c);
        assert_eq!(k, 4);
        let over: Vec<CellBox> = (0..c.len()).map(|i| *c.oversampling(i)).collect();
        assert_eq!(ks, scan_kappa(1000, &over));
    }

    #[test]
    fn build_errors() {
        let mesh = StructuredMesh::new(10).unwrap();
        assert!(matches!(Cover::build(&mesh, 3, 1), Err(MsgfemError::Partition(_))));
        assert!(matches!(Cover::build(&mesh, 5, 1), Err(MsgfemError::CoverConfig(_))));
    }

    #[test]
    fn single_patch_is_one() {
        let mesh = StructuredMesh::new(6).unwrap();
        let c = Cover::build(&mesh, 1, 3).unwrap();
        assert_eq!(overlap_stats(&c), (1, 1));
        let pu = PartitionOfUnity::build(&c, &mesh).unwrap();
        assert!(pu.local(0).iter().all(|&v| v == 1.0));
        assert_eq!(pu.gradient_bound(), 0.0);
        assert!(c.delta_star_layers(0).is_infinite());
    }

    #[test]
    fn ramp_values_on_slice() {
        // n=8, N=2: cores [0,4) and [4,8); ω_0 = [0,6), ω_1 = [2,8)
        let mesh = StructuredMesh::new(8).unwrap();
        let c = Cover::build(&mesh, 2, 0).unwrap();
        let pu = PartitionOfUnity::build(&c, &mesh).unwrap();
        let chi0 = pu.global(0, &mesh);
        let chi1 = pu.global(1, &mesh);
        let iy = 1;
        let expect0 = [1.0, 1.0, 1.0, 0.75, 0.5, 0.25, 0.0, 0.0, 0.0];
        for ix in 0..=8 {
            let id = mesh.node_id(ix, iy);
            assert_eq!(chi0[id], expect0[ix], "ix={ix}");
            assert_eq!(chi0[id] + chi1[id], 1.0);
        }
        // one ramp alone has slope 1/(4h); at band crossings two ramps combine
        let g = pu.gradient_bound() * mesh.h();
        assert!(g >= 0.25 - 1e-12 && g <= 0.25 * 2f64.sqrt() + 1e-12, "{g}");
    }

    #[test]
    fn pu_properties() {
        let mesh = StructuredMesh::new(48).unwrap();
        let c = Cover::build(&mesh, 4, 3).unwrap();
        let pu = PartitionOfUnity::build(&c, &mesh).unwrap();
        assert!(pu.sum_defect(&mesh) <= 1e-13);
        for i in 0..c.len() {
            let chi = pu.global(i, &mesh);
            let w = c.subdomain(i);
            for id in 0..mesh.node_count() {
                let (ix, iy) = mesh.node_coords(id);
                assert!((0.0..=1.0).contains(&chi[id]));
                if !w.contains_node(ix, iy) {
                    assert_eq!(chi[id], 0.0);
                }
            }
            let core = c.core(i);
            for (ix, iy) in core.nodes() {
                let inner = CellBox::new(
                    if core.x0 > 0 { core.x0 + 2 } else { 0 },
                    if core.x1 < 48 { core.x1 - 2 } else { 48 },
                    if core.y0 > 0 { core.y0 + 2 } else { 0 },
                    if core.y1 < 48 { core.y1 - 2 } else { 48 },
                );
                if inner.contains_node(ix, iy) {
                    assert_eq!(chi[mesh.node_id(ix, iy)], 1.0);
                }
            }
        }
        assert!(pu.to_csv(&mesh).starts_with("node,x_index,y_index,subdomain,chi\n"));
    }
}
