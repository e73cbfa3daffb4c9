use crate::error::{MsgfemError, Result};

/// Uniform Cartesian grid of `n × n` square Q1 cells on the unit square.
///
/// Nodes are numbered lexicographically, `id = iy * (n + 1) + ix`; cells
/// likewise with `id = cy * n + cx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuredMesh {
    n: usize,
}

impl StructuredMesh {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(MsgfemError::InvalidMesh(format!(
                "need at least 2 cells per axis, got {n}"
            )));
        }
        Ok(Self { n })
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.n
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        iy * (self.n + 1) + ix
    }

    pub fn node_coords(&self, id: usize) -> (usize, usize) {
        (id % (self.n + 1), id / (self.n + 1))
    }

    pub fn node_point(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.h(), iy as f64 * self.h())
    }

    pub fn cell_id(&self, cx: usize, cy: usize) -> usize {
        cy * self.n + cx
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        let h = self.h();
        ((cx as f64 + 0.5) * h, (cy as f64 + 0.5) * h)
    }

    /// Whether the node lies on the outer boundary.
    pub fn is_boundary_node(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.n || iy == self.n
    }

    pub fn boundary_node_count(&self) -> usize {
        4 * self.n
    }

    pub fn interior_node_count(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// The box covering every cell.
    pub fn full_box(&self) -> CellBox {
        CellBox::new(0, self.n, 0, self.n)
    }

    /// Degrees of freedom of `V_{h,0}`: boundary nodes constrained.
    pub fn global_dofs(&self) -> DofSet {
        let full = self.full_box();
        DofSet::new(full, |ix, iy| self.is_boundary_node(ix, iy))
    }
}

/// Half-open rectangle of cells `[x0, x1) × [y0, y1)`, with nodes
/// `x0..=x1 × y0..=y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl CellBox {
    pub fn new(x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn cell_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn nodes_x(&self) -> usize {
        self.width() + 1
    }

    pub fn nodes_y(&self) -> usize {
        self.height() + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn contains_cell(&self, cx: usize, cy: usize) -> bool {
        cx >= self.x0 && cx < self.x1 && cy >= self.y0 && cy < self.y1
    }

    /// Closed containment of a node.
    pub fn contains_node(&self, ix: usize, iy: usize) -> bool {
        ix >= self.x0 && ix <= self.x1 && iy >= self.y0 && iy <= self.y1
    }

    /// Node strictly inside the box.
    pub fn has_interior_node(&self, ix: usize, iy: usize) -> bool {
        ix > self.x0 && ix < self.x1 && iy > self.y0 && iy < self.y1
    }

    /// Box-local lexicographic index of a global node.
    pub fn local_node(&self, ix: usize, iy: usize) -> usize {
        (iy - self.y0) * self.nodes_x() + (ix - self.x0)
    }

    /// Global node coordinates of a box-local node index.
    pub fn global_node(&self, local: usize) -> (usize, usize) {
        let nx = self.nodes_x();
        (self.x0 + local % nx, self.y0 + local / nx)
    }

    /// Intersection with positive area, if any.
    pub fn intersect(&self, other: &CellBox) -> Option<CellBox> {
        let x0 = self.x0.max(other.x0);
        let x1 = self.x1.min(other.x1);
        let y0 = self.y0.max(other.y0);
        let y1 = self.y1.min(other.y1);
        (x0 < x1 && y0 < y1).then(|| CellBox::new(x0, x1, y0, y1))
    }

    /// Grow by `layers` cells on each side, clipped to `[0, n]`.
    pub fn extend(&self, layers: usize, n: usize) -> CellBox {
        CellBox::new(
            self.x0.saturating_sub(layers),
            (self.x1 + layers).min(n),
            self.y0.saturating_sub(layers),
            (self.y1 + layers).min(n),
        )
    }

    pub fn contains_box(&self, other: &CellBox) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Iterate the global `(cx, cy)` of every cell, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |cy| (self.x0..self.x1).map(move |cx| (cx, cy)))
    }

    /// Iterate the global `(ix, iy)` of every node, row-major.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..=self.y1).flat_map(move |iy| (self.x0..=self.x1).map(move |ix| (ix, iy)))
    }
}

/// Split of the nodes of a cell box into free and constrained (zero) dofs.
///
/// Free dofs keep the box-local lexicographic order, which keeps assembled
/// operators banded.
#[derive(Debug, Clone)]
pub struct DofSet {
    region: CellBox,
    free: Vec<usize>,
    constrained: Vec<usize>,
    index_of: Vec<usize>,
}

impl DofSet {
    pub const NONE: usize = usize::MAX;

    /// `is_constrained` receives global node coordinates.
    pub fn new(region: CellBox, is_constrained: impl Fn(usize, usize) -> bool) -> Self {
        let mut free = Vec::new();
        let mut constrained = Vec::new();
        let mut index_of = vec![Self::NONE; region.node_count()];
        for (local, (ix, iy)) in region.nodes().enumerate() {
            if is_constrained(ix, iy) {
                constrained.push(local);
            } else {
                index_of[local] = free.len();
                free.push(local);
            }
        }
        Self { region, free, constrained, index_of }
    }

    pub fn region(&self) -> &CellBox {
        &self.region
    }

    /// Box-local node ids of the free dofs.
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Free-dof index of a box-local node, or `None` when constrained.
    pub fn index_of(&self, local_node: usize) -> Option<usize> {
        let k = self.index_of[local_node];
        (k != Self::NONE).then_some(k)
    }

    /// Scatter free-dof values into a box-node vector (constrained = 0).
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.region.node_count()];
        for (&node, &v) in self.free.iter().zip(free_values) {
            out[node] = v;
        }
        out
    }

    /// Gather free-dof values from a box-node vector.
    pub fn restrict(&self, node_values: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&node| node_values[node]).collect()
    }
}

/// Copy values between two boxes through global node coordinates; nodes of
/// `to` outside `from` are zeroed.
pub fn transfer(from: &CellBox, values: &[f64], to: &CellBox) -> Vec<f64> {
    to.nodes()
        .map(|(ix, iy)| {
            if from.contains_node(ix, iy) {
                values[from.local_node(ix, iy)]
            } else {
                0.0
            }
        })
        .collect()
}
