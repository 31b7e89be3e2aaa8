//! Periodic tensor-product grids and MAC (staggered) index conventions.
//!
//! Every grid is periodic along all three axes. Cell widths may vary per
//! axis (graded grids are used for the exterior cell problem). Boundaries
//! of non-periodic problems are represented by fixed faces, never by
//! special-cased index ranges.
//!
//! Layout: cells are indexed `i + nx * (j + ny * k)`. The face of
//! component `c` stored at cell index `q` lies on the lower-`c` side of
//! cell `q`. The edge of pair `(c, d)` stored at `q` is the lower-`c`,
//! lower-`d` edge of cell `q`, running along the remaining axis.
//! Face fields are flat vectors of length `3 * len` (component-major).

/// Axis pairs of the three edge families, indexed by `edge` in `0..3`.
pub const EDGE_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// The axis an edge family runs along.
pub const fn edge_axis(edge: usize) -> usize {
    2 - edge
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    origin: f64,
    widths: Vec<f64>,
    nodes: Vec<f64>,
    center_gaps: Vec<f64>,
}

impl Axis {
    pub fn uniform(n: usize, length: f64) -> Self {
        Self::from_widths(0.0, vec![length / n as f64; n])
    }

    pub fn from_widths(origin: f64, widths: Vec<f64>) -> Self {
        assert!(!widths.is_empty(), "axis needs at least one cell");
        let n = widths.len();
        let mut nodes = Vec::with_capacity(n + 1);
        let mut x = origin;
        nodes.push(x);
        for w in &widths {
            x += w;
            nodes.push(x);
        }
        let center_gaps = (0..n)
            .map(|i| 0.5 * (widths[(i + n - 1) % n] + widths[i]))
            .collect();
        Self {
            origin,
            widths,
            nodes,
            center_gaps,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.widths.len()
    }

    #[inline]
    pub fn width(&self, i: usize) -> f64 {
        self.widths[i]
    }

    /// Distance between the centers of cells `i - 1` and `i` (wrapping).
    #[inline]
    pub fn center_gap(&self, i: usize) -> f64 {
        self.center_gaps[i]
    }

    /// Lower node of cell `i`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.nodes[i] + self.nodes[i + 1])
    }

    pub fn length(&self) -> f64 {
        self.nodes[self.n()] - self.origin
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn gaps(&self) -> &[f64] {
        &self.center_gaps
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.widths[0];
        self.widths.iter().all(|w| (w - w0).abs() <= 1e-14 * w0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: [Axis; 3],
    dims: [usize; 3],
    strides: [usize; 3],
}

impl Grid {
    pub fn new(axes: [Axis; 3]) -> Self {
        let dims = [axes[0].n(), axes[1].n(), axes[2].n()];
        let strides = [1, dims[0], dims[0] * dims[1]];
        Self {
            axes,
            dims,
            strides,
        }
    }

    /// Uniform grid with spacing `h` and the given cell counts.
    pub fn uniform(dims: [usize; 3], h: f64) -> Self {
        Self::new([
            Axis::uniform(dims[0], dims[0] as f64 * h),
            Axis::uniform(dims[1], dims[1] as f64 * h),
            Axis::uniform(dims[2], dims[2] as f64 * h),
        ])
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [
            self.axes[0].length(),
            self.axes[1].length(),
            self.axes[2].length(),
        ]
    }

    pub fn volume(&self) -> f64 {
        let l = self.lengths();
        l[0] * l[1] * l[2]
    }

    /// Spacing of a uniform cubic grid, if this is one.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let h = self.axes[0].width(0);
        let ok = self
            .axes
            .iter()
            .all(|a| a.is_uniform() && (a.width(0) - h).abs() <= 1e-14 * h);
        ok.then_some(h)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, q: usize) -> [usize; 3] {
        let i = q % self.dims[0];
        let r = q / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// Index of the neighbor of `q` (with coordinate `ia` along `a`) one step up along `a`.
    #[inline]
    pub fn next(&self, a: usize, q: usize, ia: usize) -> usize {
        if ia + 1 == self.dims[a] {
            q + self.strides[a] - self.dims[a] * self.strides[a]
        } else {
            q + self.strides[a]
        }
    }

    #[inline]
    pub fn prev(&self, a: usize, q: usize, ia: usize) -> usize {
        if ia == 0 {
            q + (self.dims[a] - 1) * self.strides[a]
        } else {
            q - self.strides[a]
        }
    }

    #[inline]
    pub fn cell_volume(&self, c: [usize; 3]) -> f64 {
        self.axes[0].width(c[0]) * self.axes[1].width(c[1]) * self.axes[2].width(c[2])
    }

    /// Area of the face of component `comp` at cell coordinates `c`.
    #[inline]
    pub fn face_area(&self, comp: usize, c: [usize; 3]) -> f64 {
        let (a, b) = other_axes(comp);
        self.axes[a].width(c[a]) * self.axes[b].width(c[b])
    }

    /// Control volume of the face of component `comp` at cell coordinates `c`.
    #[inline]
    pub fn face_volume(&self, comp: usize, c: [usize; 3]) -> f64 {
        self.axes[comp].center_gap(c[comp]) * self.face_area(comp, c)
    }

    #[inline]
    pub fn edge_volume(&self, edge: usize, c: [usize; 3]) -> f64 {
        let (a, b) = EDGE_PAIRS[edge];
        let t = edge_axis(edge);
        self.axes[a].center_gap(c[a]) * self.axes[b].center_gap(c[b]) * self.axes[t].width(c[t])
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        [
            self.axes[0].center(c[0]),
            self.axes[1].center(c[1]),
            self.axes[2].center(c[2]),
        ]
    }

    pub fn face_center(&self, comp: usize, c: [usize; 3]) -> [f64; 3] {
        let mut x = self.cell_center(c);
        x[comp] = self.axes[comp].node(c[comp]);
        x
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|q| self.cell_volume(self.coords(q)))
            .collect()
    }

    pub fn face_volumes(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; 3 * n];
        for comp in 0..3 {
            for q in 0..n {
                out[comp * n + q] = self.face_volume(comp, self.coords(q));
            }
        }
        out
    }
}

#[inline]
pub const fn other_axes(a: usize) -> (usize, usize) {
    match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Edge family index of the unordered axis pair `(a, b)`.
#[inline]
pub fn edge_of(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 1) => 0,
        (0, 2) => 1,
        (1, 2) => 2,
        _ => panic!("edge_of: axes must differ"),
    }
}

/// Visit every cell in storage order together with its coordinates.
#[inline]
pub fn for_each_cell(grid: &Grid, mut f: impl FnMut(usize, [usize; 3])) {
    let [nx, ny, nz] = grid.dims();
    let mut q = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                f(q, [i, j, k]);
                q += 1;
            }
        }
    }
}

/// Start offsets of an x-row `(j, k)` and of its periodic neighbour rows.
#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub j: usize,
    pub k: usize,
    pub base: usize,
    pub jn: usize,
    pub jp: usize,
    pub kn: usize,
    pub kp: usize,
}

/// Visit every x-row in storage order. Inside a row, cell `i` sits at `base + i`.
#[inline]
pub fn for_each_row(grid: &Grid, mut f: impl FnMut(Row)) {
    let [nx, ny, nz] = grid.dims();
    for k in 0..nz {
        let kn = (k + 1) % nz;
        let kp = (k + nz - 1) % nz;
        for j in 0..ny {
            let jn = (j + 1) % ny;
            let jp = (j + ny - 1) % ny;
            f(Row {
                j,
                k,
                base: nx * (j + ny * k),
                jn: nx * (jn + ny * k),
                jp: nx * (jp + ny * k),
                kn: nx * (j + ny * kn),
                kp: nx * (j + ny * kp),
            });
        }
    }
}

/// Periodic neighbours `(next, prev)` of index `i` in `0..n`.
#[inline(always)]
pub fn wrap(i: usize, n: usize) -> (usize, usize) {
    let inx = if i + 1 == n { 0 } else { i + 1 };
    let ipv = if i == 0 { n - 1 } else { i - 1 };
    (inx, ipv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbors_wrap() {
        let g = Grid::uniform([4, 3, 2], 0.25);
        let q = g.index(3, 2, 1);
        assert_eq!(g.next(0, q, 3), g.index(0, 2, 1));
        assert_eq!(g.next(1, q, 2), g.index(3, 0, 1));
        assert_eq!(g.next(2, q, 1), g.index(3, 2, 0));
        let q0 = g.index(0, 0, 0);
        assert_eq!(g.prev(0, q0, 0), g.index(3, 0, 0));
        assert_eq!(g.prev(2, q0, 0), g.index(0, 0, 1));
        assert_eq!(g.coords(q), [3, 2, 1]);
    }

    #[test]
    fn graded_axis_gaps() {
        let a = Axis::from_widths(-1.0, vec![1.0, 0.5, 0.5, 1.0]);
        assert_eq!(a.length(), 3.0);
        assert_eq!(a.center_gap(1), 0.75);
        assert_eq!(a.center_gap(0), 1.0);
        assert_eq!(a.center(0), -0.5);
        assert!(!a.is_uniform());
    }

    #[test]
    fn volumes_tile_the_box() {
        let g = Grid::new([
            Axis::from_widths(0.0, vec![0.1, 0.2, 0.3]),
            Axis::uniform(2, 1.0),
            Axis::from_widths(0.0, vec![0.5, 0.25]),
        ]);
        let total: f64 = g.cell_volumes().iter().sum();
        assert!((total - g.volume()).abs() < 1e-14);
        let fv = g.face_volumes();
        let n = g.len();
        for comp in 0..3 {
            let s: f64 = fv[comp * n..(comp + 1) * n].iter().sum();
            assert!((s - g.volume()).abs() < 1e-14);
        }
    }
}
