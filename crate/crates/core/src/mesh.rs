//! Conforming simplicial meshes of axis-aligned boxes.
//!
//! Two-dimensional boxes are split into squares and every square into four
//! triangles around its center ("union jack"). Three-dimensional boxes are
//! split into cubes and every cube into six tetrahedra sharing one main
//! diagonal (Kuhn/Freudenthal); neighbouring cubes are mirror images of each
//! other so that the diagonal always starts at the lattice corner whose indices
//! are all even.
//!
//! Vertex numbering is deterministic: lattice vertices first in lexicographic
//! order (x fastest), then square centers (2D only) in the same order.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("cell index {index} out of range (mesh has {len} cells)")]
    CellOutOfRange { index: usize, len: usize },
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self, MeshError> {
        if bounds.len() != 2 && bounds.len() != 3 {
            return Err(MeshError::InvalidDomain(format!(
                "expected 2 or 3 axes, got {}",
                bounds.len()
            )));
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(MeshError::InvalidDomain(format!(
                    "axis {axis}: bounds ({lo}, {hi}) are degenerate"
                )));
            }
        }
        Ok(Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, MeshError> {
        Self::new(&vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo.iter().copied().zip(self.hi.iter().copied()).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    /// True if `x` lies strictly inside the box.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(x).all(|((&l, &h), &c)| c > l && c < h) && !self.on_boundary(x)
    }

    /// True if `x` lies on one of the box faces (relative tolerance 1e-12).
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.lo.iter().zip(&self.hi).zip(x).any(|((&l, &h), &c)| {
            let tol = 1e-12 * (h - l);
            (c - l).abs() <= tol || (c - h).abs() <= tol
        })
    }
}

/// Geometry of one simplex.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    /// Positive cell volume (area in 2D).
    pub volume: f64,
    /// Vertex coordinates, `dim + 1` rows of length `dim`.
    pub coords: Vec<Vec<f64>>,
    /// Row-major `dim x dim` Jacobian of the affine map from the reference
    /// simplex; column `a` is `x_{a+1} - x_0`.
    pub jacobian: Vec<f64>,
    /// `det(jacobian)`, positive for every cell of a valid mesh.
    pub det: f64,
    /// Gradients of the barycentric coordinates, `dim + 1` rows of length `dim`.
    pub grad_bary: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    domain: BoxDomain,
    resolution: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    boundary_vertex: Vec<bool>,
    boundary_facets: Vec<Vec<usize>>,
    h: f64,
    quasi_uniformity: f64,
    volumes: Vec<f64>,
    grad_bary: Vec<f64>,
}

/// Boundary/interior split of the mesh vertices and the outward boundary facets.
#[derive(Debug, Clone)]
pub struct BoundaryClassification {
    pub boundary_vertices: Vec<usize>,
    pub interior_vertices: Vec<usize>,
    pub boundary_facets: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds the box mesh with `n` cells per axis.
    pub fn build_box(domain: &BoxDomain, n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidDomain("resolution n must be >= 1".into()));
        }
        let dim = domain.dim();
        let (coords, cells) = match dim {
            2 => union_jack(domain, n),
            3 => reflected_kuhn(domain, n),
            _ => unreachable!("BoxDomain enforces dim 2 or 3"),
        };
        Self::assemble(domain, n, coords, cells)
    }

    /// Copy with every interior vertex `v` moved to `f(v, x_v)`; boundary
    /// vertices stay put. Fails if a cell degenerates or inverts.
    pub fn displaced(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self, MeshError> {
        let d = self.dim;
        let mut coords = self.coords.clone();
        for v in 0..self.num_vertices() {
            if !self.boundary_vertex[v] {
                let x = f(v, &self.coords[v * d..(v + 1) * d]);
                if x.len() != d || !self.domain.contains_interior(&x) {
                    return Err(MeshError::InvalidDomain(format!("displaced vertex {v} leaves the domain interior")));
                }
                coords[v * d..(v + 1) * d].copy_from_slice(&x);
            }
        }
        let mesh = Self::assemble(&self.domain, self.resolution, coords, self.cells.clone())?;
        for c in 0..mesh.num_cells() {
            let (old, new) = (self.geometry_unchecked(c).det, mesh.geometry_unchecked(c).det);
            if !(new * old.signum() > 1e-12 * old.abs()) {
                return Err(MeshError::InvalidDomain(format!("displacement inverts cell {c}")));
            }
        }
        Ok(mesh)
    }

    fn assemble(domain: &BoxDomain, n: usize, coords: Vec<f64>, cells: Vec<usize>) -> Result<Self, MeshError> {
        let dim = domain.dim();
        let nv = coords.len() / dim;
        let boundary_vertex = (0..nv)
            .map(|v| domain.on_boundary(&coords[v * dim..(v + 1) * dim]))
            .collect();
        let mut mesh = Mesh {
            dim,
            domain: domain.clone(),
            resolution: n,
            coords,
            cells,
            boundary_vertex,
            boundary_facets: Vec::new(),
            h: 0.0,
            quasi_uniformity: 0.0,
            volumes: Vec::new(),
            grad_bary: Vec::new(),
        };
        mesh.boundary_facets = mesh.collect_boundary_facets();
        let mut h: f64 = 0.0;
        let mut min_inscribed = f64::INFINITY;
        for c in 0..mesh.num_cells() {
            let (diam, inscribed) = mesh.cell_shape(c);
            h = h.max(diam);
            min_inscribed = min_inscribed.min(inscribed);
        }
        mesh.h = h;
        mesh.quasi_uniformity = h / min_inscribed;
        for c in 0..mesh.num_cells() {
            let g = mesh.geometry_unchecked(c);
            mesh.volumes.push(g.volume);
            for row in &g.grad_bary {
                mesh.grad_bary.extend_from_slice(row);
            }
        }
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Cells per axis used to build the mesh.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.dim + 1)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Maximal cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Ratio of the maximal cell diameter to the minimal inscribed-ball diameter.
    pub fn quasi_uniformity_ratio(&self) -> f64 {
        self.quasi_uniformity
    }

    pub fn boundary_facets(&self) -> &[Vec<usize>] {
        &self.boundary_facets
    }

    pub fn boundary_classification(&self) -> BoundaryClassification {
        let (boundary_vertices, interior_vertices) =
            (0..self.num_vertices()).partition(|&v| self.boundary_vertex[v]);
        BoundaryClassification {
            boundary_vertices,
            interior_vertices,
            boundary_facets: self.boundary_facets.clone(),
        }
    }

    /// Cells all of whose vertices lie on the boundary.
    pub fn cells_without_interior_vertex(&self) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&c| self.cell(c).iter().all(|&v| self.boundary_vertex[v]))
            .collect()
    }

    /// Every cell owns at least one vertex off the boundary.
    pub fn satisfies_interior_vertex_assumption(&self) -> bool {
        self.cells_without_interior_vertex().is_empty()
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.volumes[c]
    }

    /// Gradients of the barycentric coordinates of cell `c`, row-major
    /// `(dim + 1) x dim`.
    pub fn cell_grad_bary(&self, c: usize) -> &[f64] {
        let n = (self.dim + 1) * self.dim;
        &self.grad_bary[c * n..(c + 1) * n]
    }

    /// Maps barycentric coordinates on cell `c` to physical coordinates.
    pub fn bary_to_point(&self, c: usize, bary: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (&v, &l) in self.cell(c).iter().zip(bary) {
            for (o, x) in out.iter_mut().zip(self.vertex(v)) {
                *o += l * x;
            }
        }
    }

    pub fn cell_geometry(&self, c: usize) -> Result<CellGeometry, MeshError> {
        if c >= self.num_cells() {
            return Err(MeshError::CellOutOfRange {
                index: c,
                len: self.num_cells(),
            });
        }
        Ok(self.geometry_unchecked(c))
    }

    pub(crate) fn geometry_unchecked(&self, c: usize) -> CellGeometry {
        let d = self.dim;
        let verts = self.cell(c);
        let coords: Vec<Vec<f64>> = verts.iter().map(|&v| self.vertex(v).to_vec()).collect();
        let mut jac = vec![0.0; d * d];
        for a in 0..d {
            for r in 0..d {
                jac[r * d + a] = coords[a + 1][r] - coords[0][r];
            }
        }
        let (det, inv) = invert_small(&jac, d);
        let fact: f64 = (1..=d).map(|i| i as f64).product();
        // Rows of J^{-1} are the gradients of lambda_1..lambda_d.
        let mut grad_bary = vec![vec![0.0; d]; d + 1];
        for i in 0..d {
            for r in 0..d {
                grad_bary[i + 1][r] = inv[i * d + r];
                grad_bary[0][r] -= inv[i * d + r];
            }
        }
        CellGeometry {
            volume: det.abs() / fact,
            coords,
            jacobian: jac,
            det,
            grad_bary,
        }
    }

    /// Total volume of all cells.
    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Number of cells sharing each facet, keyed by the sorted facet vertices.
    pub fn facet_incidence(&self) -> HashMap<Vec<usize>, usize> {
        let mut count = HashMap::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut f: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                *count.entry(f).or_insert(0) += 1;
            }
        }
        count
    }

    /// Sorted list of unique edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_cells() * 6);
        for cell in self.cells() {
            for i in 0..cell.len() {
                for j in i + 1..cell.len() {
                    let (a, b) = (cell[i].min(cell[j]), cell[i].max(cell[j]));
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    fn collect_boundary_facets(&self) -> Vec<Vec<usize>> {
        let incidence = self.facet_incidence();
        let mut facets = Vec::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut f: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                let mut key = f.clone();
                key.sort_unstable();
                if incidence[&key] == 1 {
                    // Removing an odd-numbered vertex of a positively oriented
                    // simplex reverses the induced facet orientation.
                    if skip % 2 == 1 {
                        f.swap(0, 1);
                    }
                    facets.push(f);
                }
            }
        }
        facets
    }

    /// (diameter, inscribed-ball diameter) of cell `c`.
    fn cell_shape(&self, c: usize) -> (f64, f64) {
        let g = self.geometry_unchecked(c);
        let d = self.dim;
        let mut diam: f64 = 0.0;
        for i in 0..=d {
            for j in i + 1..=d {
                diam = diam.max(dist(&g.coords[i], &g.coords[j]));
            }
        }
        // |grad lambda_i| = facet_area_i / (d * volume), so the surface area is
        // d * volume * sum_i |grad lambda_i| and r = d * volume / area.
        let s: f64 = g.grad_bary.iter().map(|gr| norm(gr)).sum();
        let inradius = 1.0 / s;
        (diam, 2.0 * inradius)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Determinant and inverse of a row-major 2x2 or 3x3 matrix.
pub(crate) fn invert_small(m: &[f64], d: usize) -> (f64, Vec<f64>) {
    match d {
        2 => {
            let det = m[0] * m[3] - m[1] * m[2];
            let inv = vec![m[3] / det, -m[1] / det, -m[2] / det, m[0] / det];
            (det, inv)
        }
        3 => {
            let c00 = m[4] * m[8] - m[5] * m[7];
            let c01 = m[5] * m[6] - m[3] * m[8];
            let c02 = m[3] * m[7] - m[4] * m[6];
            let det = m[0] * c00 + m[1] * c01 + m[2] * c02;
            let inv = vec![
                c00 / det,
                (m[2] * m[7] - m[1] * m[8]) / det,
                (m[1] * m[5] - m[2] * m[4]) / det,
                c01 / det,
                (m[0] * m[8] - m[2] * m[6]) / det,
                (m[2] * m[3] - m[0] * m[5]) / det,
                c02 / det,
                (m[1] * m[6] - m[0] * m[7]) / det,
                (m[0] * m[4] - m[1] * m[3]) / det,
            ];
            (det, inv)
        }
        _ => unreachable!(),
    }
}

fn lattice_coord(domain: &BoxDomain, axis: usize, i: usize, n: usize) -> f64 {
    let (lo, hi) = (domain.lo[axis], domain.hi[axis]);
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / (n as f64)
    }
}

fn union_jack(domain: &BoxDomain, n: usize) -> (Vec<f64>, Vec<usize>) {
    let m = n + 1;
    let mut coords = Vec::with_capacity(2 * (m * m + n * n));
    for j in 0..m {
        for i in 0..m {
            coords.push(lattice_coord(domain, 0, i, n));
            coords.push(lattice_coord(domain, 1, j, n));
        }
    }
    for j in 0..n {
        for i in 0..n {
            let x0 = lattice_coord(domain, 0, i, n);
            let x1 = lattice_coord(domain, 0, i + 1, n);
            let y0 = lattice_coord(domain, 1, j, n);
            let y1 = lattice_coord(domain, 1, j + 1, n);
            coords.push(0.5 * (x0 + x1));
            coords.push(0.5 * (y0 + y1));
        }
    }
    let lat = |i: usize, j: usize| i + m * j;
    let mut cells = Vec::with_capacity(12 * n * n);
    for j in 0..n {
        for i in 0..n {
            let center = m * m + i + n * j;
            let (c00, c10, c11, c01) = (lat(i, j), lat(i + 1, j), lat(i + 1, j + 1), lat(i, j + 1));
            for (a, b) in [(c00, c10), (c10, c11), (c11, c01), (c01, c00)] {
                cells.extend_from_slice(&[a, b, center]);
            }
        }
    }
    (coords, cells)
}

const PERMUTATIONS_3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn reflected_kuhn(domain: &BoxDomain, n: usize) -> (Vec<f64>, Vec<usize>) {
    let m = n + 1;
    let mut coords = Vec::with_capacity(3 * m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                coords.push(lattice_coord(domain, 0, i, n));
                coords.push(lattice_coord(domain, 1, j, n));
                coords.push(lattice_coord(domain, 2, k, n));
            }
        }
    }
    let lat = |p: [usize; 3]| p[0] + m * (p[1] + m * p[2]);
    let mut cells = Vec::with_capacity(24 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let base = [i, j, k];
                // Local corner o maps to base + o on even axes and base + 1 - o on
                // odd axes, so the local origin is the all-even lattice corner.
                let corner = |o: [usize; 3]| {
                    let mut p = [0; 3];
                    for a in 0..3 {
                        p[a] = base[a] + if base[a] % 2 == 1 { 1 - o[a] } else { o[a] };
                    }
                    lat(p)
                };
                for perm in PERMUTATIONS_3 {
                    let mut o = [0usize; 3];
                    let mut tet = [corner(o), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        o[axis] = 1;
                        tet[step + 1] = corner(o);
                    }
                    let vol = signed_volume_3(&coords, &tet);
                    if vol < 0.0 {
                        tet.swap(2, 3);
                    }
                    cells.extend_from_slice(&tet);
                }
            }
        }
    }
    (coords, cells)
}

fn signed_volume_3(coords: &[f64], tet: &[usize; 4]) -> f64 {
    let p = |v: usize, a: usize| coords[3 * v + a];
    let mut e = [[0.0; 3]; 3];
    for r in 0..3 {
        for a in 0..3 {
            e[r][a] = p(tet[r + 1], a) - p(tet[0], a);
        }
    }
    e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
        + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
}
