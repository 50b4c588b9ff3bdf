//! Lagrange finite-element spaces on simplicial meshes.
//!
//! Nodes of a P1 space are the mesh vertices. Nodes of a P2 space are the
//! vertices followed by the edge midpoints in sorted edge order. Vector
//! fields are stored component-major: all nodes of component 0, then all
//! nodes of component 1, and so on, so dof `comp * num_nodes + node`.

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::Mesh;
use crate::operators::forms;
use crate::quadrature::{self, QuadratureRule};
use crate::sparsela::{self, BlockSaddleSystem, SolveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeError {
    #[error("functions live on different meshes or spaces")]
    SpaceMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("operation needs a {needed} space, got {got:?}")]
    WrongKind { needed: &'static str, got: SpaceKind },
    #[error("field returned {got} components, expected {expected}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    P1Scalar,
    P1Vector,
    P2Vector,
    P1Pressure,
}

impl SpaceKind {
    pub fn degree(self) -> usize {
        match self {
            SpaceKind::P2Vector => 2,
            _ => 1,
        }
    }
}

/// Local edges of a simplex as vertex pairs; the P2 basis follows this order.
pub fn local_edges(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        2 => &[(0, 1), (0, 2), (1, 2)],
        _ => &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    }
}

#[derive(Debug)]
pub struct FESpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    components: usize,
    num_nodes: usize,
    local_nodes: usize,
    node_coords: Vec<f64>,
    boundary_node: Vec<bool>,
    cell_nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    lumped: Vec<f64>,
}

impl FESpace {
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Arc<Self> {
        let dim = mesh.dim();
        let nv = mesh.num_vertices();
        let components = match kind {
            SpaceKind::P1Scalar | SpaceKind::P1Pressure => 1,
            _ => dim,
        };
        let mut node_coords: Vec<f64> = (0..nv).flat_map(|v| mesh.vertex(v).to_vec()).collect();
        let mut boundary_node: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        let mut edges = Vec::new();
        let (local_nodes, cell_nodes) = if kind == SpaceKind::P2Vector {
            edges = mesh.edges();
            for &(a, b) in &edges {
                for (x, y) in mesh.vertex(a).iter().zip(mesh.vertex(b)) {
                    node_coords.push(0.5 * (x + y));
                }
                boundary_node.push(mesh.domain().on_boundary(&node_coords[node_coords.len() - dim..]));
            }
            let le = local_edges(dim);
            let nloc = dim + 1 + le.len();
            let mut cn = Vec::with_capacity(mesh.num_cells() * nloc);
            for cell in mesh.cells() {
                cn.extend_from_slice(cell);
                for &(i, j) in le {
                    let key = (cell[i].min(cell[j]), cell[i].max(cell[j]));
                    let e = edges.binary_search(&key).expect("edge list is complete");
                    cn.push(nv + e);
                }
            }
            (nloc, cn)
        } else {
            (dim + 1, mesh.cells().flatten().copied().collect())
        };
        let mut lumped = vec![0.0; nv];
        for c in 0..mesh.num_cells() {
            let w = mesh.cell_volume(c) / (dim + 1) as f64;
            for &v in mesh.cell(c) {
                lumped[v] += w;
            }
        }
        Arc::new(Self {
            kind,
            num_nodes: boundary_node.len(),
            mesh,
            components,
            local_nodes,
            node_coords,
            boundary_node,
            cell_nodes,
            edges,
            lumped,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dof_count(&self) -> usize {
        self.num_nodes * self.components
    }

    pub fn dof(&self, node: usize, comp: usize) -> usize {
        comp * self.num_nodes + node
    }

    /// Nodes per cell.
    pub fn local_nodes(&self) -> usize {
        self.local_nodes
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cell_nodes[c * self.local_nodes..(c + 1) * self.local_nodes]
    }

    pub fn node_coord(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.node_coords[node * d..(node + 1) * d]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&n| self.boundary_node[n]).collect()
    }

    /// All dofs whose node lies on the boundary.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        let nodes = self.boundary_nodes();
        (0..self.components)
            .flat_map(|c| nodes.iter().map(move |&n| self.dof(n, c)))
            .collect()
    }

    /// P2 edges, indexed by `node - num_vertices`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Lumped weights `w_z = \int phi_z` of the P1 hat functions at the mesh
    /// vertices (the leading nodes of every space).
    pub fn lumped_weights(&self) -> &[f64] {
        &self.lumped
    }

    /// Gathers the local values of `values` on cell `c`, component-major.
    pub fn gather(&self, values: &[f64], c: usize, out: &mut [f64]) {
        let nodes = self.cell_nodes(c);
        let nloc = self.local_nodes;
        for comp in 0..self.components {
            for (a, &n) in nodes.iter().enumerate() {
                out[comp * nloc + a] = values[comp * self.num_nodes + n];
            }
        }
    }

    pub fn same_mesh(&self, other: &FESpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

/// Basis values and barycentric derivatives at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub dim: usize,
    pub nloc: usize,
    pub weights: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `values[q * nloc + a]`
    pub values: Vec<f64>,
    /// `dbary[(q * nloc + a) * (dim + 1) + i]` is the derivative of basis
    /// function `a` with respect to barycentric coordinate `i`.
    pub dbary: Vec<f64>,
}

impl Tabulation {
    pub fn new(dim: usize, degree: usize, rule: &QuadratureRule) -> Self {
        let nb = dim + 1;
        let le = local_edges(dim);
        let nloc = if degree == 2 { nb + le.len() } else { nb };
        let nq = rule.len();
        let mut values = vec![0.0; nq * nloc];
        let mut dbary = vec![0.0; nq * nloc * nb];
        for (q, l) in rule.points.iter().enumerate() {
            let (v, d) = (&mut values[q * nloc..(q + 1) * nloc], &mut dbary[q * nloc * nb..(q + 1) * nloc * nb]);
            basis_at(dim, degree, l, v, d);
        }
        Self { dim, nloc, weights: rule.weights.clone(), points: rule.points.clone(), values, dbary }
    }

    pub fn for_space(space: &FESpace, quad_degree: usize) -> Self {
        Self::new(space.dim(), space.kind().degree(), quadrature::rule(space.dim(), quad_degree))
    }

    /// Tabulation at the element vertices (no quadrature weights).
    pub fn at_vertices(dim: usize, degree: usize) -> Self {
        let pts: Vec<Vec<f64>> = (0..=dim).map(|i| (0..=dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let rule = QuadratureRule { dim, degree: 0, weights: vec![1.0 / (dim + 1) as f64; dim + 1], points: pts };
        Self::new(dim, degree, &rule)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical gradients at point `q` on a cell with barycentric gradients
    /// `gb`; `out[a * dim + r] = d phi_a / d x_r`.
    pub fn grads(&self, q: usize, gb: &[f64], out: &mut [f64]) {
        let (d, nb) = (self.dim, self.dim + 1);
        for a in 0..self.nloc {
            let db = &self.dbary[(q * self.nloc + a) * nb..(q * self.nloc + a + 1) * nb];
            for r in 0..d {
                out[a * d + r] = (0..nb).map(|i| db[i] * gb[i * d + r]).sum();
            }
        }
    }
}

/// Basis values and barycentric derivatives at barycentric point `l`.
pub fn basis_at(dim: usize, degree: usize, l: &[f64], values: &mut [f64], dbary: &mut [f64]) {
    let nb = dim + 1;
    dbary.iter_mut().for_each(|x| *x = 0.0);
    if degree == 1 {
        for i in 0..nb {
            values[i] = l[i];
            dbary[i * nb + i] = 1.0;
        }
        return;
    }
    for i in 0..nb {
        values[i] = l[i] * (2.0 * l[i] - 1.0);
        dbary[i * nb + i] = 4.0 * l[i] - 1.0;
    }
    for (e, &(i, j)) in local_edges(dim).iter().enumerate() {
        let a = nb + e;
        values[a] = 4.0 * l[i] * l[j];
        dbary[a * nb + i] = 4.0 * l[j];
        dbary[a * nb + j] = 4.0 * l[i];
    }
}

#[derive(Debug, Clone)]
pub struct FEFunction {
    space: Arc<FESpace>,
    values: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FESpace>, values: Vec<f64>) -> Result<Self, FeError> {
        if values.len() != space.dof_count() {
            return Err(FeError::LengthMismatch { expected: space.dof_count(), got: values.len() });
        }
        Ok(Self { space, values })
    }

    pub fn zeros(space: Arc<FESpace>) -> Self {
        let n = space.dof_count();
        Self { space, values: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<FESpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node_value(&self, node: usize) -> Vec<f64> {
        let n = self.space.num_nodes();
        (0..self.space.components()).map(|c| self.values[c * n + node]).collect()
    }

    /// Difference `self - other` on the same space.
    pub fn sub(&self, other: &FEFunction) -> Result<FEFunction, FeError> {
        if !Arc::ptr_eq(&self.space, &other.space) {
            return Err(FeError::SpaceMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(FEFunction { space: self.space.clone(), values })
    }
}

/// Nodal interpolant of `f`; `f` returns one value per component.
pub fn interpolate_nodal(space: &Arc<FESpace>, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<FEFunction, FeError> {
    let (n, nc) = (space.num_nodes(), space.components());
    let mut values = vec![0.0; n * nc];
    for node in 0..n {
        let fx = f(space.node_coord(node));
        if fx.len() != nc {
            return Err(FeError::ComponentMismatch { expected: nc, got: fx.len() });
        }
        for (c, v) in fx.into_iter().enumerate() {
            values[c * n + node] = v;
        }
    }
    FEFunction::new(space.clone(), values)
}

/// Lumped inner product `sum_z w_z y1(z) . y2(z)` over the mesh vertices.
pub fn lumped_inner_product(y1: &FEFunction, y2: &FEFunction) -> Result<f64, FeError> {
    let (s1, s2) = (y1.space(), y2.space());
    if !s1.same_mesh(s2) || s1.components() != s2.components() {
        return Err(FeError::SpaceMismatch);
    }
    Ok(lumped_dot(s1.lumped_weights(), y1.values(), s1.num_nodes(), y2.values(), s2.num_nodes(), s1.components()))
}

/// Lumped product of raw component-major vertex data.
pub fn lumped_dot(w: &[f64], a: &[f64], stride_a: usize, b: &[f64], stride_b: usize, comps: usize) -> f64 {
    let mut s = 0.0;
    for (z, &wz) in w.iter().enumerate() {
        let mut p = 0.0;
        for c in 0..comps {
            p += a[c * stride_a + z] * b[c * stride_b + z];
        }
        s += wz * p;
    }
    s
}

pub fn lumped_norm(y: &FEFunction) -> f64 {
    lumped_inner_product(y, y).expect("same space").sqrt()
}

/// Constants `(1, c_L)` with `||y|| <= ||y||_h <= c_L ||y||` on P1 fields.
pub fn norm_equivalence_constants(dim: usize) -> (f64, f64) {
    (1.0, ((dim + 2) as f64).sqrt())
}

fn quad_degree_for(space: &FESpace, extra: usize) -> usize {
    (2 * space.kind().degree() + extra).min(if space.dim() == 2 { 6 } else { 7 })
}

/// `||f||_{L^2}`, integrated exactly.
pub fn l2_norm(f: &FEFunction) -> f64 {
    l2_norm_values(f.space(), f.values())
}

pub fn l2_norm_values(space: &FESpace, values: &[f64]) -> f64 {
    let tab = Tabulation::for_space(space, quad_degree_for(space, 0));
    let mesh = space.mesh();
    let (nloc, nc) = (space.local_nodes(), space.components());
    let mut local = vec![0.0; nloc * nc];
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        space.gather(values, c, &mut local);
        let vol = mesh.cell_volume(c);
        for q in 0..tab.len() {
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            for comp in 0..nc {
                let u: f64 = (0..nloc).map(|a| phi[a] * local[comp * nloc + a]).sum();
                s += vol * tab.weights[q] * u * u;
            }
        }
    }
    s.sqrt()
}

/// `||grad f||_{L^2}`, integrated exactly.
pub fn h1_seminorm(f: &FEFunction) -> f64 {
    h1_seminorm_values(f.space(), f.values())
}

pub fn h1_seminorm_values(space: &FESpace, values: &[f64]) -> f64 {
    let deg = 2 * (space.kind().degree() - 1);
    let tab = Tabulation::for_space(space, deg.max(1));
    let mesh = space.mesh();
    let (nloc, nc, d) = (space.local_nodes(), space.components(), space.dim());
    let mut local = vec![0.0; nloc * nc];
    let mut g = vec![0.0; nloc * d];
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        space.gather(values, c, &mut local);
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            for comp in 0..nc {
                for r in 0..d {
                    let du: f64 = (0..nloc).map(|a| g[a * d + r] * local[comp * nloc + a]).sum();
                    s += vol * tab.weights[q] * du * du;
                }
            }
        }
    }
    s.sqrt()
}

pub fn h1_norm(f: &FEFunction) -> f64 {
    h1_norm_values(f.space(), f.values())
}

pub fn h1_norm_values(space: &FESpace, values: &[f64]) -> f64 {
    let a = l2_norm_values(space, values);
    let b = h1_seminorm_values(space, values);
    (a * a + b * b).sqrt()
}

/// `||f - u_h||_{L^2}` for an analytic `f`, using a rule of degree `degree`.
pub fn l2_error(u: &FEFunction, f: impl Fn(&[f64]) -> Vec<f64>, degree: usize) -> f64 {
    let space = u.space();
    let mesh = space.mesh();
    let dim = space.dim();
    let tab = Tabulation::new(dim, space.kind().degree(), quadrature::rule(dim, degree));
    let (nloc, nc) = (space.local_nodes(), space.components());
    let mut local = vec![0.0; nloc * nc];
    let mut x = vec![0.0; dim];
    let mut s = 0.0;
    for c in 0..mesh.num_cells() {
        space.gather(u.values(), c, &mut local);
        let vol = mesh.cell_volume(c);
        for q in 0..tab.len() {
            mesh.bary_to_point(c, &tab.points[q], &mut x);
            let fx = f(&x);
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            for comp in 0..nc {
                let uh: f64 = (0..nloc).map(|a| phi[a] * local[comp * nloc + a]).sum();
                s += vol * tab.weights[q] * (uh - fx[comp]).powi(2);
            }
        }
    }
    s.sqrt()
}

/// Load vector `(f, phi_i)` for every dof, with a rule of degree `degree`.
/// `f` receives the cell index and the physical point, so piecewise fields
/// are allowed.
pub fn load_vector(space: &FESpace, f: &dyn Fn(usize, &[f64]) -> Vec<f64>, degree: usize) -> Vec<f64> {
    let mesh = space.mesh();
    let dim = space.dim();
    let tab = Tabulation::new(dim, space.kind().degree(), quadrature::rule(dim, degree));
    let (nloc, nc, n) = (space.local_nodes(), space.components(), space.num_nodes());
    let mut out = vec![0.0; n * nc];
    let mut x = vec![0.0; dim];
    for c in 0..mesh.num_cells() {
        let vol = mesh.cell_volume(c);
        let nodes = space.cell_nodes(c);
        for q in 0..tab.len() {
            mesh.bary_to_point(c, &tab.points[q], &mut x);
            let fx = f(c, &x);
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            for comp in 0..nc {
                for (a, &node) in nodes.iter().enumerate() {
                    out[comp * n + node] += vol * tab.weights[q] * fx[comp] * phi[a];
                }
            }
        }
    }
    out
}

fn require_p1(space: &FESpace) -> Result<(), FeError> {
    match space.kind() {
        SpaceKind::P2Vector => Err(FeError::WrongKind { needed: "P1", got: space.kind() }),
        _ => Ok(()),
    }
}

/// Consistent L2 projection onto a P1 space; `degree` is the quadrature
/// degree of the load vector.
pub fn l2_projection(space: &Arc<FESpace>, f: impl Fn(&[f64]) -> Vec<f64>, degree: usize) -> Result<FEFunction, FeError> {
    require_p1(space)?;
    let rhs = load_vector(space, &|_, x| f(x), degree);
    let scalar = FESpace::new(space.mesh().clone(), SpaceKind::P1Scalar);
    let m = forms::mass_matrix(&scalar);
    let lu = sparsela::LuFactor::new(&m)?;
    let n = space.num_nodes();
    let mut values = vec![0.0; rhs.len()];
    for comp in 0..space.components() {
        let x = lu.solve(&rhs[comp * n..(comp + 1) * n])?;
        values[comp * n..(comp + 1) * n].copy_from_slice(&x);
    }
    FEFunction::new(space.clone(), values)
}

/// Lumped projection `R_h f(z) = (f, phi_z) / w_z`, which coincides with the
/// adjoint of nodal interpolation with respect to the lumped product.
pub fn lumped_projection(
    space: &Arc<FESpace>,
    f: &dyn Fn(usize, &[f64]) -> Vec<f64>,
    degree: usize,
) -> Result<FEFunction, FeError> {
    require_p1(space)?;
    let mut values = load_vector(space, f, degree);
    let n = space.num_nodes();
    let w = space.lumped_weights();
    for c in 0..space.components() {
        for z in 0..n {
            values[c * n + z] /= w[z];
        }
    }
    FEFunction::new(space.clone(), values)
}

/// Lumped projection of a piecewise-constant field given per cell as
/// `cell_values[c * comps + i]`; the result has `comps` components stored
/// component-major over the vertices.
pub fn lumped_projection_cellwise(mesh: &Mesh, lumped: &[f64], cell_values: &[f64], comps: usize) -> Vec<f64> {
    let nv = mesh.num_vertices();
    let share = 1.0 / (mesh.dim() + 1) as f64;
    let mut out = vec![0.0; nv * comps];
    for c in 0..mesh.num_cells() {
        let w = mesh.cell_volume(c) * share;
        for &v in mesh.cell(c) {
            for i in 0..comps {
                out[i * nv + v] += w * cell_values[c * comps + i];
            }
        }
    }
    for i in 0..comps {
        for z in 0..nv {
            out[i * nv + z] /= lumped[z];
        }
    }
    out
}

/// Boundary handling of the discretely divergence-free projection.
pub enum ProjectionBoundary<'a> {
    /// Minimize over the full P2 space.
    Free,
    /// Fix the boundary nodal values to the given field.
    Dirichlet(&'a dyn Fn(&[f64]) -> Vec<f64>),
}

/// L2-closest P2 field to `v0` that is discretely divergence free against
/// the zero-mean P1 pressure space.
pub fn divfree_projection(
    space: &Arc<FESpace>,
    pressure: &Arc<FESpace>,
    v0: &dyn Fn(&[f64]) -> Vec<f64>,
    boundary: ProjectionBoundary<'_>,
) -> Result<FEFunction, FeError> {
    if space.kind() != SpaceKind::P2Vector {
        return Err(FeError::WrongKind { needed: "P2 vector", got: space.kind() });
    }
    if !space.same_mesh(pressure) {
        return Err(FeError::SpaceMismatch);
    }
    let degree = if space.dim() == 2 { 6 } else { 7 };
    let rhs = load_vector(space, &|_, x| v0(x), degree);
    let m = forms::mass_matrix(space);
    let b = forms::divergence_matrix(space, pressure);
    let mean = forms::pressure_mean_weights(pressure);
    let mut fixed = vec![None; space.dof_count()];
    if let ProjectionBoundary::Dirichlet(g) = boundary {
        let n = space.num_nodes();
        for node in space.boundary_nodes() {
            for (c, v) in g(space.node_coord(node)).into_iter().enumerate() {
                fixed[c * n + node] = Some(v);
            }
        }
    }
    let (a, rhs_u, b, rhs_p) = forms::eliminate_dirichlet(&m, &rhs, &b, &fixed)?;
    let sys = BlockSaddleSystem { a, b, mean_constraint: Some(mean), rhs_primal: rhs_u, rhs_constraint: rhs_p };
    let (u, _) = sparsela::solve_saddle(&sys)?;
    FEFunction::new(space.clone(), u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoxDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh(dim: usize, lo: f64, hi: f64, n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::build_box(&BoxDomain::cube(dim, lo, hi).unwrap(), n).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = mesh(2, 0.0, 1.0, 1);
        let p2 = FESpace::new(m.clone(), SpaceKind::P2Vector);
        // 5 vertices + 8 edges
        assert_eq!(p2.num_nodes(), 13);
        assert_eq!(p2.dof_count(), 26);
        assert_eq!(p2.boundary_nodes().len(), 8);
        let m3 = mesh(3, 0.0, 1.0, 2);
        let p1 = FESpace::new(m3.clone(), SpaceKind::P1Vector);
        assert_eq!(p1.dof_count(), 81);
        assert_eq!(p1.boundary_dofs().len(), 78);
    }

    #[test]
    fn p2_basis_is_nodal() {
        for dim in [2, 3] {
            let m = mesh(dim, 0.0, 1.0, 2);
            let s = FESpace::new(m.clone(), SpaceKind::P2Vector);
            let nb = dim + 1;
            let le = local_edges(dim);
            let nloc = s.local_nodes();
            let mut vals = vec![0.0; nloc];
            let mut db = vec![0.0; nloc * nb];
            for c in 0..m.num_cells() {
                let nodes = s.cell_nodes(c);
                for (a, &node) in nodes.iter().enumerate() {
                    let mut l = vec![0.0; nb];
                    if a < nb {
                        l[a] = 1.0;
                    } else {
                        let (i, j) = le[a - nb];
                        l[i] = 0.5;
                        l[j] = 0.5;
                    }
                    let mut x = vec![0.0; dim];
                    m.bary_to_point(c, &l, &mut x);
                    for (p, q) in x.iter().zip(s.node_coord(node)) {
                        assert!((p - q).abs() < 1e-14);
                    }
                    basis_at(dim, 2, &l, &mut vals, &mut db);
                    for (b, v) in vals.iter().enumerate() {
                        assert!((v - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn affine_reproduction() {
        let m = mesh(2, -1.0, 1.0, 4);
        let s = FESpace::new(m, SpaceKind::P1Vector);
        let f = |x: &[f64]| vec![1.0 + 2.0 * x[0] - x[1], 0.5 * x[1]];
        let u = interpolate_nodal(&s, f).unwrap();
        assert!(l2_error(&u, f, 6) < 1e-14);
    }

    #[test]
    fn lumped_constant_and_hat() {
        let m = mesh(2, 0.0, 1.0, 3);
        let s = FESpace::new(m, SpaceKind::P1Scalar);
        let c = interpolate_nodal(&s, |_| vec![3.0]).unwrap();
        assert!((lumped_inner_product(&c, &c).unwrap() - 9.0).abs() < 1e-13);
        assert!((lumped_norm(&c) - l2_norm(&c)).abs() < 1e-13);
        let z = 7;
        let mut hat = FEFunction::zeros(s.clone());
        hat.values_mut()[z] = 1.0;
        assert!((lumped_inner_product(&hat, &hat).unwrap() - s.lumped_weights()[z]).abs() < 1e-16);
        let total: f64 = s.lumped_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_meshes_rejected() {
        let a = FESpace::new(mesh(2, 0.0, 1.0, 2), SpaceKind::P1Scalar);
        let b = FESpace::new(mesh(2, 0.0, 1.0, 2), SpaceKind::P1Scalar);
        let fa = FEFunction::zeros(a);
        let fb = FEFunction::zeros(b);
        assert_eq!(lumped_inner_product(&fa, &fb), Err(FeError::SpaceMismatch));
    }

    #[test]
    fn norm_constants() {
        assert_eq!(norm_equivalence_constants(2).1, 2.0);
        assert!((norm_equivalence_constants(3).1 - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_projection_identity_and_best_approximation() {
        let m = mesh(2, 0.0, 1.0, 4);
        let s = FESpace::new(m, SpaceKind::P1Scalar);
        let affine = |x: &[f64]| vec![1.0 - x[0] + 3.0 * x[1]];
        let p = l2_projection(&s, affine, 5).unwrap();
        let i = interpolate_nodal(&s, affine).unwrap();
        for (a, b) in p.values().iter().zip(i.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let smooth = |x: &[f64]| vec![(3.0 * x[0]).sin() * (2.0 * x[1]).cos()];
        let p = l2_projection(&s, smooth, 6).unwrap();
        let i = interpolate_nodal(&s, smooth).unwrap();
        assert!(l2_error(&p, smooth, 6) <= l2_error(&i, smooth, 6));
    }

    #[test]
    fn lumped_projection_of_constant() {
        let m = mesh(3, 0.0, 1.0, 2);
        let s = FESpace::new(m, SpaceKind::P1Vector);
        let r = lumped_projection(&s, &|_, _| vec![2.0, -1.0, 0.5], 2).unwrap();
        for z in 0..s.num_nodes() {
            let v = r.node_value(z);
            assert!((v[0] - 2.0).abs() < 1e-13 && (v[1] + 1.0).abs() < 1e-13 && (v[2] - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn adjoint_interpolation_identity() {
        let m = mesh(2, 0.0, 1.0, 4);
        let s = FESpace::new(m.clone(), SpaceKind::P1Scalar);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let g: Vec<f64> = (0..s.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cells: Vec<f64> = (0..m.num_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = lumped_projection_cellwise(&m, s.lumped_weights(), &cells, 1);
            let lhs: f64 = load_vector(&s, &|c, _| vec![cells[c]], 1).iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs = lumped_dot(s.lumped_weights(), &g, s.num_nodes(), &r, s.num_nodes(), 1);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn lumped_projection_sup_error_decreases() {
        let f = |x: &[f64]| (std::f64::consts::PI * x[0]).sin();
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16] {
            let m = mesh(2, 0.0, 1.0, n);
            let s = FESpace::new(m, SpaceKind::P1Scalar);
            let r = lumped_projection(&s, &|_, x| vec![f(x)], 6).unwrap();
            let err = (0..s.num_nodes()).map(|z| (r.values()[z] - f(s.node_coord(z))).abs()).fold(0.0, f64::max);
            assert!(err < prev, "n = {n}: {err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn divfree_projection_of_divfree_and_zero() {
        let m = mesh(2, 0.0, 1.0, 3);
        let v = FESpace::new(m.clone(), SpaceKind::P2Vector);
        let p = FESpace::new(m, SpaceKind::P1Pressure);
        let zero = divfree_projection(&v, &p, &|_| vec![0.0, 0.0], ProjectionBoundary::Free).unwrap();
        assert!(zero.values().iter().all(|x| x.abs() < 1e-15));
        // a quadratic with zero divergence lies in the discrete space
        let f = |x: &[f64]| vec![x[1] * x[1] + x[0], -x[1] + x[0] * x[0]];
        let q = divfree_projection(&v, &p, &f, ProjectionBoundary::Free).unwrap();
        let i = interpolate_nodal(&v, f).unwrap();
        for (a, b) in q.values().iter().zip(i.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
