//! Director-side operators: discrete Laplacian, recovered gradient, and the
//! lumped Ericksen and elastic Leslie forces on the P2 velocity space.
//!
//! Cross products are evaluated through `(a x b) . (c x e) = (a.c)(b.e) - (a.e)(b.c)`
//! and `a x (a x w) = (a.w) a - |a|^2 w`, which hold in 3D and define the
//! planar analogues in 2D.

use crate::fespace::{FESpace, Tabulation};
use crate::mesh::Mesh;
use crate::operators::forms;
use crate::operators::params::Params;
use crate::sparsela::SparseMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a x (a x w)` written as `(a.w) a - |a|^2 w`.
pub fn triple(a: &[f64], w: &[f64], out: &mut [f64]) {
    let (aw, aa) = (dot(a, w), dot(a, a));
    for i in 0..a.len() {
        out[i] = aw * a[i] - aa * w[i];
    }
}

/// `(a x b) . (c x e)`.
pub fn cross_dot(a: &[f64], b: &[f64], c: &[f64], e: &[f64]) -> f64 {
    dot(a, c) * dot(b, e) - dot(a, e) * dot(b, c)
}

/// `|a x b|^2`.
pub fn cross_norm2(a: &[f64], b: &[f64]) -> f64 {
    cross_dot(a, b, a, b)
}

/// Literal 3D cross product.
pub fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Value of component-major vertex data at vertex `z`.
pub fn nodal(values: &[f64], stride: usize, comps: usize, z: usize, out: &mut [f64]) {
    for c in 0..comps {
        out[c] = values[c * stride + z];
    }
}

/// Mass-lumped discrete Laplacian of P1 vector fields,
/// `(-Delta_h f, b)_h = (grad f, grad b)` for all `b` vanishing on the boundary.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    stiffness: SparseMatrix,
    lumped: Vec<f64>,
    boundary: Vec<bool>,
    comps: usize,
}

impl DiscreteLaplacian {
    /// `space` is a P1 (scalar or vector) space.
    pub fn new(space: &FESpace) -> Self {
        let scalar = FESpace::new(space.mesh().clone(), crate::fespace::SpaceKind::P1Scalar);
        Self {
            stiffness: forms::stiffness_matrix(&scalar),
            lumped: scalar.lumped_weights().to_vec(),
            boundary: (0..scalar.num_nodes()).map(|z| scalar.is_boundary_node(z)).collect(),
            comps: space.components(),
        }
    }

    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        let n = self.lumped.len();
        let mut out = vec![0.0; n * self.comps];
        for c in 0..self.comps {
            let kd = self.stiffness.matvec(&d[c * n..(c + 1) * n]);
            for z in 0..n {
                if !self.boundary[z] {
                    out[c * n + z] = -kd[z] / self.lumped[z];
                }
            }
        }
        out
    }

    /// Scalar P1 stiffness matrix used by the operator.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }
}

/// Mass-lumped discrete Laplacian of a P1 vector field.
pub fn discrete_laplacian(space: &FESpace, d: &[f64]) -> Vec<f64> {
    DiscreteLaplacian::new(space).apply(d)
}

/// Cellwise gradient of a P1 field with `comps` components:
/// `out[c * comps * dim + i * dim + r] = d f_i / d x_r` on cell `c`.
pub fn p1_cell_gradients(mesh: &Mesh, values: &[f64], comps: usize) -> Vec<f64> {
    let (dim, nv) = (mesh.dim(), mesh.num_vertices());
    let mut out = vec![0.0; mesh.num_cells() * comps * dim];
    for c in 0..mesh.num_cells() {
        let gb = mesh.cell_grad_bary(c);
        for (a, &v) in mesh.cell(c).iter().enumerate() {
            for i in 0..comps {
                let f = values[i * nv + v];
                for r in 0..dim {
                    out[(c * comps + i) * dim + r] += f * gb[a * dim + r];
                }
            }
        }
    }
    out
}

/// Lumped projection of the P1 director gradient onto the vertices, stored
/// component-major with `dim * dim` components (`i * dim + r` is `d d_i / d x_r`).
pub fn recovered_gradient(mesh: &Mesh, lumped: &[f64], d: &[f64]) -> Vec<f64> {
    let dim = mesh.dim();
    let g = p1_cell_gradients(mesh, d, dim);
    crate::fespace::lumped_projection_cellwise(mesh, lumped, &g, dim * dim)
}

/// `sum_z w_z [G(z)^T (d x (d x lap))(z)] . a(z)` for every P2 dof `a`, where
/// `G` is the recovered gradient, `d = d_half`, `lap = lap_half`.
pub fn ericksen_force(space: &FESpace, grad_prev: &[f64], d_half: &[f64], lap_half: &[f64]) -> Vec<f64> {
    let mesh = space.mesh();
    let (dim, nv, nn) = (space.dim(), mesh.num_vertices(), space.num_nodes());
    let w = space.lumped_weights();
    let mut out = vec![0.0; space.dof_count()];
    let (mut dz, mut lz, mut t) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for z in 0..nv {
        nodal(d_half, nv, dim, z, &mut dz);
        nodal(lap_half, nv, dim, z, &mut lz);
        triple(&dz[..dim], &lz[..dim], &mut t[..dim]);
        for r in 0..dim {
            let s: f64 = (0..dim).map(|i| grad_prev[(i * dim + r) * nv + z] * t[i]).sum();
            out[r * nn + z] = w[z] * s;
        }
    }
    out
}

/// Elastic Leslie couplings
/// `lambda (d x [S(a) d], d x lap)_h + (W(a) lap, d)_h` for every P2 dof,
/// scaled by `v_el A`. The lumped product with the discontinuous gradient of
/// the test function is taken cell by cell at the vertices. Zero for the
/// simplified model.
pub fn leslie_elastic_rhs(space: &FESpace, d_half: &[f64], lap_half: &[f64], params: &Params) -> Vec<f64> {
    let mut out = vec![0.0; space.dof_count()];
    if !params.is_full() {
        return out;
    }
    let mesh = space.mesh();
    let (dim, nv, nn, nloc) = (space.dim(), mesh.num_vertices(), space.num_nodes(), space.local_nodes());
    let tab = Tabulation::at_vertices(dim, 2);
    let scale = params.v_el * params.a;
    let lam = params.lambda;
    let mut g = vec![0.0; nloc * dim];
    let (mut dz, mut lz) = ([0.0; 3], [0.0; 3]);
    for c in 0..mesh.num_cells() {
        let omega = mesh.cell_volume(c) / (dim + 1) as f64;
        let gb = mesh.cell_grad_bary(c);
        let nodes = space.cell_nodes(c);
        for (q, &z) in mesh.cell(c).iter().enumerate() {
            tab.grads(q, gb, &mut g);
            nodal(d_half, nv, dim, z, &mut dz);
            nodal(lap_half, nv, dim, z, &mut lz);
            let (d, l) = (&dz[..dim], &lz[..dim]);
            let (dd, dl) = (dot(d, d), dot(d, l));
            for (b, &node) in nodes.iter().enumerate() {
                let gr = &g[b * dim..(b + 1) * dim];
                let (gd, gl) = (dot(gr, d), dot(gr, l));
                for j in 0..dim {
                    // test function e_j phi_b: S d = (e_j (g.d) + g d_j) / 2
                    let sd_l = 0.5 * (l[j] * gd + gl * d[j]);
                    let sd_d = d[j] * gd;
                    let stretch = dd * sd_l - dl * sd_d;
                    // (W lap) . d with W = (e_j g^T - g e_j^T) / 2
                    let rot = 0.5 * (d[j] * gl - gd * l[j]);
                    out[j * nn + node] += scale * omega * (lam * stretch + rot);
                }
            }
        }
    }
    out
}

/// Gradient of a P2 vector field at the vertices of every cell:
/// `out[(c * (dim + 1) + q) * dim * dim + i * dim + r] = d v_i / d x_r` at
/// local vertex `q` of cell `c`.
pub fn p2_vertex_gradients(space: &FESpace, v: &[f64]) -> Vec<f64> {
    let mesh = space.mesh();
    let (dim, nloc) = (space.dim(), space.local_nodes());
    let tab = Tabulation::at_vertices(dim, 2);
    let mut g = vec![0.0; nloc * dim];
    let mut local = vec![0.0; nloc * dim];
    let dd = dim * dim;
    let mut out = vec![0.0; mesh.num_cells() * (dim + 1) * dd];
    for c in 0..mesh.num_cells() {
        space.gather(v, c, &mut local);
        let gb = mesh.cell_grad_bary(c);
        for q in 0..=dim {
            tab.grads(q, gb, &mut g);
            let o = &mut out[(c * (dim + 1) + q) * dd..(c * (dim + 1) + q + 1) * dd];
            for i in 0..dim {
                for r in 0..dim {
                    o[i * dim + r] = (0..nloc).map(|a| local[i * nloc + a] * g[a * dim + r]).sum();
                }
            }
        }
    }
    out
}
