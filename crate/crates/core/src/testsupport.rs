//! Independent oracles for tests: dense assembly with its own quadrature and
//! Lagrange basis, brute-force lumped sums, convergence-rate fits and
//! second-order jets for analytic derivatives.
//!
//! Nothing here goes through the production tabulation, quadrature tables or
//! assembly loops. The only shared data is the mesh geometry and the global
//! node numbering, which the oracle checks against node coordinates.

use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::fespace::{FESpace, SpaceKind};
use crate::mesh::Mesh;
use crate::operators::{Model, Params};
use crate::sparsela::SparseMatrix;

/// Largest dof count the dense oracle accepts.
pub const ORACLE_MAX_DOFS: usize = 2000;
/// Extra quadrature degree of the oracle over the production rule of each form.
pub const ORACLE_EXTRA_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle limited to {max} dofs, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("form needs {expected} spaces, got {got:?}")]
    WrongSpaces { expected: &'static str, got: (SpaceKind, SpaceKind) },
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("cell {cell}: no global node at local position {local}")]
    NodeMismatch { cell: usize, local: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("need at least two (h, error) pairs, got {0}")]
    TooFewPoints(usize),
    #[error("pair {index}: h = {h} and error = {error} must both be positive")]
    NonPositive { index: usize, h: f64, error: f64 },
    #[error("h values must be strictly decreasing (pair {0})")]
    NotDecreasing(usize),
}

/// Least-squares slope of `log(error)` against `log(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub h_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_order: f64,
}

pub fn estimate_rate(pairs: &[(f64, f64)]) -> Result<RateEstimate, RateError> {
    if pairs.len() < 2 {
        return Err(RateError::TooFewPoints(pairs.len()));
    }
    for (i, &(h, e)) in pairs.iter().enumerate() {
        if !(h > 0.0 && e > 0.0) || !h.is_finite() || !e.is_finite() {
            return Err(RateError::NonPositive { index: i, h, error: e });
        }
        if i > 0 && !(h < pairs[i - 1].0) {
            return Err(RateError::NotDecreasing(i));
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RateEstimate {
        h_values: pairs.iter().map(|p| p.0).collect(),
        errors: pairs.iter().map(|p| p.1).collect(),
        fitted_order: sxy / sxx,
    })
}

// ---------------------------------------------------------------------------
// quadrature

/// Gauss-Legendre nodes and weights on `[0, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    for i in 0..m {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_m(t), p0 = P_{m-1}(t)
            dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x.push(0.5 * (1.0 - t));
        w.push(1.0 / ((1.0 - t * t) * dp * dp));
    }
    (x, w)
}

/// Collapsed-coordinate product rule on the reference simplex, exact for
/// polynomials of total degree `degree`. Points are reference coordinates.
pub fn conical_rule(dim: usize, degree: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    // the collapse adds dim - 1 to the degree in the first variable
    let m = (degree + dim).div_ceil(2).max(1);
    let (x, w) = gauss_legendre_unit(m);
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    match dim {
        2 => {
            for a in 0..m {
                for b in 0..m {
                    let (u, v) = (x[a], x[b]);
                    pts.push(vec![u, v * (1.0 - u)]);
                    wts.push(w[a] * w[b] * (1.0 - u));
                }
            }
        }
        _ => {
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        let (u, v, s) = (x[a], x[b], x[c]);
                        pts.push(vec![u, v * (1.0 - u), s * (1.0 - u) * (1.0 - v)]);
                        wts.push(w[a] * w[b] * w[c] * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
        }
    }
    (pts, wts)
}

// ---------------------------------------------------------------------------
// Lagrange basis from a monomial Vandermonde matrix

fn exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        if dim == 2 {
            for i in (0..=total).rev() {
                out.push(vec![i, total - i]);
            }
        } else {
            for i in (0..=total).rev() {
                for j in (0..=total - i).rev() {
                    out.push(vec![i, j, total - i - j]);
                }
            }
        }
    }
    out
}

fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).expect("nonempty");
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-13, "singular Vandermonde matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Lagrange basis of one cell in physical coordinates.
struct CellBasis {
    center: Vec<f64>,
    scale: f64,
    exps: Vec<Vec<usize>>,
    /// `coef[j][i]`: coefficient of monomial `j` in basis function `i`.
    coef: Vec<Vec<f64>>,
}

impl CellBasis {
    fn new(nodes: &[Vec<f64>], degree: usize) -> Self {
        let dim = nodes[0].len();
        let nv = dim + 1;
        let center: Vec<f64> = (0..dim).map(|r| nodes[..nv].iter().map(|x| x[r]).sum::<f64>() / nv as f64).collect();
        let scale = nodes[..nv]
            .iter()
            .flat_map(|a| nodes[..nv].iter().map(move |b| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()))
            .fold(0.0, f64::max)
            .sqrt();
        let exps = exponents(dim, degree);
        let mut basis = Self { center, scale, exps, coef: Vec::new() };
        let v: Vec<Vec<f64>> = nodes.iter().map(|x| basis.monomials(x).0).collect();
        basis.coef = dense_inverse(&v);
        basis
    }

    /// Monomial values and their gradients at `x`.
    fn monomials(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let dim = x.len();
        let y: Vec<f64> = (0..dim).map(|r| (x[r] - self.center[r]) / self.scale).collect();
        let mut vals = Vec::with_capacity(self.exps.len());
        let mut grads = Vec::with_capacity(self.exps.len());
        for e in &self.exps {
            vals.push((0..dim).map(|r| y[r].powi(e[r] as i32)).product());
            grads.push(
                (0..dim)
                    .map(|r| {
                        if e[r] == 0 {
                            return 0.0;
                        }
                        let mut p = e[r] as f64 * y[r].powi(e[r] as i32 - 1) / self.scale;
                        for s in (0..dim).filter(|&s| s != r) {
                            p *= y[s].powi(e[s] as i32);
                        }
                        p
                    })
                    .collect(),
            );
        }
        (vals, grads)
    }

    /// Basis values and gradients (`[i][r]`) at `x`.
    fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (mv, mg) = self.monomials(x);
        let n = self.coef.len();
        let dim = x.len();
        let mut vals = vec![0.0; n];
        let mut grads = vec![vec![0.0; dim]; n];
        for (j, row) in self.coef.iter().enumerate() {
            for i in 0..n {
                vals[i] += row[i] * mv[j];
                for r in 0..dim {
                    grads[i][r] += row[i] * mg[j][r];
                }
            }
        }
        (vals, grads)
    }
}

/// Geometric nodes of a cell: vertices, then midpoints of all vertex pairs.
fn oracle_nodes(mesh: &Mesh, c: usize, degree: usize) -> Vec<Vec<f64>> {
    let verts: Vec<Vec<f64>> = mesh.cell(c).iter().map(|&v| mesh.vertex(v).to_vec()).collect();
    let mut nodes = verts.clone();
    if degree == 2 {
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                nodes.push(verts[i].iter().zip(&verts[j]).map(|(a, b)| 0.5 * (a + b)).collect());
            }
        }
    }
    nodes
}

/// Global node of each oracle node, matched by coordinates.
fn match_nodes(space: &FESpace, c: usize, nodes: &[Vec<f64>]) -> Result<Vec<usize>, OracleError> {
    let cand = space.cell_nodes(c);
    let tol = 1e-12 * space.mesh().h();
    nodes
        .iter()
        .enumerate()
        .map(|(local, x)| {
            cand.iter()
                .copied()
                .find(|&g| space.node_coord(g).iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
                .ok_or(OracleError::NodeMismatch { cell: c, local })
        })
        .collect()
}

fn physical_point(mesh: &Mesh, c: usize, xi: &[f64]) -> Vec<f64> {
    let verts = mesh.cell(c);
    let x0 = mesh.vertex(verts[0]);
    (0..mesh.dim())
        .map(|r| x0[r] + xi.iter().enumerate().map(|(a, &s)| s * (mesh.vertex(verts[a + 1])[r] - x0[r])).sum::<f64>())
        .collect()
}

fn jacobian_det(mesh: &Mesh, c: usize) -> f64 {
    let verts = mesh.cell(c);
    let d = mesh.dim();
    let x0 = mesh.vertex(verts[0]);
    let col = |a: usize, r: usize| mesh.vertex(verts[a + 1])[r] - x0[r];
    if d == 2 {
        (col(0, 0) * col(1, 1) - col(1, 0) * col(0, 1)).abs()
    } else {
        let m = |r: usize, a: usize| col(a, r);
        (m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
            + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)))
        .abs()
    }
}

// ---------------------------------------------------------------------------
// dense assembly

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] += v;
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.data[r * self.ncols..(r + 1) * self.ncols].iter().sum()
    }

    /// `max |self - sparse|` over all entries; infinite on a shape mismatch.
    pub fn max_abs_diff(&self, sparse: &SparseMatrix) -> f64 {
        if sparse.nrows() != self.nrows || sparse.ncols() != self.ncols {
            return f64::INFINITY;
        }
        let mut d = self.clone();
        for r in 0..self.nrows {
            let (cols, vals) = sparse.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d.add(r, c, -v);
            }
        }
        d.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Bilinear forms the oracle can assemble. Rows index test functions.
#[derive(Debug, Clone, Copy)]
pub enum OracleForm<'a> {
    /// `(u, a)` on any space.
    Mass,
    /// `(grad u, grad a)` on any space.
    Stiffness,
    /// `-(div u, q)`: trial velocity, test pressure.
    Divergence,
    /// `((w . grad) u, a) + 1/2 ((div w) u, a)` with a P2 vector field `w`.
    Convection { w: &'a [f64] },
    /// `mu4 (S u, S a)` or `nu (grad u, grad a)` by model.
    Viscous { params: &'a Params },
    /// Director-weighted part of the dissipative form with P1 vertex values `d`.
    Anisotropic { params: &'a Params, d: &'a [f64] },
}

impl OracleForm<'_> {
    /// Quadrature degree of the matching production form.
    fn production_degree(&self, dim: usize, trial: &FESpace) -> usize {
        let p = trial.kind().degree();
        match self {
            OracleForm::Mass => 2 * p,
            OracleForm::Stiffness => (2 * p - 2).max(1),
            OracleForm::Divergence => 2,
            OracleForm::Convection { .. } => 5,
            OracleForm::Viscous { .. } => 2,
            OracleForm::Anisotropic { .. } => {
                if dim == 2 {
                    6
                } else {
                    7
                }
            }
        }
    }
}

/// Gradient matrix `G[k][r] = d u_k / d x_r` of basis function `(comp, node)`.
fn basis_gradient(dim: usize, comp: usize, g: &[f64]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    m[comp][..dim].copy_from_slice(&g[..dim]);
    m
}

fn sym(m: &[[f64; 3]; 3], dim: usize) -> [[f64; 3]; 3] {
    let mut s = [[0.0; 3]; 3];
    for k in 0..dim {
        for r in 0..dim {
            s[k][r] = 0.5 * (m[k][r] + m[r][k]);
        }
    }
    s
}

fn frob(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    (0..3).map(|k| (0..3).map(|r| a[k][r] * b[k][r]).sum::<f64>()).sum()
}

fn matvec3(m: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|k| (0..3).map(|r| m[k][r] * x[r]).sum())
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Dense matrix of `form` by entrywise quadrature of degree
/// `production + ORACLE_EXTRA_DEGREE`.
pub fn dense_oracle_assemble(form: OracleForm<'_>, trial: &FESpace, test: &FESpace) -> Result<DenseMatrix, OracleError> {
    let got = trial.dof_count().max(test.dof_count());
    if got > ORACLE_MAX_DOFS {
        return Err(OracleError::TooLarge { got, max: ORACLE_MAX_DOFS });
    }
    if !std::ptr::eq(trial.mesh().as_ref(), test.mesh().as_ref()) && !trial.same_mesh(test) {
        return Err(OracleError::MeshMismatch);
    }
    let kinds = (trial.kind(), test.kind());
    let velocity_pair = kinds == (SpaceKind::P2Vector, SpaceKind::P2Vector);
    match form {
        OracleForm::Divergence if kinds != (SpaceKind::P2Vector, SpaceKind::P1Pressure) => {
            return Err(OracleError::WrongSpaces { expected: "P2 vector trial and P1 pressure test", got: kinds })
        }
        OracleForm::Mass | OracleForm::Stiffness if kinds.0 != kinds.1 => {
            return Err(OracleError::WrongSpaces { expected: "equal", got: kinds })
        }
        OracleForm::Convection { .. } | OracleForm::Viscous { .. } | OracleForm::Anisotropic { .. } if !velocity_pair => {
            return Err(OracleError::WrongSpaces { expected: "P2 vector", got: kinds })
        }
        _ => {}
    }
    let mesh = trial.mesh();
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    match form {
        OracleForm::Convection { w } if w.len() != trial.dof_count() => {
            return Err(OracleError::CoefficientLength { expected: trial.dof_count(), got: w.len() })
        }
        OracleForm::Anisotropic { d, .. } if d.len() != dim * nv => {
            return Err(OracleError::CoefficientLength { expected: dim * nv, got: d.len() })
        }
        _ => {}
    }
    let degree = form.production_degree(dim, trial) + ORACLE_EXTRA_DEGREE;
    let (pts, wts) = conical_rule(dim, degree);
    let (ntr, nte) = (trial.num_nodes(), test.num_nodes());
    let (ctr, cte) = (trial.components(), test.components());
    let mut out = DenseMatrix::zeros(test.dof_count(), trial.dof_count());
    for c in 0..mesh.num_cells() {
        let tr_nodes = oracle_nodes(mesh, c, trial.kind().degree());
        let te_nodes = oracle_nodes(mesh, c, test.kind().degree());
        let tr_map = match_nodes(trial, c, &tr_nodes)?;
        let te_map = match_nodes(test, c, &te_nodes)?;
        let tr_basis = CellBasis::new(&tr_nodes, trial.kind().degree());
        let te_basis = CellBasis::new(&te_nodes, test.kind().degree());
        let p1_nodes = oracle_nodes(mesh, c, 1);
        let p1_basis = CellBasis::new(&p1_nodes, 1);
        let det = jacobian_det(mesh, c);
        // coefficient fields restricted to the cell
        let w_local: Vec<Vec<f64>> = match form {
            OracleForm::Convection { w } => tr_map.iter().map(|&g| (0..dim).map(|i| w[i * ntr + g]).collect()).collect(),
            _ => Vec::new(),
        };
        for (xi, &wq) in pts.iter().zip(&wts) {
            let x = physical_point(mesh, c, xi);
            let wt = wq * det;
            let (pu, gu) = tr_basis.eval(&x);
            let (pa, ga) = te_basis.eval(&x);
            // advecting field and its divergence
            let (mut wv, mut divw) = ([0.0; 3], 0.0);
            if let OracleForm::Convection { .. } = form {
                for (b, wl) in w_local.iter().enumerate() {
                    for i in 0..dim {
                        wv[i] += pu[b] * wl[i];
                        divw += gu[b][i] * wl[i];
                    }
                }
            }
            let mut dq = [0.0; 3];
            if let OracleForm::Anisotropic { d, .. } = form {
                let (p1, _) = p1_basis.eval(&x);
                for (a, &v) in mesh.cell(c).iter().enumerate() {
                    for i in 0..dim {
                        dq[i] += p1[a] * d[i * nv + v];
                    }
                }
            }
            for ia in 0..cte {
                for (a, &ga_node) in te_map.iter().enumerate() {
                    let row = ia * nte + ga_node;
                    for ju in 0..ctr {
                        for (b, &gb_node) in tr_map.iter().enumerate() {
                            let col = ju * ntr + gb_node;
                            let val = match form {
                                OracleForm::Mass => {
                                    if ia == ju {
                                        pu[b] * pa[a]
                                    } else {
                                        0.0
                                    }
                                }
                                OracleForm::Stiffness => {
                                    if ia == ju {
                                        (0..dim).map(|r| gu[b][r] * ga[a][r]).sum()
                                    } else {
                                        0.0
                                    }
                                }
                                OracleForm::Divergence => -gu[b][ju] * pa[a],
                                OracleForm::Convection { .. } => {
                                    if ia == ju {
                                        let adv: f64 = (0..dim).map(|r| wv[r] * gu[b][r]).sum();
                                        (adv + 0.5 * divw * pu[b]) * pa[a]
                                    } else {
                                        0.0
                                    }
                                }
                                OracleForm::Viscous { params } => {
                                    let gmu = basis_gradient(dim, ju, &gu[b]);
                                    let gma = basis_gradient(dim, ia, &ga[a]);
                                    match params.model {
                                        Model::Full => params.mu4 * frob(&sym(&gmu, dim), &sym(&gma, dim)),
                                        Model::Simplified => params.nu * frob(&gmu, &gma),
                                    }
                                }
                                OracleForm::Anisotropic { params, .. } => {
                                    if params.model == Model::Simplified {
                                        0.0
                                    } else {
                                        let l2 = params.lambda * params.lambda;
                                        let c1 = params.v_el * (params.mu1 + l2);
                                        let c2 = params.v_el * (params.mu5_plus_mu6 - l2);
                                        let su = sym(&basis_gradient(dim, ju, &gu[b]), dim);
                                        let sa = sym(&basis_gradient(dim, ia, &ga[a]), dim);
                                        let (sud, sad) = (matvec3(&su, &dq), matvec3(&sa, &dq));
                                        c1 * dot3(&dq, &sud) * dot3(&dq, &sad) + c2 * dot3(&sud, &sad)
                                    }
                                }
                            };
                            if val != 0.0 {
                                out.add(row, col, wt * val);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// brute-force lumped sums

fn embed(v: &[f64]) -> [f64; 3] {
    let mut o = [0.0; 3];
    o[..v.len()].copy_from_slice(v);
    o
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn vertex_value(values: &[f64], nv: usize, dim: usize, z: usize) -> [f64; 3] {
    let v: Vec<f64> = (0..dim).map(|i| values[i * nv + z]).collect();
    embed(&v)
}

/// Lumped Ericksen force `(G^T [d x (d x lap)], a)_h` for every P2 dof,
/// summed cell by cell over the vertices with literal 3D cross products.
/// `grad` holds the vertex gradient, component `i * dim + r` = `d d_i / d x_r`.
pub fn oracle_ericksen_force(velocity: &FESpace, grad: &[f64], d: &[f64], lap: &[f64]) -> Result<Vec<f64>, OracleError> {
    let mesh = velocity.mesh();
    let (dim, nv, nn) = (mesh.dim(), mesh.num_vertices(), velocity.num_nodes());
    let mut out = vec![0.0; velocity.dof_count()];
    for c in 0..mesh.num_cells() {
        let nodes = oracle_nodes(mesh, c, 2);
        let map = match_nodes(velocity, c, &nodes)?;
        let basis = CellBasis::new(&nodes, 2);
        let omega = jacobian_det(mesh, c) / if dim == 2 { 2.0 } else { 6.0 } / (dim + 1) as f64;
        for &z in mesh.cell(c) {
            let (phi, _) = basis.eval(mesh.vertex(z));
            let (dz, lz) = (vertex_value(d, nv, dim, z), vertex_value(lap, nv, dim, z));
            let t = cross(&dz, &cross(&dz, &lz));
            for r in 0..dim {
                let s: f64 = (0..dim).map(|i| grad[(i * dim + r) * nv + z] * t[i]).sum();
                for (b, &g) in map.iter().enumerate() {
                    out[r * nn + g] += omega * s * phi[b];
                }
            }
        }
    }
    Ok(out)
}

/// Lumped elastic Leslie coupling
/// `v_el A [lambda (d x S(a) d, d x lap)_h + (W(a) lap, d)_h]` for every P2 dof.
pub fn oracle_leslie_elastic(velocity: &FESpace, d: &[f64], lap: &[f64], params: &Params) -> Result<Vec<f64>, OracleError> {
    let mesh = velocity.mesh();
    let (dim, nv, nn) = (mesh.dim(), mesh.num_vertices(), velocity.num_nodes());
    let mut out = vec![0.0; velocity.dof_count()];
    if params.model == Model::Simplified {
        return Ok(out);
    }
    for c in 0..mesh.num_cells() {
        let nodes = oracle_nodes(mesh, c, 2);
        let map = match_nodes(velocity, c, &nodes)?;
        let basis = CellBasis::new(&nodes, 2);
        let omega = jacobian_det(mesh, c) / if dim == 2 { 2.0 } else { 6.0 } / (dim + 1) as f64;
        for &z in mesh.cell(c) {
            // gradients of the quadratic basis at a vertex, from inside cell c
            let (_, grads) = basis.eval(mesh.vertex(z));
            let (dz, lz) = (vertex_value(d, nv, dim, z), vertex_value(lap, nv, dim, z));
            let dxl = cross(&dz, &lz);
            for (b, &g) in map.iter().enumerate() {
                for j in 0..dim {
                    let gm = basis_gradient(dim, j, &grads[b]);
                    let s = sym(&gm, dim);
                    let mut w = [[0.0; 3]; 3];
                    for k in 0..3 {
                        for r in 0..3 {
                            w[k][r] = 0.5 * (gm[k][r] - gm[r][k]);
                        }
                    }
                    let stretch = dot3(&cross(&dz, &matvec3(&s, &dz)), &dxl);
                    let rot = dot3(&matvec3(&w, &lz), &dz);
                    out[j * nn + g] += params.v_el * params.a * omega * (params.lambda * stretch + rot);
                }
            }
        }
    }
    Ok(out)
}

/// `-Delta_h f` at the interior vertices by solving the lumped system
/// node by node from the dense stiffness, zero on the boundary.
pub fn oracle_discrete_laplacian(p1: &FESpace, values: &[f64]) -> Result<Vec<f64>, OracleError> {
    let scalar = FESpace::new(p1.mesh().clone(), SpaceKind::P1Scalar);
    let k = dense_oracle_assemble(OracleForm::Stiffness, &scalar, &scalar)?;
    let m = dense_oracle_assemble(OracleForm::Mass, &scalar, &scalar)?;
    let n = scalar.num_nodes();
    let comps = values.len() / n;
    let mut out = vec![0.0; values.len()];
    for c in 0..comps {
        for z in (0..n).filter(|&z| !scalar.is_boundary_node(z)) {
            let kz: f64 = (0..n).map(|y| k.get(z, y) * values[c * n + y]).sum();
            out[c * n + z] = -kz / m.row_sum(z);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// second-order jets

/// Truncated Taylor jet `f + f' t + f'' t^2 / 2` in one direction, carrying
/// exact first and second derivatives through arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    pub fn variable(v: f64) -> Self {
        Self { v, d1: 1.0, d2: 0.0 }
    }

    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self { v: f, d1: df * self.d1, d2: ddf * self.d1 * self.d1 + df * self.d2 }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d1: self.d1 * o.v + self.v * o.d1, d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2 }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d1: -self.d1, d2: -self.d2 }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self * o.v, d1: self * o.d1, d2: self * o.d2 }
    }
}

/// Value, gradient (`i * dim + r`) and Laplacian of a vector field written
/// once over jets, by seeding each axis in turn.
pub fn jet_derivatives(x: &[f64], field: &dyn Fn(&[Jet]) -> Vec<Jet>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = x.len();
    let mut value = Vec::new();
    let mut grad = Vec::new();
    let mut lap = Vec::new();
    for r in 0..dim {
        let args: Vec<Jet> = (0..dim).map(|s| if s == r { Jet::variable(x[s]) } else { Jet::constant(x[s]) }).collect();
        let f = field(&args);
        if r == 0 {
            value = f.iter().map(|j| j.v).collect();
            grad = vec![0.0; f.len() * dim];
            lap = vec![0.0; f.len()];
        }
        for (i, j) in f.iter().enumerate() {
            grad[i * dim + r] = j.d1;
            lap[i] += j.d2;
        }
    }
    (value, grad, lap)
}
