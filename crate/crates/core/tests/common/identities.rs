//! Discrete operator identities on random data. Every check returns its
//! violation relative to the size of the data, so zero means exact.

use std::sync::Arc;

use nematic::fespace::{interpolate_nodal, lumped_dot, lumped_projection, FESpace, SpaceKind};
use nematic::mesh::{BoxDomain, Mesh};
use nematic::operators::forms::{self, VectorAssembler};
use nematic::operators::leslie::{discrete_laplacian, p1_cell_gradients, recovered_gradient};
use nematic::operators::{Model, Params};
use nematic::sparsela::SparseMatrix;
use nematic::testsupport::conical_rule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IDENTITY_TOL: f64 = 1e-11;

/// One randomized instance: its own mesh (structured or displaced) and data.
pub struct Instance {
    pub mesh: Arc<Mesh>,
    pub rng: ChaCha8Rng,
}

impl Instance {
    pub fn new(seed: u64, dim: usize, displaced: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = if dim == 2 { 4 } else { 2 };
        let m = Mesh::build_box(&BoxDomain::cube(dim, -0.5, 0.5).unwrap(), n).unwrap();
        let mesh = if displaced {
            let amp = 0.2 / n as f64;
            m.displaced(|_, x| x.iter().map(|c| c + rng.random_range(-amp..amp)).collect()).unwrap()
        } else {
            m
        };
        Self { mesh: Arc::new(mesh), rng }
    }

    /// Seeds 0, 1, ... cycle through 2D/3D and structured/displaced meshes.
    pub fn nth(seed: u64) -> Self {
        Self::new(seed, 2 + (seed % 2) as usize, (seed / 2) % 2 == 1)
    }

    fn dim(&self) -> usize {
        self.mesh.dim()
    }

    fn random(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.random_range(-1.0..1.0)).collect()
    }

    fn random_zero_trace(&mut self, space: &FESpace) -> Vec<f64> {
        let mut v = self.random(space.dof_count());
        for dof in space.boundary_dofs() {
            v[dof] = 0.0;
        }
        v
    }

    /// Admissible full-model coefficients: `mu4 > 0`, `mu5 + mu6 >= lambda^2`,
    /// `mu1 + lambda^2 >= 0`.
    fn random_params(&mut self) -> Params {
        let lambda: f64 = self.rng.random_range(-1.5..1.5);
        let l2 = lambda * lambda;
        Params {
            mu1: self.rng.random_range(0.0..2.0) - l2 * self.rng.random_range(0.0..1.0),
            mu4: self.rng.random_range(0.05..2.0),
            mu5_plus_mu6: l2 + self.rng.random_range(0.0..2.0),
            lambda,
            nu: self.rng.random_range(0.05..2.0),
            a: 1.0,
            v_el: self.rng.random_range(0.0..2.0),
            k: 1e-3,
            theta: 1e-6,
            t_end: 1.0,
            model: Model::Full,
        }
    }
}

/// `1 + sum |x_r A_rc y_c|`, the natural size of `x^T A y`.
fn scale(m: &SparseMatrix, x: &[f64], y: &[f64]) -> f64 {
    let abs: f64 = (0..m.nrows())
        .map(|r| {
            let (cols, vals) = m.row(r);
            cols.iter().zip(vals).map(|(&c, v)| (x[r] * v * y[c]).abs()).sum::<f64>()
        })
        .sum();
    1.0 + abs
}

fn quadratic(coef: &[f64], x: &[f64]) -> f64 {
    let mut s = coef[0];
    for (i, xi) in x.iter().enumerate() {
        s += coef[1 + i] * xi + coef[4 + i] * xi * xi;
    }
    s + coef[7] * x[0] * x[1]
}

/// `(Delta_h f, g)_h = -(grad f, grad g)` for zero-trace `g`, and symmetry of
/// `Delta_h` on zero-trace fields.
pub fn laplacian_adjointness(inst: &mut Instance) -> f64 {
    let dim = inst.dim();
    let p1 = FESpace::new(inst.mesh.clone(), SpaceKind::P1Vector);
    let w = p1.lumped_weights().to_vec();
    let nv = p1.num_nodes();
    let f = inst.random(p1.dof_count());
    let g = inst.random_zero_trace(&p1);
    let f0 = inst.random_zero_trace(&p1);
    let k = forms::stiffness_matrix(&p1);
    let lhs = lumped_dot(&w, &discrete_laplacian(&p1, &f), nv, &g, nv, dim);
    let adj = (lhs + k.bilinear(&g, &f)).abs() / scale(&k, &g, &f);
    let a = lumped_dot(&w, &discrete_laplacian(&p1, &f0), nv, &g, nv, dim);
    let b = lumped_dot(&w, &f0, nv, &discrete_laplacian(&p1, &g), nv, dim);
    adj.max((a - b).abs() / scale(&k, &g, &f0))
}

/// `(I_h f, g) = (f, R_h g)_h`, the left side by an independent collapsed rule.
pub fn interpolation_adjoint(inst: &mut Instance) -> f64 {
    let (m, dim) = (inst.mesh.clone(), inst.dim());
    let p1 = FESpace::new(m.clone(), SpaceKind::P1Scalar);
    let (cf, cg) = (inst.random(8), inst.random(8));
    let f = |x: &[f64]| (quadratic(&cf, x) * 3.0).sin();
    let g = |x: &[f64]| quadratic(&cg, x);
    let fi = interpolate_nodal(&p1, |x| vec![f(x)]).unwrap();
    let rg = lumped_projection(&p1, &|_, x| vec![g(x)], 4).unwrap();
    let rhs = lumped_dot(p1.lumped_weights(), fi.values(), p1.num_nodes(), rg.values(), p1.num_nodes(), 1);
    let (pts, wts) = conical_rule(dim, 6);
    let wsum: f64 = wts.iter().sum();
    let (mut lhs, mut size) = (0.0, 0.0);
    let mut x = vec![0.0; dim];
    for c in 0..m.num_cells() {
        for (p, w) in pts.iter().zip(&wts) {
            let mut bary = vec![1.0 - p.iter().sum::<f64>()];
            bary.extend_from_slice(p);
            m.bary_to_point(c, &bary, &mut x);
            let ih: f64 = m.cell(c).iter().zip(&bary).map(|(&v, l)| l * fi.values()[v]).sum();
            let term = m.cell_volume(c) * w / wsum * ih * g(&x);
            lhs += term;
            size += term.abs();
        }
    }
    (lhs - rhs).abs() / (1.0 + size)
}

/// `(R_h G, b)_h = (G, b)` for the recovered gradient and P1 `b`, the
/// resulting `|R_h G|_h^2 = (G, R_h G)`, and the stability `|R_h G|_h <= |G|`.
pub fn recovered_gradient_stability(inst: &mut Instance) -> f64 {
    let (m, dim) = (inst.mesh.clone(), inst.dim());
    let p1 = FESpace::new(m.clone(), SpaceKind::P1Vector);
    let w = p1.lumped_weights();
    let nv = m.num_vertices();
    let comps = dim * dim;
    let d = inst.random(p1.dof_count());
    let rg = recovered_gradient(&m, w, &d);
    let cell = p1_cell_gradients(&m, &d, dim);
    let pair = |b: &[f64]| -> f64 {
        let mut s = 0.0;
        for c in 0..m.num_cells() {
            let vol = m.cell_volume(c) / (dim + 1) as f64;
            for &v in m.cell(c) {
                for i in 0..comps {
                    s += vol * cell[c * comps + i] * b[i * nv + v];
                }
            }
        }
        s
    };
    let grad_sq = forms::stiffness_matrix(&p1).bilinear(&d, &d);
    let lumped_sq = lumped_dot(w, &rg, nv, &rg, nv, comps);
    let b = inst.random(comps * nv);
    let defining = (lumped_dot(w, &rg, nv, &b, nv, comps) - pair(&b)).abs();
    let square = (lumped_sq - pair(&rg)).abs();
    let excess = (lumped_sq - grad_sq).max(0.0);
    defining.max(square).max(excess) / (1.0 + grad_sq)
}

/// `c(w; u, a) + c(w; a, u) = 0` for zero-trace `u`, `a` and arbitrary `w`.
pub fn convection_skew(inst: &mut Instance) -> f64 {
    let v = FESpace::new(inst.mesh.clone(), SpaceKind::P2Vector);
    let asm = VectorAssembler::new(&v);
    let w = inst.random(v.dof_count());
    let c = forms::convection_matrix(&v, &asm, &w);
    let u = inst.random_zero_trace(&v);
    let a = inst.random_zero_trace(&v);
    let skew = (c.bilinear(&a, &u) + c.bilinear(&u, &a)).abs() / scale(&c, &a, &u);
    skew.max(c.bilinear(&u, &u).abs() / scale(&c, &u, &u))
}

/// Symmetry of the dissipative form for a random (not unit) director.
pub fn dissipative_symmetry(inst: &mut Instance) -> f64 {
    let (m, dim) = (inst.mesh.clone(), inst.dim());
    let v = FESpace::new(m.clone(), SpaceKind::P2Vector);
    let asm = VectorAssembler::new(&v);
    let params = inst.random_params();
    params.validate().unwrap();
    let d = inst.random(dim * m.num_vertices());
    let td = forms::dissipative_matrix(&v, &asm, &params, &d);
    let big = td.values().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let x = inst.random(v.dof_count());
    let y = inst.random(v.dof_count());
    let pairing = (td.bilinear(&y, &x) - td.bilinear(&x, &y)).abs() / scale(&td, &y, &x);
    (td.asymmetry() / big).max(pairing)
}

/// `a(v, v) >= mu4 |(grad v)_sym|^2` for the dissipative form.
pub fn dissipative_coercivity(inst: &mut Instance) -> f64 {
    let (m, dim) = (inst.mesh.clone(), inst.dim());
    let v = FESpace::new(m.clone(), SpaceKind::P2Vector);
    let asm = VectorAssembler::new(&v);
    let params = inst.random_params();
    let d = inst.random(dim * m.num_vertices());
    let td = forms::dissipative_matrix(&v, &asm, &params, &d);
    let x = inst.random(v.dof_count());
    let unit = Params { mu4: 1.0, ..params.clone() };
    let sym = params.mu4 * forms::viscous_matrix(&v, &asm, &unit).bilinear(&x, &x);
    (sym - td.bilinear(&x, &x)).max(0.0) / scale(&td, &x, &x)
}

pub type Identity = fn(&mut Instance) -> f64;

pub const IDENTITIES: [(&str, Identity); 6] = [
    ("discrete Laplacian adjointness", laplacian_adjointness),
    ("interpolation / lumped projection adjoint", interpolation_adjoint),
    ("recovered gradient stability", recovered_gradient_stability),
    ("convection skew-symmetry", convection_skew),
    ("dissipative form symmetry", dissipative_symmetry),
    ("dissipative form coercivity", dissipative_coercivity),
];
