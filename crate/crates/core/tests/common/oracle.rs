//! Sparse production assembly against the dense oracle on small meshes.

use std::sync::Arc;

use nematic::fespace::{interpolate_nodal, FESpace, SpaceKind};
use nematic::mesh::{BoxDomain, Mesh};
use nematic::operators::forms::{self, VectorAssembler};
use nematic::operators::leslie::{discrete_laplacian, ericksen_force, leslie_elastic_rhs, recovered_gradient};
use nematic::operators::{Model, Params};
use nematic::testsupport::{
    dense_oracle_assemble, oracle_discrete_laplacian, oracle_ericksen_force, oracle_leslie_elastic, OracleForm,
    ORACLE_MAX_DOFS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORACLE_TOL: f64 = 1e-12;

/// One compared quantity with its max-abs discrepancy and tolerance.
#[derive(Debug)]
pub struct Discrepancy {
    pub name: String,
    pub error: f64,
    pub tol: f64,
}

impl Discrepancy {
    pub fn ok(&self) -> bool {
        self.error <= self.tol
    }
}

pub fn params(model: Model) -> Params {
    Params {
        mu1: 0.7,
        mu4: 0.3,
        mu5_plus_mu6: 2.5,
        lambda: 0.9,
        nu: 0.4,
        a: 1.3,
        v_el: 0.6,
        k: 1e-3,
        theta: 1e-6,
        t_end: 1.0,
        model,
    }
}

/// Structured and randomly displaced meshes in 2D and 3D.
pub fn meshes() -> Vec<Arc<Mesh>> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut out = Vec::new();
    for (dim, n) in [(2, 4), (3, 2)] {
        let m = Mesh::build_box(&BoxDomain::cube(dim, -0.5, 0.5).unwrap(), n).unwrap();
        let amp = 0.15 / n as f64;
        let moved = m.displaced(|_, x| x.iter().map(|c| c + rng.random_range(-amp..amp)).collect()).unwrap();
        out.push(Arc::new(m));
        out.push(Arc::new(moved));
    }
    out
}

pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn label(mesh: &Mesh, i: usize, what: &str) -> String {
    format!("{}d mesh {} {what}", mesh.dim(), if i.is_multiple_of(2) { "structured" } else { "displaced" })
}

/// Mass and stiffness for every space, plus lumped weights against row sums.
pub fn mass_and_stiffness() -> Vec<Discrepancy> {
    let mut out = Vec::new();
    for (i, mesh) in meshes().iter().enumerate() {
        for kind in [SpaceKind::P1Scalar, SpaceKind::P1Vector, SpaceKind::P2Vector] {
            let s = FESpace::new(mesh.clone(), kind);
            assert!(s.dof_count() <= ORACLE_MAX_DOFS);
            let dm = dense_oracle_assemble(OracleForm::Mass, &s, &s).unwrap();
            let e = dm.max_abs_diff(&forms::mass_matrix(&s));
            out.push(Discrepancy { name: label(mesh, i, &format!("{kind:?} mass")), error: e, tol: ORACLE_TOL });
            let dk = dense_oracle_assemble(OracleForm::Stiffness, &s, &s).unwrap();
            let e = dk.max_abs_diff(&forms::stiffness_matrix(&s));
            out.push(Discrepancy { name: label(mesh, i, &format!("{kind:?} stiffness")), error: e, tol: ORACLE_TOL });
            if kind == SpaceKind::P1Scalar {
                let e = (0..s.num_nodes()).map(|z| (dm.row_sum(z) - s.lumped_weights()[z]).abs()).fold(0.0, f64::max);
                out.push(Discrepancy { name: label(mesh, i, "lumped weights"), error: e, tol: ORACLE_TOL });
            }
        }
    }
    out
}

pub fn divergence() -> Vec<Discrepancy> {
    let mut out = Vec::new();
    for (i, mesh) in meshes().iter().enumerate() {
        let v = FESpace::new(mesh.clone(), SpaceKind::P2Vector);
        let p = FESpace::new(mesh.clone(), SpaceKind::P1Pressure);
        let d = dense_oracle_assemble(OracleForm::Divergence, &v, &p).unwrap();
        let e = d.max_abs_diff(&forms::divergence_matrix(&v, &p));
        out.push(Discrepancy { name: label(mesh, i, "divergence"), error: e, tol: ORACLE_TOL });
    }
    out
}

/// Convection, viscous and anisotropic forms for both models.
pub fn velocity_forms() -> Vec<Discrepancy> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    for (i, mesh) in meshes().iter().enumerate() {
        let v = FESpace::new(mesh.clone(), SpaceKind::P2Vector);
        let asm = VectorAssembler::new(&v);
        let w = random(v.dof_count(), &mut rng);
        let c = dense_oracle_assemble(OracleForm::Convection { w: &w }, &v, &v).unwrap();
        let e = c.max_abs_diff(&forms::convection_matrix(&v, &asm, &w));
        out.push(Discrepancy { name: label(mesh, i, "convection"), error: e, tol: ORACLE_TOL });
        let d = random(mesh.dim() * mesh.num_vertices(), &mut rng);
        for model in [Model::Full, Model::Simplified] {
            let p = params(model);
            let vis = dense_oracle_assemble(OracleForm::Viscous { params: &p }, &v, &v).unwrap();
            let e = vis.max_abs_diff(&forms::viscous_matrix(&v, &asm, &p));
            out.push(Discrepancy { name: label(mesh, i, &format!("{model:?} viscous")), error: e, tol: ORACLE_TOL });
            let an = dense_oracle_assemble(OracleForm::Anisotropic { params: &p, d: &d }, &v, &v).unwrap();
            let e = an.max_abs_diff(&forms::anisotropic_matrix(&v, &asm, &p, &d));
            out.push(Discrepancy { name: label(mesh, i, &format!("{model:?} anisotropic")), error: e, tol: ORACLE_TOL });
        }
    }
    out
}

/// Mass-lumped Laplacian and the lumped Ericksen and Leslie forces against
/// brute-force nodal summation.
pub fn lumped_director_forces() -> Vec<Discrepancy> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = Vec::new();
    for (i, mesh) in meshes().iter().enumerate() {
        let dim = mesh.dim();
        let v = FESpace::new(mesh.clone(), SpaceKind::P2Vector);
        let p1 = FESpace::new(mesh.clone(), SpaceKind::P1Vector);
        let phase: Vec<f64> = random(3, &mut rng);
        let d = interpolate_nodal(&p1, |x| {
            let a = 2.0 * x[0] + phase[0] + x[1] * phase[1];
            let mut u = vec![a.cos(), a.sin()];
            if dim == 3 {
                u.push(phase[2] + x[2]);
            }
            u
        })
        .unwrap();
        let lap = discrete_laplacian(&p1, d.values());
        // nodal values scale like h^-2, so compare relative to their size
        let big = lap.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let e = max_diff(&lap, &oracle_discrete_laplacian(&p1, d.values()).unwrap()) / big;
        out.push(Discrepancy { name: label(mesh, i, "discrete Laplacian (relative)"), error: e, tol: ORACLE_TOL });
        let g = recovered_gradient(mesh, p1.lumped_weights(), d.values());
        let fe = ericksen_force(&v, &g, d.values(), &lap);
        let e = max_diff(&fe, &oracle_ericksen_force(&v, &g, d.values(), &lap).unwrap());
        out.push(Discrepancy { name: label(mesh, i, "Ericksen force"), error: e, tol: ORACLE_TOL });
        for model in [Model::Full, Model::Simplified] {
            let p = params(model);
            let fl = leslie_elastic_rhs(&v, d.values(), &lap, &p);
            let e = max_diff(&fl, &oracle_leslie_elastic(&v, d.values(), &lap, &p).unwrap());
            out.push(Discrepancy { name: label(mesh, i, &format!("{model:?} elastic Leslie force")), error: e, tol: ORACLE_TOL });
        }
    }
    out
}

pub fn all() -> Vec<Discrepancy> {
    let mut out = mass_and_stiffness();
    out.extend(divergence());
    out.extend(velocity_forms());
    out.extend(lumped_director_forces());
    out
}
