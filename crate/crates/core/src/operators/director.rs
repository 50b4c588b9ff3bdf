//! Linearized director equation.
//!
//! With mass lumping every interior vertex `z` decouples: the unknown
//! `D = d^{new}(z)` solves
//! `(w_z/k) (D - d_prev) + N_z (D + d_prev) / 2 = 0`
//! with a skew-symmetric `N_z`, so `|D| = |d_prev|` holds exactly.

use crate::fespace::FESpace;
use crate::operators::leslie::{dot, nodal, p2_vertex_gradients};
use crate::operators::params::Params;
use crate::sparsela::SparseMatrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("director system singular at vertex {vertex} (pivot {pivot:e})")]
pub struct DirectorError {
    pub vertex: usize,
    pub pivot: f64,
}

/// Lagged data entering the director equation.
pub struct DirectorInputs<'a> {
    /// Lagged velocity (P2, component-major).
    pub v: &'a [f64],
    /// Director at the previous time level.
    pub d_prev: &'a [f64],
    /// Lagged midpoint director.
    pub d_lag: &'a [f64],
    /// Discrete Laplacian of the lagged midpoint.
    pub lap_lag: &'a [f64],
    /// Recovered gradient of `d_prev` (`dim * dim` components).
    pub grad_prev: &'a [f64],
}

/// Skew generator `N_z` for every vertex, row-major `dim x dim` blocks.
pub fn generators(velocity: &FESpace, inputs: &DirectorInputs<'_>, params: &Params) -> Vec<f64> {
    let mesh = velocity.mesh();
    let (dim, nv, nn) = (velocity.dim(), mesh.num_vertices(), velocity.num_nodes());
    let dd = dim * dim;
    let w = velocity.lumped_weights();
    // cell-local lumping of the velocity gradient at the vertices
    let mut s_sum = vec![0.0; nv * dd];
    let mut w_sum = vec![0.0; nv * dd];
    if params.is_full() {
        let gv = p2_vertex_gradients(velocity, inputs.v);
        for c in 0..mesh.num_cells() {
            let om = mesh.cell_volume(c) / (dim + 1) as f64;
            for (q, &z) in mesh.cell(c).iter().enumerate() {
                let g = &gv[(c * (dim + 1) + q) * dd..(c * (dim + 1) + q + 1) * dd];
                for i in 0..dim {
                    for r in 0..dim {
                        s_sum[z * dd + i * dim + r] += om * 0.5 * (g[i * dim + r] + g[r * dim + i]);
                        w_sum[z * dd + i * dim + r] += om * 0.5 * (g[i * dim + r] - g[r * dim + i]);
                    }
                }
            }
        }
    }
    let mut out = vec![0.0; nv * dd];
    let (mut dl, mut ll, mut vz) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for z in 0..nv {
        nodal(inputs.d_lag, nv, dim, z, &mut dl);
        nodal(inputs.lap_lag, nv, dim, z, &mut ll);
        nodal(inputs.v, nn, dim, z, &mut vz);
        // Y collects every vector paired with d_lag through (d_lag x Y, D x c)_h
        let mut y = [0.0; 3];
        for i in 0..dim {
            let gv: f64 = (0..dim).map(|r| inputs.grad_prev[(i * dim + r) * nv + z] * vz[r]).sum();
            y[i] = w[z] * (params.v_el * gv - params.a * ll[i]);
            if params.is_full() {
                let sd: f64 = (0..dim).map(|r| s_sum[z * dd + i * dim + r] * dl[r]).sum();
                y[i] += params.v_el * params.lambda * sd;
            }
        }
        let n = &mut out[z * dd..(z + 1) * dd];
        for i in 0..dim {
            for j in 0..dim {
                n[i * dim + j] = y[i] * dl[j] - dl[i] * y[j];
                if params.is_full() {
                    n[i * dim + j] -= params.v_el * w_sum[z * dd + i * dim + j];
                }
            }
        }
    }
    out
}

fn solve_small(m: &mut [f64], b: &mut [f64], n: usize) -> Result<(), f64> {
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a * n + col].abs().total_cmp(&m[b * n + col].abs())).unwrap();
        if m[piv * n + col].abs() < 1e-300 {
            return Err(m[piv * n + col]);
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r * n + k] * b[k]).sum();
        b[r] = (b[r] - s) / m[r * n + r];
    }
    Ok(())
}

/// Solves the director equation vertex by vertex. Boundary vertices keep
/// their previous (Dirichlet) values.
pub fn solve_director(velocity: &FESpace, inputs: &DirectorInputs<'_>, params: &Params) -> Result<Vec<f64>, DirectorError> {
    let mesh = velocity.mesh();
    let (dim, nv) = (velocity.dim(), mesh.num_vertices());
    let dd = dim * dim;
    let gens = generators(velocity, inputs, params);
    let w = velocity.lumped_weights();
    let mut out = inputs.d_prev.to_vec();
    let mut m = vec![0.0; dd];
    let mut b = vec![0.0; dim];
    let mut dp = [0.0; 3];
    for z in 0..nv {
        if mesh.is_boundary_vertex(z) {
            continue;
        }
        nodal(inputs.d_prev, nv, dim, z, &mut dp);
        let n = &gens[z * dd..(z + 1) * dd];
        let s = w[z] / params.k;
        for i in 0..dim {
            b[i] = s * dp[i] - 0.5 * dot(&n[i * dim..(i + 1) * dim], &dp[..dim]);
            for j in 0..dim {
                m[i * dim + j] = 0.5 * n[i * dim + j] + if i == j { s } else { 0.0 };
            }
        }
        solve_small(&mut m, &mut b, dim).map_err(|pivot| DirectorError { vertex: z, pivot })?;
        for i in 0..dim {
            out[i * nv + z] = b[i];
        }
    }
    Ok(out)
}

/// The same linear system assembled as a sparse matrix over the P1 vector
/// dofs, with identity rows imposing the previous values on the boundary.
pub fn director_system(velocity: &FESpace, inputs: &DirectorInputs<'_>, params: &Params) -> (SparseMatrix, Vec<f64>) {
    let mesh = velocity.mesh();
    let (dim, nv) = (velocity.dim(), mesh.num_vertices());
    let dd = dim * dim;
    let gens = generators(velocity, inputs, params);
    let w = velocity.lumped_weights();
    let mut trip = Vec::with_capacity(nv * dd);
    let mut rhs = vec![0.0; nv * dim];
    let mut dp = [0.0; 3];
    for z in 0..nv {
        nodal(inputs.d_prev, nv, dim, z, &mut dp);
        if mesh.is_boundary_vertex(z) {
            for i in 0..dim {
                trip.push((i * nv + z, i * nv + z, 1.0));
                rhs[i * nv + z] = dp[i];
            }
            continue;
        }
        let n = &gens[z * dd..(z + 1) * dd];
        let s = w[z] / params.k;
        for i in 0..dim {
            rhs[i * nv + z] = s * dp[i] - 0.5 * dot(&n[i * dim..(i + 1) * dim], &dp[..dim]);
            for j in 0..dim {
                let v = 0.5 * n[i * dim + j] + if i == j { s } else { 0.0 };
                trip.push((i * nv + z, j * nv + z, v));
            }
        }
    }
    let m = SparseMatrix::from_triplets(nv * dim, nv * dim, &trip).expect("indices in range");
    (m, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{interpolate_nodal, SpaceKind};
    use crate::mesh::{BoxDomain, Mesh};
    use crate::operators::leslie::{discrete_laplacian, recovered_gradient};
    use crate::operators::params::Model;
    use crate::sparsela::solve_direct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn params(a: f64) -> Params {
        Params {
            mu1: 1.0,
            mu4: 1.0,
            mu5_plus_mu6: 2.0,
            lambda: 1.0,
            nu: 1.0,
            a,
            v_el: 1.0,
            k: 1e-2,
            theta: 1e-6,
            t_end: 1.0,
            model: Model::Full,
        }
    }

    fn random_unit(dim: usize, nv: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut d = vec![0.0; dim * nv];
        for z in 0..nv {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = dot(&v, &v).sqrt();
            for i in 0..dim {
                d[i * nv + z] = v[i] / n;
            }
        }
        d
    }

    #[test]
    fn no_flow_no_elasticity_keeps_director() {
        let m = Arc::new(Mesh::build_box(&BoxDomain::cube(2, 0.0, 1.0).unwrap(), 3).unwrap());
        let v = FESpace::new(m.clone(), SpaceKind::P2Vector);
        let p1 = FESpace::new(m.clone(), SpaceKind::P1Vector);
        let d = interpolate_nodal(&p1, |x| vec![x[0].cos(), x[0].sin()]).unwrap();
        let lap = discrete_laplacian(&p1, d.values());
        let g = recovered_gradient(&m, p1.lumped_weights(), d.values());
        let zero = vec![0.0; v.dof_count()];
        let inp = DirectorInputs { v: &zero, d_prev: d.values(), d_lag: d.values(), lap_lag: &lap, grad_prev: &g };
        let out = solve_director(&v, &inp, &params(0.0)).unwrap();
        assert!(out.iter().zip(d.values()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn nodal_norms_preserved_and_sparse_system_agrees() {
        for dim in [2, 3] {
            let m = Arc::new(Mesh::build_box(&BoxDomain::cube(dim, 0.0, 1.0).unwrap(), 2).unwrap());
            let v = FESpace::new(m.clone(), SpaceKind::P2Vector);
            let p1 = FESpace::new(m.clone(), SpaceKind::P1Vector);
            let nv = m.num_vertices();
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            let d_prev = random_unit(dim, nv, &mut rng);
            let d_lag = random_unit(dim, nv, &mut rng);
            let lap = discrete_laplacian(&p1, &d_lag);
            let g = recovered_gradient(&m, p1.lumped_weights(), &d_prev);
            let vel: Vec<f64> = (0..v.dof_count()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let inp = DirectorInputs { v: &vel, d_prev: &d_prev, d_lag: &d_lag, lap_lag: &lap, grad_prev: &g };
            let p = params(1.0);
            let out = solve_director(&v, &inp, &p).unwrap();
            for z in 0..nv {
                let n: f64 = (0..dim).map(|i| out[i * nv + z].powi(2)).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-13);
            }
            let (a, rhs) = director_system(&v, &inp, &p);
            let x = solve_direct(&a, &rhs).unwrap();
            for (p, q) in x.iter().zip(&out) {
                assert!((p - q).abs() < 1e-12);
            }
            let gens = generators(&v, &inp, &p);
            for z in 0..nv {
                let n = &gens[z * dim * dim..(z + 1) * dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        assert!((n[i * dim + j] + n[j * dim + i]).abs() < 1e-14);
                    }
                }
            }
        }
    }
}
