//! Bilinear forms on the P1/P2 spaces: mass, stiffness, divergence,
//! skew-symmetrized convection and the dissipative Leslie form.

use crate::fespace::{FESpace, Tabulation};
use crate::operators::params::{Model, Params};
use crate::quadrature;
use crate::sparsela::{SolveError, SparseMatrix};

/// Scatter map from cell-local matrices into a fixed CSR pattern over all
/// dofs of a space (every component coupled with every component).
#[derive(Debug, Clone)]
pub struct VectorAssembler {
    n: usize,
    ldofs: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    positions: Vec<u32>,
}

impl VectorAssembler {
    pub fn new(space: &FESpace) -> Self {
        let (nn, nc, nloc) = (space.num_nodes(), space.components(), space.local_nodes());
        let ncell = space.mesh().num_cells();
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(ncell * nloc * nloc);
        for c in 0..ncell {
            let nodes = space.cell_nodes(c);
            for &a in nodes {
                for &b in nodes {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut adj_ptr = vec![0usize; nn + 1];
        for &(a, _) in &pairs {
            adj_ptr[a + 1] += 1;
        }
        for i in 0..nn {
            adj_ptr[i + 1] += adj_ptr[i];
        }
        let adj: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let n = nn * nc;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(pairs.len() * nc * nc);
        for _comp in 0..nc {
            for node in 0..nn {
                for c2 in 0..nc {
                    col_idx.extend(adj[adj_ptr[node]..adj_ptr[node + 1]].iter().map(|&b| c2 * nn + b));
                }
                row_ptr.push(col_idx.len());
            }
        }
        let ldofs = nloc * nc;
        let mut positions = Vec::with_capacity(ncell * ldofs * ldofs);
        let mut gdofs = vec![0usize; ldofs];
        for c in 0..ncell {
            let nodes = space.cell_nodes(c);
            for comp in 0..nc {
                for (a, &node) in nodes.iter().enumerate() {
                    gdofs[comp * nloc + a] = comp * nn + node;
                }
            }
            for &r in &gdofs {
                let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
                for &g in &gdofs {
                    let p = row.binary_search(&g).expect("pattern contains cell couplings");
                    positions.push((row_ptr[r] + p) as u32);
                }
            }
        }
        Self { n, ldofs, row_ptr, col_idx, positions }
    }

    /// Local dofs per cell (`local_nodes * components`).
    pub fn local_dofs(&self) -> usize {
        self.ldofs
    }

    /// Assembles `sum_c local(c)`; `local` fills a row-major
    /// `local_dofs x local_dofs` matrix (rows are test functions).
    pub fn assemble(&self, mut local: impl FnMut(usize, &mut [f64])) -> SparseMatrix {
        let mut values = vec![0.0; self.col_idx.len()];
        let l2 = self.ldofs * self.ldofs;
        let ncell = self.positions.len() / l2;
        let mut buf = vec![0.0; l2];
        for c in 0..ncell {
            buf.iter_mut().for_each(|x| *x = 0.0);
            local(c, &mut buf);
            for (p, v) in self.positions[c * l2..(c + 1) * l2].iter().zip(&buf) {
                values[*p as usize] += v;
            }
        }
        SparseMatrix::from_csr(self.n, self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
            .expect("assembler pattern is valid CSR")
    }
}

fn scalar_triplets(
    space: &FESpace,
    quad_degree: usize,
    mut local: impl FnMut(usize, &Tabulation, &mut [f64]),
) -> SparseMatrix {
    let tab = Tabulation::for_space(space, quad_degree);
    let (nn, nc, nloc) = (space.num_nodes(), space.components(), space.local_nodes());
    let ncell = space.mesh().num_cells();
    let mut trip = Vec::with_capacity(ncell * nloc * nloc * nc);
    let mut buf = vec![0.0; nloc * nloc];
    for c in 0..ncell {
        buf.iter_mut().for_each(|x| *x = 0.0);
        local(c, &tab, &mut buf);
        let nodes = space.cell_nodes(c);
        for comp in 0..nc {
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    trip.push((comp * nn + na, comp * nn + nb, buf[a * nloc + b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(nn * nc, nn * nc, &trip).expect("indices in range")
}

/// Consistent mass matrix `(u, a)`, block diagonal over components.
pub fn mass_matrix(space: &FESpace) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let nloc = space.local_nodes();
    scalar_triplets(space, 2 * space.kind().degree(), |c, tab, buf| {
        let vol = mesh.cell_volume(c);
        for q in 0..tab.len() {
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            let w = vol * tab.weights[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    buf[a * nloc + b] += w * phi[a] * phi[b];
                }
            }
        }
    })
}

/// Stiffness matrix `(grad u, grad a)`, block diagonal over components.
pub fn stiffness_matrix(space: &FESpace) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let (nloc, d) = (space.local_nodes(), space.dim());
    let mut g = vec![0.0; nloc * d];
    scalar_triplets(space, (2 * space.kind().degree() - 2).max(1), |c, tab, buf| {
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            let w = vol * tab.weights[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    let s: f64 = (0..d).map(|r| g[a * d + r] * g[b * d + r]).sum();
                    buf[a * nloc + b] += w * s;
                }
            }
        }
    })
}

/// `B[q, (i, node)] = -(div phi_{i,node}, psi_q)` for a P2 velocity space and
/// a P1 pressure space.
pub fn divergence_matrix(velocity: &FESpace, pressure: &FESpace) -> SparseMatrix {
    let mesh = velocity.mesh();
    let d = velocity.dim();
    let rule = quadrature::rule(d, 2);
    let tv = Tabulation::new(d, 2, rule);
    let tp = Tabulation::new(d, 1, rule);
    let (nn, nloc, np) = (velocity.num_nodes(), velocity.local_nodes(), pressure.local_nodes());
    let mut g = vec![0.0; nloc * d];
    let mut trip = Vec::new();
    for c in 0..mesh.num_cells() {
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        let vn = velocity.cell_nodes(c);
        let pn = pressure.cell_nodes(c);
        let mut local = vec![0.0; np * nloc * d];
        for q in 0..tv.len() {
            tv.grads(q, gb, &mut g);
            let w = vol * tv.weights[q];
            for (qa, psi) in tp.values[q * np..(q + 1) * np].iter().enumerate() {
                for i in 0..d {
                    for a in 0..nloc {
                        local[(qa * d + i) * nloc + a] -= w * psi * g[a * d + i];
                    }
                }
            }
        }
        for (qa, &pnode) in pn.iter().enumerate() {
            for i in 0..d {
                for (a, &vnode) in vn.iter().enumerate() {
                    trip.push((pnode, i * nn + vnode, local[(qa * d + i) * nloc + a]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(pressure.dof_count(), velocity.dof_count(), &trip).expect("indices in range")
}

/// `int psi_q` for every pressure basis function.
pub fn pressure_mean_weights(pressure: &FESpace) -> Vec<f64> {
    pressure.lumped_weights().to_vec()
}

/// Eliminates Dirichlet dofs symmetrically: fixed rows and columns of `a`
/// are removed and replaced by unit diagonal entries, their values moved to
/// the right-hand sides of both blocks.
pub fn eliminate_dirichlet(
    a: &SparseMatrix,
    rhs: &[f64],
    b: &SparseMatrix,
    fixed: &[Option<f64>],
) -> Result<(SparseMatrix, Vec<f64>, SparseMatrix, Vec<f64>), SolveError> {
    let n = a.nrows();
    if fixed.len() != n || rhs.len() != n || b.ncols() != n {
        return Err(SolveError::DimensionMismatch("Dirichlet elimination".into()));
    }
    let g: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let ag = a.matvec(&g);
    let mut rhs_u: Vec<f64> = rhs.iter().zip(&ag).map(|(r, x)| r - x).collect();
    let bg = b.matvec(&g);
    let rhs_p: Vec<f64> = bg.iter().map(|x| -x).collect();
    let mut rp = vec![0];
    let (mut ci, mut vals) = (Vec::with_capacity(a.nnz()), Vec::with_capacity(a.nnz()));
    for r in 0..n {
        if let Some(v) = fixed[r] {
            rhs_u[r] = v;
            ci.push(r);
            vals.push(1.0);
        } else {
            let (cols, vs) = a.row(r);
            for (&c, &v) in cols.iter().zip(vs) {
                if fixed[c].is_none() {
                    ci.push(c);
                    vals.push(v);
                }
            }
        }
        rp.push(ci.len());
    }
    let a2 = SparseMatrix::from_csr(n, n, rp, ci, vals)?;
    let mut rp = vec![0];
    let (mut ci, mut vals) = (Vec::with_capacity(b.nnz()), Vec::with_capacity(b.nnz()));
    for r in 0..b.nrows() {
        let (cols, vs) = b.row(r);
        for (&c, &v) in cols.iter().zip(vs) {
            if fixed[c].is_none() {
                ci.push(c);
                vals.push(v);
            }
        }
        rp.push(ci.len());
    }
    let b2 = SparseMatrix::from_csr(b.nrows(), n, rp, ci, vals)?;
    Ok((a2, rhs_u, b2, rhs_p))
}

/// Quadrature degree used for the velocity forms (exact for the dissipative
/// form with a P1 director).
pub fn velocity_quad_degree(dim: usize) -> usize {
    if dim == 2 {
        6
    } else {
        7
    }
}

/// Temam convection `((w . grad) u, a) + 1/2 ((div w) u, a)` with the P2
/// advecting field `w` (component-major values on `space`).
pub fn convection_matrix(space: &FESpace, assembler: &VectorAssembler, w: &[f64]) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let (d, nloc) = (space.dim(), space.local_nodes());
    let tab = Tabulation::for_space(space, 5);
    let mut wl = vec![0.0; nloc * d];
    let mut g = vec![0.0; nloc * d];
    let mut scal = vec![0.0; nloc * nloc];
    let ld = nloc * d;
    assembler.assemble(|c, buf| {
        space.gather(w, c, &mut wl);
        if wl.iter().all(|x| *x == 0.0) {
            return;
        }
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        scal.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            let phi = &tab.values[q * nloc..(q + 1) * nloc];
            let mut wq = [0.0; 3];
            let mut div = 0.0;
            for i in 0..d {
                for a in 0..nloc {
                    wq[i] += phi[a] * wl[i * nloc + a];
                    div += g[a * d + i] * wl[i * nloc + a];
                }
            }
            let wt = vol * tab.weights[q];
            for b in 0..nloc {
                let adv: f64 = (0..d).map(|i| wq[i] * g[b * d + i]).sum::<f64>() + 0.5 * div * phi[b];
                for a in 0..nloc {
                    scal[a * nloc + b] += wt * adv * phi[a];
                }
            }
        }
        for i in 0..d {
            for a in 0..nloc {
                for b in 0..nloc {
                    buf[(i * nloc + a) * ld + i * nloc + b] = scal[a * nloc + b];
                }
            }
        }
    })
}

/// Director-independent part of the viscous form: `mu4 (S v, S a)` for the
/// full model and `nu (grad v, grad a)` for the simplified one.
pub fn viscous_matrix(space: &FESpace, assembler: &VectorAssembler, params: &Params) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let (d, nloc) = (space.dim(), space.local_nodes());
    let tab = Tabulation::for_space(space, 2);
    let mut g = vec![0.0; nloc * d];
    let ld = nloc * d;
    assembler.assemble(|c, buf| {
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            let wt = vol * tab.weights[q];
            for a in 0..nloc {
                for b in 0..nloc {
                    let gg: f64 = (0..d).map(|r| g[a * d + r] * g[b * d + r]).sum();
                    for i in 0..d {
                        for j in 0..d {
                            let v = match params.model {
                                // S:S' = 1/2 (delta_ij g.h + g_i h_j), g trial grad, h test grad
                                Model::Full => {
                                    0.5 * params.mu4 * (if i == j { gg } else { 0.0 } + g[b * d + i] * g[a * d + j])
                                }
                                Model::Simplified => {
                                    if i == j {
                                        params.nu * gg
                                    } else {
                                        0.0
                                    }
                                }
                            };
                            buf[(i * nloc + a) * ld + j * nloc + b] += wt * v;
                        }
                    }
                }
            }
        }
    })
}

/// Director-dependent part of the dissipative form,
/// `c1 (d . S v d)(d . S a d) + c2 (S v d) . (S a d)` with the P1 director `d`
/// (component-major vertex values). Zero for the simplified model.
pub fn anisotropic_matrix(space: &FESpace, assembler: &VectorAssembler, params: &Params, d_lag: &[f64]) -> SparseMatrix {
    let mesh = space.mesh().clone();
    let (dim, nloc) = (space.dim(), space.local_nodes());
    let (c1, c2) = (params.c_mu1(), params.c_mu56());
    let ld = nloc * dim;
    if c1 == 0.0 && c2 == 0.0 {
        return assembler.assemble(|_, _| {});
    }
    let tab = Tabulation::for_space(space, velocity_quad_degree(dim));
    let nv = mesh.num_vertices();
    let mut g = vec![0.0; nloc * dim];
    // per local dof: u = d . S d, w = S d
    let mut u = vec![0.0; ld];
    let mut wv = vec![0.0; ld * dim];
    assembler.assemble(|c, buf| {
        let vol = mesh.cell_volume(c);
        let gb = mesh.cell_grad_bary(c);
        let verts = mesh.cell(c);
        for q in 0..tab.len() {
            tab.grads(q, gb, &mut g);
            let l = &tab.points[q];
            let mut dq = [0.0; 3];
            for i in 0..dim {
                dq[i] = verts.iter().zip(l).map(|(&v, &lv)| lv * d_lag[i * nv + v]).sum();
            }
            for j in 0..dim {
                for b in 0..nloc {
                    let gd: f64 = (0..dim).map(|r| g[b * dim + r] * dq[r]).sum();
                    let idx = j * nloc + b;
                    u[idx] = dq[j] * gd;
                    for r in 0..dim {
                        wv[idx * dim + r] = 0.5 * (if r == j { gd } else { 0.0 } + g[b * dim + r] * dq[j]);
                    }
                }
            }
            let wt = vol * tab.weights[q];
            for x in 0..ld {
                let ux = wt * c1 * u[x];
                let wx = &wv[x * dim..(x + 1) * dim];
                let row = &mut buf[x * ld..(x + 1) * ld];
                if dim == 2 {
                    let (a0, a1) = (wt * c2 * wx[0], wt * c2 * wx[1]);
                    for y in x..ld {
                        row[y] += ux * u[y] + a0 * wv[2 * y] + a1 * wv[2 * y + 1];
                    }
                } else {
                    let (a0, a1, a2) = (wt * c2 * wx[0], wt * c2 * wx[1], wt * c2 * wx[2]);
                    for y in x..ld {
                        row[y] += ux * u[y] + a0 * wv[3 * y] + a1 * wv[3 * y + 1] + a2 * wv[3 * y + 2];
                    }
                }
            }
        }
        for x in 0..ld {
            for y in 0..x {
                buf[x * ld + y] = buf[y * ld + x];
            }
        }
    })
}

/// Full dissipative form for the given lagged director.
pub fn dissipative_matrix(space: &FESpace, assembler: &VectorAssembler, params: &Params, d_lag: &[f64]) -> SparseMatrix {
    let v = viscous_matrix(space, assembler, params);
    let a = anisotropic_matrix(space, assembler, params, d_lag);
    v.add_scaled(1.0, &a, 1.0).expect("same shape")
}
