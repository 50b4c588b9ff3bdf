//! Linearized momentum equation as a Taylor-Hood saddle system.

use std::sync::Arc;

use crate::fespace::FESpace;
use crate::operators::forms::{self, VectorAssembler};
use crate::operators::leslie;
use crate::operators::params::Params;
use crate::sparsela::{BlockSaddleSystem, SolveError, SparseMatrix};

/// Lagged data entering the momentum equation.
pub struct MomentumInputs<'a> {
    /// Velocity at the previous time level (advecting field and time derivative).
    pub v_prev: &'a [f64],
    /// Director evaluated in the dissipative form (previous fixed-point iterate).
    pub d_lag: &'a [f64],
    /// Lagged midpoint director.
    pub d_half: &'a [f64],
    /// Discrete Laplacian of the lagged midpoint.
    pub lap_half: &'a [f64],
    /// Recovered gradient of the director at the previous time level.
    pub grad_prev: &'a [f64],
}

/// Director-independent matrices of the momentum equation, assembled once.
#[derive(Debug)]
pub struct MomentumOperators {
    pub velocity: Arc<FESpace>,
    pub pressure: Arc<FESpace>,
    pub assembler: VectorAssembler,
    pub mass: SparseMatrix,
    pub viscous: SparseMatrix,
    pub divergence: SparseMatrix,
    pub mean: Vec<f64>,
    boundary_dofs: Vec<usize>,
}

impl MomentumOperators {
    pub fn new(velocity: Arc<FESpace>, pressure: Arc<FESpace>, params: &Params) -> Self {
        let assembler = VectorAssembler::new(&velocity);
        let mass = forms::mass_matrix(&velocity);
        let viscous = forms::viscous_matrix(&velocity, &assembler, params);
        let divergence = forms::divergence_matrix(&velocity, &pressure);
        let mean = forms::pressure_mean_weights(&pressure);
        let boundary_dofs = velocity.boundary_dofs();
        Self { velocity, pressure, assembler, mass, viscous, divergence, mean, boundary_dofs }
    }

    pub fn convection(&self, v_prev: &[f64]) -> SparseMatrix {
        forms::convection_matrix(&self.velocity, &self.assembler, v_prev)
    }

    /// Full dissipative form `T_D(d_lag; ., .)`.
    pub fn dissipative(&self, params: &Params, d_lag: &[f64]) -> SparseMatrix {
        let aniso = forms::anisotropic_matrix(&self.velocity, &self.assembler, params, d_lag);
        self.viscous.add_scaled(1.0, &aniso, 1.0).expect("same shape")
    }

    /// Velocity block `(1/k) M + C(v_prev) + T_D(d_lag)` before boundary conditions.
    pub fn velocity_block(&self, convection: &SparseMatrix, params: &Params, d_lag: &[f64]) -> SparseMatrix {
        let td = self.dissipative(params, d_lag);
        self.mass
            .add_scaled(1.0 / params.k, convection, 1.0)
            .and_then(|m| m.add_scaled(1.0, &td, 1.0))
            .expect("same shape")
    }

    /// Right-hand side `(1/k) M v_prev + v_el A F_E - F_L`.
    pub fn rhs(&self, inputs: &MomentumInputs<'_>, params: &Params) -> Vec<f64> {
        let mv = self.mass.matvec(inputs.v_prev);
        let fe = leslie::ericksen_force(&self.velocity, inputs.grad_prev, inputs.d_half, inputs.lap_half);
        let fl = leslie::leslie_elastic_rhs(&self.velocity, inputs.d_half, inputs.lap_half, params);
        let s = params.v_el * params.a;
        mv.iter()
            .zip(&fe)
            .zip(&fl)
            .map(|((m, e), l)| m / params.k + s * e - l)
            .collect()
    }

    /// Saddle system with the boundary dofs fixed to `boundary_values`
    /// (a full velocity vector; only its boundary entries are used).
    pub fn system(
        &self,
        convection: &SparseMatrix,
        inputs: &MomentumInputs<'_>,
        params: &Params,
        boundary_values: &[f64],
    ) -> Result<BlockSaddleSystem, SolveError> {
        let a = self.velocity_block(convection, params, inputs.d_lag);
        let rhs = self.rhs(inputs, params);
        self.constrain(&a, &rhs, boundary_values)
    }

    pub fn constrain(&self, a: &SparseMatrix, rhs: &[f64], boundary_values: &[f64]) -> Result<BlockSaddleSystem, SolveError> {
        let mut fixed = vec![None; a.nrows()];
        for &d in &self.boundary_dofs {
            fixed[d] = Some(boundary_values[d]);
        }
        let (a, rhs_u, b, rhs_p) = forms::eliminate_dirichlet(a, rhs, &self.divergence, &fixed)?;
        Ok(BlockSaddleSystem { a, b, mean_constraint: Some(self.mean.clone()), rhs_primal: rhs_u, rhs_constraint: rhs_p })
    }
}

/// One-shot assembly of the momentum saddle system.
pub fn momentum_system(
    velocity: &Arc<FESpace>,
    pressure: &Arc<FESpace>,
    inputs: &MomentumInputs<'_>,
    params: &Params,
    boundary_values: &[f64],
) -> Result<BlockSaddleSystem, SolveError> {
    let ops = MomentumOperators::new(velocity.clone(), pressure.clone(), params);
    let conv = ops.convection(inputs.v_prev);
    ops.system(&conv, inputs, params, boundary_values)
}
