//! Single-step collocation problems with a mass matrix and spectral deferred
//! correction sweeps, plus serial SDC time stepping.

use std::sync::Arc;

use thiserror::Error;

use crate::collocation::CollocationTable;
use crate::fem::{Reaction, SpatialOperators};
use crate::numerics::{newton_solve, norm_inf, NewtonOptions, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdcError {
    #[error("node solve {node} failed: {source}")]
    NodeSolve { node: usize, source: NumericsError },
    #[error("collocation residual {residual:e} above tolerance after {sweeps} sweeps")]
    NotConverged { sweeps: usize, residual: f64 },
}

/// How the semi-discrete system `M u' = f(u)` enters the collocation problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// `(I ⊗ M − Δt (Q ⊗ I) f)(u) = (I ⊗ M) u0`
    #[default]
    Mass,
    /// Left-multiplied by `M⁻¹`: `(I − Δt (Q ⊗ I) M⁻¹f)(u) = u0`.
    MassInverted,
}

/// Values at the `M` collocation nodes of one step, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVector {
    n_nodes: usize,
    n_dofs: usize,
    data: Vec<f64>,
}

impl NodeVector {
    pub fn zeros(n_nodes: usize, n_dofs: usize) -> Self {
        Self { n_nodes, n_dofs, data: vec![0.0; n_nodes * n_dofs] }
    }

    /// Copies `u0` into every node.
    pub fn spread(u0: &[f64], n_nodes: usize) -> Self {
        Self { n_nodes, n_dofs: u0.len(), data: u0.repeat(n_nodes) }
    }

    pub fn from_nodes(nodes: &[Vec<f64>]) -> Self {
        let n_dofs = nodes.first().map_or(0, Vec::len);
        assert!(nodes.iter().all(|v| v.len() == n_dofs), "ragged node values");
        Self { n_nodes: nodes.len(), n_dofs, data: nodes.concat() }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn node(&self, m: usize) -> &[f64] {
        &self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn node_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.n_dofs..(m + 1) * self.n_dofs]
    }

    pub fn last_node(&self) -> &[f64] {
        self.node(self.n_nodes - 1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.data)
    }

    /// Applies `op` to every node.
    pub fn map_nodes(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> NodeVector {
        let nodes: Vec<Vec<f64>> = (0..self.n_nodes).map(|m| op(self.node(m))).collect();
        NodeVector::from_nodes(&nodes)
    }

    pub fn axpy(&mut self, alpha: f64, x: &NodeVector) {
        assert_eq!(self.data.len(), x.data.len());
        crate::numerics::axpy(alpha, &x.data, &mut self.data);
    }

    pub fn sub(&self, other: &NodeVector) -> NodeVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// Sweep count control for [`StepProblem::solve_collocation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Fixed(usize),
    /// Sweep until the collocation residual is at most `tol` (∞-norm) or a
    /// sweep changes the iterate only at rounding level.
    Tolerance { tol: f64, max_sweeps: usize },
}

impl SweepMode {
    pub fn tolerance(tol: f64) -> Self {
        SweepMode::Tolerance { tol, max_sweeps: 100 }
    }
}

/// One time step of size `dt`: spatial operators, reaction, collocation table
/// and formulation.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub ops: Arc<SpatialOperators>,
    pub reaction: Reaction,
    pub table: Arc<CollocationTable>,
    pub dt: f64,
    pub formulation: Formulation,
    pub newton: NewtonOptions,
}

impl StepProblem {
    pub fn new(
        ops: Arc<SpatialOperators>,
        reaction: Reaction,
        table: Arc<CollocationTable>,
        dt: f64,
        formulation: Formulation,
    ) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        Self { ops, reaction, table, dt, formulation, newton: NewtonOptions::default() }
    }

    pub fn with_newton(mut self, newton: NewtonOptions) -> Self {
        self.newton = newton;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.table.num_nodes()
    }

    pub fn n_dofs(&self) -> usize {
        self.ops.n_dofs()
    }

    /// Right-hand side of the formulation: `f(u)` or `M⁻¹ f(u)`.
    pub fn rhs(&self, u: &[f64]) -> Vec<f64> {
        let f = self.ops.apply_f(&self.reaction, u);
        match self.formulation {
            Formulation::Mass => f,
            Formulation::MassInverted => self.ops.solve_mass(&f),
        }
    }

    /// Operator in front of the unknowns: `M u` or `u`.
    pub fn lhs(&self, u: &[f64]) -> Vec<f64> {
        match self.formulation {
            Formulation::Mass => self.ops.apply_lhs_mass(u),
            Formulation::MassInverted => u.to_vec(),
        }
    }

    pub fn rhs_nodes(&self, u: &NodeVector) -> NodeVector {
        u.map_nodes(|v| self.rhs(v))
    }

    /// `r_m = lhs(u_m) − Δt Σ_j q_mj rhs(u_j) − lhs(u0)`
    pub fn collocation_residual(&self, u: &NodeVector, u0: &[f64]) -> NodeVector {
        let f = self.rhs_nodes(u);
        self.residual_with_rhs(u, &f, u0)
    }

    fn residual_with_rhs(&self, u: &NodeVector, f: &NodeVector, u0: &[f64]) -> NodeVector {
        let lhs0 = self.lhs(u0);
        let q = &self.table.q;
        let mut r = u.map_nodes(|v| self.lhs(v));
        for m in 0..self.n_nodes() {
            let rm = r.node_mut(m);
            for (ri, l0) in rm.iter_mut().zip(&lhs0) {
                *ri -= l0;
            }
            for j in 0..self.n_nodes() {
                crate::numerics::axpy(-self.dt * q[(m, j)], f.node(j), rm);
            }
        }
        r
    }

    /// One backward-Euler SDC sweep starting from `u_k` with initial value `u0`.
    pub fn sdc_sweep(&self, u_k: &NodeVector, u0: &[f64]) -> Result<NodeVector, SdcError> {
        self.sweep_with_correction(u_k, u0, None)
    }

    /// SDC sweep with an additional node-wise right-hand-side term (the FAS
    /// correction on coarse levels). Solves, for `m = 1..M` in order,
    /// `lhs(u_m) − Δt Δτ_m rhs(u_m) = lhs(u0) + Δt Σ_{j<m} QΔ_mj rhs(u_j^{new})
    ///   + Δt Σ_j (Q − QΔ)_mj rhs(u_j^k) + τ_m`.
    pub fn sweep_with_correction(
        &self,
        u_k: &NodeVector,
        u0: &[f64],
        correction: Option<&NodeVector>,
    ) -> Result<NodeVector, SdcError> {
        let n_nodes = self.n_nodes();
        let n = self.n_dofs();
        let (q, qd) = (&self.table.q, &self.table.qdelta);
        let f_old = self.rhs_nodes(u_k);
        let lhs0 = self.lhs(u0);
        let mut u_new = u_k.clone();
        let mut f_new = NodeVector::zeros(n_nodes, n);
        for m in 0..n_nodes {
            let mut rhs = lhs0.clone();
            for j in 0..n_nodes {
                let w = q[(m, j)] - qd[(m, j)];
                if w != 0.0 {
                    crate::numerics::axpy(self.dt * w, f_old.node(j), &mut rhs);
                }
            }
            for j in 0..m {
                crate::numerics::axpy(self.dt * qd[(m, j)], f_new.node(j), &mut rhs);
            }
            if let Some(tau) = correction {
                crate::numerics::axpy(1.0, tau.node(m), &mut rhs);
            }
            let c = self.dt * qd[(m, m)];
            let solution = self.solve_node(c, &rhs, u_k.node(m)).map_err(|source| SdcError::NodeSolve { node: m, source })?;
            f_new.node_mut(m).copy_from_slice(&self.rhs(&solution));
            u_new.node_mut(m).copy_from_slice(&solution);
        }
        Ok(u_new)
    }

    /// Solves `lhs(u) − c rhs(u) = b` by Newton. The mass-inverted form is
    /// solved as the equivalent banded system `M u − c f(u) = M b`.
    fn solve_node(&self, c: f64, b: &[f64], start: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let ops = &self.ops;
        let scaled_b = match self.formulation {
            Formulation::Mass => b.to_vec(),
            Formulation::MassInverted => ops.apply_lhs_mass(b),
        };
        newton_solve(
            |u, r| {
                let mu = ops.apply_lhs_mass(u);
                let f = ops.apply_f(&self.reaction, u);
                for i in 0..r.len() {
                    r[i] = mu[i] - c * f[i] - scaled_b[i];
                }
            },
            |u| ops.lhs_mass().linear_combination(1.0, &ops.jacobian_f(&self.reaction, u), -c),
            start,
            self.newton,
        )
    }

    /// Iterates SDC from the spread initial value.
    pub fn solve_collocation(&self, u0: &[f64], mode: SweepMode) -> Result<NodeVector, SdcError> {
        let mut u = NodeVector::spread(u0, self.n_nodes());
        match mode {
            SweepMode::Fixed(k) => {
                for _ in 0..k {
                    u = self.sdc_sweep(&u, u0)?;
                }
                Ok(u)
            }
            SweepMode::Tolerance { tol, max_sweeps } => {
                let mut residual = self.collocation_residual(&u, u0).norm_inf();
                for _ in 0..max_sweeps {
                    if residual <= tol {
                        return Ok(u);
                    }
                    let next = self.sdc_sweep(&u, u0)?;
                    let change = next.sub(&u).norm_inf();
                    u = next;
                    residual = self.collocation_residual(&u, u0).norm_inf();
                    // sweeps that only move rounding noise have reached the floor
                    if change <= 4.0 * f64::EPSILON * u.norm_inf().max(1.0) {
                        return Ok(u);
                    }
                }
                if residual <= tol {
                    Ok(u)
                } else {
                    Err(SdcError::NotConverged { sweeps: max_sweeps, residual })
                }
            }
        }
    }

    /// Marches `n_steps` steps, handing the last-node value to the next step.
    pub fn run_serial(&self, u_initial: &[f64], n_steps: usize, mode: SweepMode) -> Result<Vec<f64>, SdcError> {
        assert!(n_steps >= 1, "need at least one step");
        let mut u = u_initial.to_vec();
        for _ in 0..n_steps {
            u = self.solve_collocation(&u, mode)?.last_node().to_vec();
        }
        Ok(u)
    }
}

/// Serial SDC with a fixed number of sweeps per step.
pub fn run_sdc_serial(p: &StepProblem, u_initial: &[f64], n_steps: usize, k_iters: usize) -> Result<Vec<f64>, SdcError> {
    p.run_serial(u_initial, n_steps, SweepMode::Fixed(k_iters))
}
