//! Composite collocation problems over `L` coupled steps and the two-level
//! PFASST iteration with FAS corrections between nested spaces.
//!
//! The coupling block `H = N ⊗ M` of the composite operator is never formed:
//! step `l` simply takes the last-node value of step `l − 1` as its initial
//! value, which is the same thing.

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{build_injection, build_interp_restriction, FemError};
use crate::numerics::SparseMatrix;
use crate::sdc::{Formulation, NodeVector, SdcError, StepProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fine,
    Coarse,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Fine => "fine",
            Level::Coarse => "coarse",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfasstError {
    #[error("{level} sweep failed on step {step}: {source}")]
    Sweep { level: Level, step: usize, source: SdcError },
    #[error("{n_steps} steps cannot be split into blocks of {block}")]
    NotDivisible { n_steps: usize, block: usize },
    #[error("composite residual {residual:e} above tolerance after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("inconsistent hierarchy: {0}")]
    Hierarchy(String),
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Values of `L` steps at `M` nodes, step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    steps: Vec<NodeVector>,
}

impl BlockState {
    pub fn new(steps: Vec<NodeVector>) -> Self {
        Self { steps }
    }

    /// Every node of every step set to `u0`.
    pub fn spread(u0: &[f64], n_steps: usize, n_nodes: usize) -> Self {
        Self { steps: vec![NodeVector::spread(u0, n_nodes); n_steps] }
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, l: usize) -> &NodeVector {
        &self.steps[l]
    }

    pub fn step_mut(&mut self, l: usize) -> &mut NodeVector {
        &mut self.steps[l]
    }

    pub fn steps(&self) -> &[NodeVector] {
        &self.steps
    }

    /// Value at the last node of the last step.
    pub fn final_value(&self) -> &[f64] {
        self.steps.last().expect("empty block").last_node()
    }

    pub fn norm_inf(&self) -> f64 {
        self.steps.iter().map(NodeVector::norm_inf).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &BlockState) -> BlockState {
        BlockState::new(self.steps.iter().zip(&other.steps).map(|(a, b)| a.sub(b)).collect())
    }

    /// Applies a spatial operator to every node of every step.
    pub fn map_nodes(&self, op: impl Fn(&[f64]) -> Vec<f64>) -> BlockState {
        BlockState::new(self.steps.iter().map(|s| s.map_nodes(&op)).collect())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|s| s.as_slice().iter().copied()).collect()
    }
}

/// The composite collocation operator of `L` steps on one level.
#[derive(Debug, Clone)]
pub struct CompositeOperator {
    pub problem: StepProblem,
    pub n_steps: usize,
}

impl CompositeOperator {
    pub fn new(problem: StepProblem, n_steps: usize) -> Self {
        assert!(n_steps >= 1);
        Self { problem, n_steps }
    }

    fn initial_value<'a>(&self, u: &'a BlockState, u00: &'a [f64], l: usize) -> &'a [f64] {
        if l == 0 {
            u00
        } else {
            u.step(l - 1).last_node()
        }
    }

    /// Residual of the composite problem, `b` included: step `l` uses the last
    /// node of step `l − 1` (or `u00`) as its initial value.
    pub fn composite_residual(&self, u: &BlockState, u00: &[f64]) -> BlockState {
        BlockState::new(
            (0..self.n_steps)
                .map(|l| self.problem.collocation_residual(u.step(l), self.initial_value(u, u00, l)))
                .collect(),
        )
    }

    fn sweep_step(
        &self,
        level: Level,
        l: usize,
        u: &NodeVector,
        u0: &[f64],
        correction: Option<&BlockState>,
    ) -> Result<NodeVector, PfasstError> {
        self.problem
            .sweep_with_correction(u, u0, correction.map(|c| c.step(l)))
            .map_err(|source| PfasstError::Sweep { level, step: l, source })
    }

    /// One SDC sweep on every step at once. Initial values come from the
    /// input block, so steps are independent and run on the rayon pool.
    pub fn sweep_parallel(
        &self,
        level: Level,
        u: &BlockState,
        u00: &[f64],
        correction: Option<&BlockState>,
    ) -> Result<BlockState, PfasstError> {
        let steps = (0..self.n_steps)
            .into_par_iter()
            .map(|l| self.sweep_step(level, l, u.step(l), self.initial_value(u, u00, l), correction))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BlockState::new(steps))
    }

    /// Same as [`Self::sweep_parallel`] but visits the steps serially in the
    /// given order.
    pub fn sweep_parallel_in_order(
        &self,
        level: Level,
        u: &BlockState,
        u00: &[f64],
        correction: Option<&BlockState>,
        order: &[usize],
    ) -> Result<BlockState, PfasstError> {
        let mut out: Vec<Option<NodeVector>> = vec![None; self.n_steps];
        for &l in order {
            out[l] = Some(self.sweep_step(level, l, u.step(l), self.initial_value(u, u00, l), correction)?);
        }
        let steps = out.into_iter().map(|s| s.expect("order must visit every step")).collect();
        Ok(BlockState::new(steps))
    }

    /// One SDC sweep propagated forward: step `l` starts from the freshly
    /// updated last node of step `l − 1`.
    pub fn sweep_sequential(
        &self,
        level: Level,
        u: &BlockState,
        u00: &[f64],
        correction: Option<&BlockState>,
    ) -> Result<BlockState, PfasstError> {
        let mut steps: Vec<NodeVector> = Vec::with_capacity(self.n_steps);
        for l in 0..self.n_steps {
            let u0 = if l == 0 { u00 } else { steps[l - 1].last_node() };
            let next = self.sweep_step(level, l, u.step(l), u0, correction)?;
            steps.push(next);
        }
        Ok(BlockState::new(steps))
    }
}

/// Fine and coarse composite operators sharing `L`, the collocation table and
/// `Δt`, with spatial transfer between them.
#[derive(Debug, Clone)]
pub struct TwoLevelHierarchy {
    pub fine: CompositeOperator,
    pub coarse: CompositeOperator,
    /// `T^N`: coarse coefficients to fine coefficients.
    pub injection: SparseMatrix,
    /// `R^N`: fine coefficients to coarse coefficients by interpolation.
    pub restriction: SparseMatrix,
}

impl TwoLevelHierarchy {
    /// Builds the transfer operators from the spaces attached to both levels.
    pub fn new(fine: StepProblem, coarse: StepProblem, n_steps: usize) -> Result<Self, PfasstError> {
        let (fs, cs) = match (fine.ops.space(), coarse.ops.space()) {
            (Some(f), Some(c)) => (*f, *c),
            _ => return Err(PfasstError::Hierarchy("both levels need a finite-element space".into())),
        };
        let injection = build_injection(&cs, &fs)?;
        let restriction = build_interp_restriction(&fs, &cs)?;
        Self::with_transfer(fine, coarse, n_steps, injection, restriction)
    }

    pub fn with_transfer(
        fine: StepProblem,
        coarse: StepProblem,
        n_steps: usize,
        injection: SparseMatrix,
        restriction: SparseMatrix,
    ) -> Result<Self, PfasstError> {
        if fine.table != coarse.table {
            return Err(PfasstError::Hierarchy("levels must share the collocation table".into()));
        }
        if fine.dt != coarse.dt || fine.formulation != coarse.formulation {
            return Err(PfasstError::Hierarchy("levels must share dt and formulation".into()));
        }
        let (nf, nc) = (fine.n_dofs(), coarse.n_dofs());
        if injection.rows() != nf || injection.cols() != nc || restriction.rows() != nc || restriction.cols() != nf {
            return Err(PfasstError::Hierarchy("transfer operator shapes do not match the levels".into()));
        }
        Ok(Self {
            fine: CompositeOperator::new(fine, n_steps),
            coarse: CompositeOperator::new(coarse, n_steps),
            injection,
            restriction,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.fine.n_steps
    }

    pub fn formulation(&self) -> Formulation {
        self.fine.problem.formulation
    }

    /// `R = I_{LM} ⊗ R^N`
    pub fn restrict_state(&self, u: &BlockState) -> BlockState {
        u.map_nodes(|v| self.restriction.matvec(v))
    }

    /// `T = I_{LM} ⊗ T^N`
    pub fn prolong(&self, u: &BlockState) -> BlockState {
        u.map_nodes(|v| self.injection.matvec(v))
    }

    /// Residuals of the mass formulation live in the dual space and are
    /// restricted with `(T^N)ᵀ`; mass-inverted residuals are primal objects
    /// and go through the interpolation `R^N`.
    ///
    /// Rows of coarse dofs held fixed by the boundary mode are zeroed.
    pub fn restrict_residual(&self, r: &BlockState) -> BlockState {
        let constrained = self.coarse.problem.ops.constrained_dofs();
        r.map_nodes(|v| {
            let mut out = match self.formulation() {
                Formulation::Mass => self.injection.matvec_transpose(v),
                Formulation::MassInverted => self.restriction.matvec(v),
            };
            for &i in constrained {
                out[i] = 0.0;
            }
            out
        })
    }

    /// FAS correction `τ = C̃(R u) − restrict(C(u))`, both residuals taken
    /// with their own right-hand sides (`R u00` on the coarse level).
    pub fn fas_tau(&self, u_fine: &BlockState, u00: &[f64]) -> BlockState {
        let coarse_state = self.restrict_state(u_fine);
        let coarse_u00 = self.restriction.matvec(u00);
        self.fas_tau_with(u_fine, &coarse_state, u00, &coarse_u00)
    }

    fn fas_tau_with(&self, u_fine: &BlockState, coarse_state: &BlockState, u00: &[f64], coarse_u00: &[f64]) -> BlockState {
        let coarse_res = self.coarse.composite_residual(coarse_state, coarse_u00);
        let fine_res = self.restrict_residual(&self.fine.composite_residual(u_fine, u00));
        coarse_res.sub(&fine_res)
    }

    /// One PFASST iteration: restrict, FAS correction, sequential coarse
    /// sweep, coarse-grid correction, parallel fine sweep.
    pub fn pfasst_iteration(&self, u: &BlockState, u00: &[f64]) -> Result<BlockState, PfasstError> {
        let u_half = self.coarse_correction(u, u00)?;
        self.fine.sweep_parallel(Level::Fine, &u_half, u00, None)
    }

    /// Steps 1–4 of the iteration; returns `u + T(ũ⁺ − R u)`.
    pub fn coarse_correction(&self, u: &BlockState, u00: &[f64]) -> Result<BlockState, PfasstError> {
        let coarse_state = self.restrict_state(u);
        let coarse_u00 = self.restriction.matvec(u00);
        let tau = self.fas_tau_with(u, &coarse_state, u00, &coarse_u00);
        let coarse_new = self.coarse.sweep_sequential(Level::Coarse, &coarse_state, &coarse_u00, Some(&tau))?;
        let delta = self.prolong(&coarse_new.sub(&coarse_state));
        let mut out = u.clone();
        for l in 0..out.n_steps() {
            out.step_mut(l).axpy(1.0, delta.step(l));
        }
        Ok(out)
    }

    /// Iterates on one block from `u` until the fine composite residual is at
    /// most `tol`. Returns the block and the number of iterations used.
    pub fn iterate_to_tolerance(
        &self,
        mut u: BlockState,
        u00: &[f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<(BlockState, usize), PfasstError> {
        let mut residual = self.fine.composite_residual(&u, u00).norm_inf();
        for it in 0..max_iters {
            if residual <= tol {
                return Ok((u, it));
            }
            u = self.pfasst_iteration(&u, u00)?;
            residual = self.fine.composite_residual(&u, u00).norm_inf();
        }
        if residual <= tol {
            Ok((u, max_iters))
        } else {
            Err(PfasstError::NotConverged { iterations: max_iters, residual })
        }
    }

    /// Windowed PFASST over `n_steps` steps: each block of `L` steps starts
    /// from the spread final value of the previous block and runs exactly
    /// `k_iters` iterations.
    pub fn run(&self, u_initial: &[f64], n_steps: usize, k_iters: usize) -> Result<Vec<f64>, PfasstError> {
        let block = self.n_steps();
        if n_steps == 0 || n_steps % block != 0 {
            return Err(PfasstError::NotDivisible { n_steps, block });
        }
        let n_nodes = self.fine.problem.n_nodes();
        let mut u00 = u_initial.to_vec();
        for _ in 0..n_steps / block {
            let mut u = BlockState::spread(&u00, block, n_nodes);
            for _ in 0..k_iters {
                u = self.pfasst_iteration(&u, &u00)?;
            }
            u00 = u.final_value().to_vec();
        }
        Ok(u00)
    }
}

pub fn run_pfasst(h: &TwoLevelHierarchy, u_initial: &[f64], n_steps: usize, k_iters: usize) -> Result<Vec<f64>, PfasstError> {
    h.run(u_initial, n_steps, k_iters)
}
