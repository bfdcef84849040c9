//! One-dimensional Lagrange finite elements: spaces, assembled operators,
//! the interpolated nonlinearity and transfer between nested spaces.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::collocation::legendre;
use crate::numerics::{BandedLu, BandedMatrix, NumericsError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("unsupported element order {0} (expected 1, 2 or 3)")]
    UnsupportedOrder(usize),
    #[error("spaces are not nested: {0}")]
    NotNested(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Uniform mesh of `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n_elements: usize,
}

impl Mesh1D {
    pub fn uniform(a: f64, b: f64, n_elements: usize) -> Result<Self, FemError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(FemError::InvalidMesh(format!("need a < b, got [{a}, {b}]")));
        }
        if n_elements == 0 {
            return Err(FemError::InvalidMesh("need at least one element".into()));
        }
        Ok(Self { a, b, n_elements })
    }

    pub fn left(&self) -> f64 {
        self.a
    }

    pub fn right(&self) -> f64 {
        self.b
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_elements as f64
    }

    pub fn vertex(&self, i: usize) -> f64 {
        if i == self.n_elements {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    /// Halves the element count; only defined for even meshes.
    pub fn coarsened(&self) -> Result<Self, FemError> {
        if self.n_elements % 2 != 0 {
            return Err(FemError::InvalidMesh(format!(
                "cannot halve an odd element count {}",
                self.n_elements
            )));
        }
        Self::uniform(self.a, self.b, self.n_elements / 2)
    }
}

/// Lagrange basis of order `p` on `[0, 1]` with equispaced nodes `k/p`.
fn local_basis(order: usize, xi: f64) -> Vec<f64> {
    let nodes: Vec<f64> = (0..=order).map(|k| k as f64 / order as f64).collect();
    if let Some(k) = nodes.iter().position(|&n| (n - xi).abs() < 1e-12) {
        let mut v = vec![0.0; order + 1];
        v[k] = 1.0;
        return v;
    }
    (0..=order)
        .map(|k| {
            nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, &nj)| (xi - nj) / (nodes[k] - nj))
                .product()
        })
        .collect()
}

/// Derivatives with respect to the local coordinate.
fn local_basis_derivative(order: usize, xi: f64) -> Vec<f64> {
    let nodes: Vec<f64> = (0..=order).map(|k| k as f64 / order as f64).collect();
    (0..=order)
        .map(|k| {
            let mut total = 0.0;
            for skip in 0..=order {
                if skip == k {
                    continue;
                }
                let mut term = 1.0 / (nodes[k] - nodes[skip]);
                for j in 0..=order {
                    if j != k && j != skip {
                        term *= (xi - nodes[j]) / (nodes[k] - nodes[j]);
                    }
                }
                total += term;
            }
            total
        })
        .collect()
}

/// Gauss–Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let p = legendre(n, x);
            dp = n as f64 * (x * p - legendre(n - 1, x)) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points.push(0.5 * (x + 1.0));
        weights.push(0.5 * w);
    }
    (points, weights)
}

/// Continuous Lagrange space of order 1–3 on a uniform mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeSpace {
    mesh: Mesh1D,
    order: usize,
}

impl LagrangeSpace {
    pub fn new(mesh: Mesh1D, order: usize) -> Result<Self, FemError> {
        if !(1..=3).contains(&order) {
            return Err(FemError::UnsupportedOrder(order));
        }
        Ok(Self { mesh, order })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_dofs(&self) -> usize {
        self.order * self.mesh.n_elements + 1
    }

    pub fn dof_coordinate(&self, i: usize) -> f64 {
        let (e, k) = (i / self.order, i % self.order);
        if e == self.mesh.n_elements {
            return self.mesh.b;
        }
        self.mesh.vertex(e) + k as f64 * self.mesh.h() / self.order as f64
    }

    pub fn dof_coordinates(&self) -> Vec<f64> {
        (0..self.n_dofs()).map(|i| self.dof_coordinate(i)).collect()
    }

    /// Global dof indices of element `e`, left to right.
    pub fn element_dofs(&self, e: usize) -> impl Iterator<Item = usize> {
        let first = e * self.order;
        first..=first + self.order
    }

    /// Nonzero basis values `(dof, φ_dof(x))` at a point of the domain.
    pub fn basis_at(&self, x: f64) -> Vec<(usize, f64)> {
        let h = self.mesh.h();
        let s = ((x - self.mesh.a) / h).max(0.0);
        let e = (s.floor() as usize).min(self.mesh.n_elements - 1);
        let xi = ((x - self.mesh.vertex(e)) / h).clamp(0.0, 1.0);
        self.element_dofs(e).zip(local_basis(self.order, xi)).filter(|(_, v)| *v != 0.0).collect()
    }

    /// Evaluates the finite-element function with coefficients `u` at `x`.
    pub fn evaluate(&self, u: &[f64], x: f64) -> f64 {
        self.basis_at(x).into_iter().map(|(i, v)| v * u[i]).sum()
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.dof_coordinates().into_iter().map(f).collect()
    }

    fn empty_operator(&self) -> BandedMatrix {
        BandedMatrix::zeros(self.n_dofs(), self.order, self.order)
    }

    fn assemble(&self, kernel: impl Fn(f64, f64, f64, f64, f64) -> f64) -> BandedMatrix {
        let p = self.order;
        let h = self.mesh.h();
        let (qp, qw) = gauss_legendre(p + 1);
        let phi: Vec<Vec<f64>> = qp.iter().map(|&x| local_basis(p, x)).collect();
        let dphi: Vec<Vec<f64>> = qp.iter().map(|&x| local_basis_derivative(p, x)).collect();
        let mut local = vec![vec![0.0; p + 1]; p + 1];
        for (a, row) in local.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                *entry = (0..qp.len())
                    .map(|q| qw[q] * kernel(phi[q][a], phi[q][b], dphi[q][a], dphi[q][b], h))
                    .sum();
            }
        }
        let mut m = self.empty_operator();
        for e in 0..self.mesh.n_elements {
            let dofs: Vec<usize> = self.element_dofs(e).collect();
            for (a, &i) in dofs.iter().enumerate() {
                for (b, &j) in dofs.iter().enumerate() {
                    m.add(i, j, local[a][b]);
                }
            }
        }
        m
    }
}

impl fmt::Display for LagrangeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}/{} on [{}, {}]", self.order, self.mesh.n_elements, self.mesh.a, self.mesh.b)
    }
}

/// `M_ij = ∫ φ_i φ_j dx`
pub fn assemble_mass(space: &LagrangeSpace) -> BandedMatrix {
    space.assemble(|pa, pb, _, _, h| pa * pb * h)
}

/// `A_ij = ∫ φ_i' φ_j' dx`
pub fn assemble_stiffness(space: &LagrangeSpace) -> BandedMatrix {
    space.assemble(|_, _, da, db, h| da * db / h)
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A pointwise reaction term together with its derivative.
#[derive(Clone)]
pub struct Reaction {
    pub g: ScalarFn,
    pub dg: ScalarFn,
}

impl Reaction {
    pub fn new(g: impl Fn(f64) -> f64 + Send + Sync + 'static, dg: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { g: Arc::new(g), dg: Arc::new(dg) }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0)
    }

    pub fn linear(lambda: f64) -> Self {
        Self::new(move |v| lambda * v, move |_| lambda)
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reaction").finish_non_exhaustive()
    }
}

/// Coefficients of the interpolated nonlinearity: `(g(u_1), ..., g(u_N))`.
pub fn nodal_nonlinearity(g: &ScalarFn, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&v| g(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BcMode {
    /// Pure weak form (homogeneous Neumann).
    #[default]
    Natural,
    /// Boundary dofs keep their initial values.
    DirichletFrozen,
}

/// Assembled mass and stiffness matrices of one space, plus what is needed
/// to evaluate `f(u) = -A u + M g(u)` and its Jacobian.
#[derive(Debug, Clone)]
pub struct SpatialOperators {
    space: Option<LagrangeSpace>,
    bc: BcMode,
    mass: BandedMatrix,
    stiffness: BandedMatrix,
    // time-derivative operator: the mass matrix with identity rows at constrained dofs
    lhs_mass: BandedMatrix,
    lhs_mass_lu: BandedLu,
    constrained: Vec<usize>,
}

impl SpatialOperators {
    pub fn new(space: LagrangeSpace, bc: BcMode) -> Result<Self, FemError> {
        let mut ops = Self::from_matrices(assemble_mass(&space), assemble_stiffness(&space), bc)?;
        ops.space = Some(space);
        Ok(ops)
    }

    /// Operators of a plain ODE system `M u' = -A u + M g(u)` without an
    /// underlying finite-element space.
    pub fn from_matrices(mass: BandedMatrix, stiffness: BandedMatrix, bc: BcMode) -> Result<Self, FemError> {
        if mass.dim() != stiffness.dim() {
            return Err(NumericsError::DimensionMismatch { expected: mass.dim(), got: stiffness.dim() }.into());
        }
        let n = mass.dim();
        let constrained = match bc {
            BcMode::Natural => Vec::new(),
            BcMode::DirichletFrozen => {
                if n == 1 { vec![0] } else { vec![0, n - 1] }
            }
        };
        let mut lhs_mass = mass.clone();
        for &i in &constrained {
            lhs_mass.set_identity_row(i);
        }
        let lhs_mass_lu = lhs_mass.lu()?;
        Ok(Self { space: None, bc, mass, stiffness, lhs_mass, lhs_mass_lu, constrained })
    }

    pub fn space(&self) -> Option<&LagrangeSpace> {
        self.space.as_ref()
    }

    pub fn bc_mode(&self) -> BcMode {
        self.bc
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &BandedMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &BandedMatrix {
        &self.stiffness
    }

    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    /// The operator multiplying the time derivative. Equals the mass matrix
    /// under natural conditions.
    pub fn lhs_mass(&self) -> &BandedMatrix {
        &self.lhs_mass
    }

    pub fn apply_lhs_mass(&self, u: &[f64]) -> Vec<f64> {
        self.lhs_mass.matvec(u)
    }

    /// Applies the inverse of [`Self::lhs_mass`] through the stored factorization.
    pub fn solve_mass(&self, b: &[f64]) -> Vec<f64> {
        self.lhs_mass_lu.solve(b)
    }

    /// `f(u) = -A u + M g(u)`, constrained rows set to zero.
    pub fn apply_f(&self, reaction: &Reaction, u: &[f64]) -> Vec<f64> {
        let gu = nodal_nonlinearity(&reaction.g, u);
        let mut out = self.mass.matvec(&gu);
        let au = self.stiffness.matvec(u);
        for (o, a) in out.iter_mut().zip(&au) {
            *o -= a;
        }
        for &i in &self.constrained {
            out[i] = 0.0;
        }
        out
    }

    /// `∂f/∂u = -A + M diag(g'(u))`, constrained rows set to zero.
    pub fn jacobian_f(&self, reaction: &Reaction, u: &[f64]) -> BandedMatrix {
        let dg = nodal_nonlinearity(&reaction.dg, u);
        let mut jac = self.mass.scale_columns(&dg).linear_combination(1.0, &self.stiffness, -1.0);
        for &i in &self.constrained {
            jac.zero_row(i);
        }
        jac
    }
}

/// Which of the two supported nestings relates a pair of spaces.
fn check_nested(coarse: &LagrangeSpace, fine: &LagrangeSpace) -> Result<(), FemError> {
    let (cm, fm) = (coarse.mesh(), fine.mesh());
    if cm.left() != fm.left() || cm.right() != fm.right() {
        return Err(FemError::NotNested("different domains".into()));
    }
    let same_mesh = cm.n_elements() == fm.n_elements();
    let p_nested = same_mesh && coarse.order() <= fine.order();
    let h_nested = coarse.order() == fine.order() && fm.n_elements() == 2 * cm.n_elements();
    if p_nested || h_nested {
        Ok(())
    } else {
        Err(FemError::NotNested(format!("{coarse} is not a subspace of {fine}")))
    }
}

/// Canonical injection `T^N` (fine dofs × coarse dofs): column `j` holds the
/// fine nodal values of the coarse basis function `j`.
pub fn build_injection(coarse: &LagrangeSpace, fine: &LagrangeSpace) -> Result<SparseMatrix, FemError> {
    check_nested(coarse, fine)?;
    let rows = fine.dof_coordinates().into_iter().map(|x| coarse.basis_at(x)).collect();
    Ok(SparseMatrix::from_row_entries(coarse.n_dofs(), rows))
}

/// Interpolation restriction `R^N` (coarse dofs × fine dofs): row `i`
/// evaluates a fine function at coarse dof coordinate `i`.
pub fn build_interp_restriction(fine: &LagrangeSpace, coarse: &LagrangeSpace) -> Result<SparseMatrix, FemError> {
    check_nested(coarse, fine)?;
    let rows = coarse.dof_coordinates().into_iter().map(|x| fine.basis_at(x)).collect();
    Ok(SparseMatrix::from_row_entries(fine.n_dofs(), rows))
}
