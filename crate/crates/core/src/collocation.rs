//! Right-sided Gauss–Radau collocation tables on the unit interval.

use crate::numerics::DenseMatrix;
use thiserror::Error;

pub const MAX_NODES: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollocationError {
    #[error("unsupported number of collocation nodes {0} (expected 1..={MAX_NODES})")]
    UnsupportedNodeCount(usize),
    #[error("collocation nodes must be strictly increasing in (0, 1]")]
    InvalidNodes,
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Right-Radau (Radau IIA) abscissae on (0, 1], last node equal to 1.
///
/// The interior nodes are the roots of `P_M(2s-1) - P_{M-1}(2s-1)` in (0, 1),
/// located by scanning for sign changes and refined by bisection.
pub fn radau_nodes(m: usize) -> Result<Vec<f64>, CollocationError> {
    if !(1..=MAX_NODES).contains(&m) {
        return Err(CollocationError::UnsupportedNodeCount(m));
    }
    let radau = |s: f64| {
        let x = 2.0 * s - 1.0;
        legendre(m, x) - legendre(m - 1, x)
    };
    let mut nodes = Vec::with_capacity(m);
    let samples = 4000;
    // stop short of s = 1, which is always a root
    let upper = 1.0 - 0.5 / samples as f64;
    let mut a = 0.0;
    let mut fa = radau(a);
    for i in 1..=samples {
        let b = upper * i as f64 / samples as f64;
        let fb = radau(b);
        if fa == 0.0 {
            nodes.push(a);
        } else if fa * fb < 0.0 {
            nodes.push(bisect(&radau, a, b, fa));
        }
        a = b;
        fa = fb;
    }
    nodes.push(1.0);
    debug_assert_eq!(nodes.len(), m);
    Ok(nodes)
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-16 {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

fn check_nodes(tau: &[f64]) -> Result<(), CollocationError> {
    let increasing = tau.windows(2).all(|w| w[0] < w[1]);
    let in_range = tau.first().is_some_and(|&t| t > 0.0) && tau.last().is_some_and(|&t| t <= 1.0);
    if increasing && in_range {
        Ok(())
    } else {
        Err(CollocationError::InvalidNodes)
    }
}

/// Monomial coefficients (lowest degree first) of the `j`-th Lagrange
/// polynomial of the node set.
fn lagrange_coefficients(tau: &[f64], j: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    for (i, &ti) in tau.iter().enumerate() {
        if i == j {
            continue;
        }
        let denom = tau[j] - ti;
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c / denom;
            next[k] -= c * ti / denom;
        }
        coeffs = next;
    }
    coeffs
}

/// Spectral quadrature matrix `Q[m][j] = ∫_0^{τ_m} L_j(s) ds`, integrated exactly
/// from the monomial expansion of each Lagrange polynomial.
pub fn build_q(tau: &[f64]) -> Result<DenseMatrix, CollocationError> {
    check_nodes(tau)?;
    let m = tau.len();
    let mut q = DenseMatrix::zeros(m, m);
    for j in 0..m {
        let coeffs = lagrange_coefficients(tau, j);
        for (row, &t) in tau.iter().enumerate() {
            // Horner on the antiderivative sum_k c_k t^{k+1}/(k+1)
            let mut acc = 0.0;
            for (k, c) in coeffs.iter().enumerate().rev() {
                acc = acc * t + c / (k + 1) as f64;
            }
            q[(row, j)] = acc * t;
        }
    }
    Ok(q)
}

/// Backward-Euler (right-rectangle) preconditioner: `QΔ[m][j] = τ_j - τ_{j-1}` for `j ≤ m`.
pub fn build_qdelta_be(tau: &[f64]) -> Result<DenseMatrix, CollocationError> {
    check_nodes(tau)?;
    let dtau = spacings(tau);
    let m = tau.len();
    let mut qd = DenseMatrix::zeros(m, m);
    for row in 0..m {
        for j in 0..=row {
            qd[(row, j)] = dtau[j];
        }
    }
    Ok(qd)
}

fn spacings(tau: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    tau.iter()
        .map(|&t| {
            let d = t - prev;
            prev = t;
            d
        })
        .collect()
}

/// Nodes, quadrature matrix and backward-Euler preconditioner for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationTable {
    pub tau: Vec<f64>,
    pub q: DenseMatrix,
    pub qdelta: DenseMatrix,
    pub dtau: Vec<f64>,
}

impl CollocationTable {
    pub fn radau_right(m: usize) -> Result<Self, CollocationError> {
        Self::from_nodes(radau_nodes(m)?)
    }

    pub fn from_nodes(tau: Vec<f64>) -> Result<Self, CollocationError> {
        let q = build_q(&tau)?;
        let qdelta = build_qdelta_be(&tau)?;
        let dtau = spacings(&tau);
        Ok(Self { tau, q, qdelta, dtau })
    }

    pub fn num_nodes(&self) -> usize {
        self.tau.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        assert_eq!(radau_nodes(1).unwrap(), vec![1.0]);
        let t = CollocationTable::radau_right(1).unwrap();
        assert_eq!(t.q[(0, 0)], 1.0);
        assert_eq!(t.qdelta[(0, 0)], 1.0);
    }

    #[test]
    fn three_nodes_closed_form() {
        let s6 = 6f64.sqrt();
        let expected = [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0];
        for (a, b) in radau_nodes(3).unwrap().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn four_nodes_six_digits() {
        let expected = [0.088588, 0.409467, 0.787659, 1.0];
        for (a, b) in radau_nodes(4).unwrap().iter().zip(expected) {
            assert!((a - b).abs() < 5e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_unsupported_counts() {
        assert_eq!(radau_nodes(0), Err(CollocationError::UnsupportedNodeCount(0)));
        assert_eq!(radau_nodes(10), Err(CollocationError::UnsupportedNodeCount(10)));
        assert_eq!(build_q(&[0.5, 0.2]), Err(CollocationError::InvalidNodes));
    }

    #[test]
    fn qdelta_two_nodes() {
        let qd = build_qdelta_be(&[1.0 / 3.0, 1.0]).unwrap();
        assert_eq!(qd.row(0), &[1.0 / 3.0, 0.0]);
        assert_eq!(qd[(1, 0)], 1.0 / 3.0);
        assert!((qd[(1, 1)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn row_sums_match_nodes() {
        for m in 1..=MAX_NODES {
            let t = CollocationTable::radau_right(m).unwrap();
            assert!(t.qdelta.is_lower_triangular());
            for row in 0..m {
                let sq: f64 = t.q.row(row).iter().sum();
                let sd: f64 = t.qdelta.row(row).iter().sum();
                assert!((sq - t.tau[row]).abs() < 1e-12, "M={m} row {row}");
                assert!((sd - t.tau[row]).abs() < 1e-14);
                assert!(t.qdelta[(row, row)] > 0.0);
            }
            assert!((t.dtau.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_exact_for_low_degree() {
        let t = CollocationTable::radau_right(4).unwrap();
        // last row applied to s^3 integrates to 1/4
        let v: f64 = (0..4).map(|j| t.q[(3, j)] * t.tau[j].powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-13);
        for deg in 0..4 {
            for row in 0..4 {
                let v: f64 = (0..4).map(|j| t.q[(row, j)] * t.tau[j].powi(deg)).sum();
                let exact = t.tau[row].powi(deg + 1) / (deg + 1) as f64;
                assert!((v - exact).abs() < 1e-12);
            }
        }
    }
}
