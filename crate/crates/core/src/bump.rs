//! Bump functions with prescribed slope at 0 that are annihilated by a
//! finite-rank functional and vanish left of a cut point.
//!
//! The bump is a fixed C¹ profile `b(t) = t (1 - t/z*)^2` on `[z*, 0]`
//! corrected by a minimum-norm combination of Hermite cubics at the interior
//! nodes of `(z*, 0)`: a value tent (unit value, zero node slopes) and a
//! slope tent (zero node values, unit slope) per node. Every candidate
//! vanishes on `[-r, z*]` and at `0`, so only the functional constraints need
//! solving.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspace::{hermite_value, scalar_times_basis, Continuous, Grid, SegmentC1, Smooth};
use crate::model::Model;

/// Certificates are accepted below this level.
pub const CERTIFICATE_TOL: f64 = 1e-10;

/// One row `psi -> sum_i w_i psi(t_i)` of a functional on scalar functions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowFunctional {
    /// `(time, weight)` pairs.
    pub terms: Vec<(f64, f64)>,
}

impl RowFunctional {
    pub fn point(t: f64) -> Self {
        Self {
            terms: vec![(t, 1.0)],
        }
    }

    pub fn apply<S: Continuous + ?Sized>(&self, psi: &S) -> Result<f64> {
        let mut buf = [0.0];
        let mut acc = 0.0;
        for &(t, w) in &self.terms {
            psi.value_into(t, &mut buf)?;
            acc += w * buf[0];
        }
        Ok(acc)
    }
}

/// A linear functional `C([-r,0], R) -> R^q` given by `q` rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub rows: Vec<RowFunctional>,
}

impl Functional {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn apply<S: Continuous + ?Sized>(&self, psi: &S) -> Result<Vec<f64>> {
        self.rows.iter().map(|row| row.apply(psi)).collect()
    }

    /// Stacks the rows of `other` below those of `self`.
    pub fn stack(mut self, other: &Functional) -> Self {
        self.rows.extend(other.rows.iter().cloned());
        self
    }
}

#[derive(Debug, Clone)]
pub struct BumpRequest {
    pub grid: Arc<Grid>,
    pub functional: Functional,
    /// Cut point in `[-r, 0)`.
    pub z: f64,
    /// Maximum number of interior nodes carrying candidates; the ones nearest to 0 are kept.
    pub budget: Option<usize>,
}

impl BumpRequest {
    pub fn new(grid: Arc<Grid>, functional: Functional, z: f64) -> Self {
        Self {
            grid,
            functional,
            z,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `|phi'(0) - 1|`
    pub slope: f64,
    /// `max |lambda phi|`
    pub functional: f64,
    /// `max |phi|, |phi'|` over samples of `[-r, z]`
    pub support: f64,
    /// `|phi(0)|`
    pub at_zero: f64,
}

impl Certificate {
    pub fn max(&self) -> f64 {
        self.slope
            .max(self.functional)
            .max(self.support)
            .max(self.at_zero)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Debug, Clone)]
pub struct Bump {
    pub segment: SegmentC1,
    pub certificate: Certificate,
    /// Left end of the support, the smallest node `>= z`.
    pub support_start: f64,
}

/// Value at `t` of the tent-cubic centred at node `i`.
pub(crate) fn tent_value(grid: &Grid, i: usize, t: f64) -> f64 {
    let nodes = grid.nodes();
    if i == 0 || i + 1 >= nodes.len() || t <= nodes[i - 1] || t >= nodes[i + 1] {
        return 0.0;
    }
    if t <= nodes[i] {
        let h = nodes[i] - nodes[i - 1];
        hermite_value(0.0, 0.0, 1.0, 0.0, h, (t - nodes[i - 1]) / h)
    } else {
        let h = nodes[i + 1] - nodes[i];
        hermite_value(1.0, 0.0, 0.0, 0.0, h, (t - nodes[i]) / h)
    }
}

/// Value at `t` of the cubic centred at node `i` with zero node values and
/// unit slope at node `i`, scaled by the mean adjacent spacing.
fn slope_tent_value(grid: &Grid, i: usize, t: f64) -> f64 {
    let nodes = grid.nodes();
    if i == 0 || i + 1 >= nodes.len() || t <= nodes[i - 1] || t >= nodes[i + 1] {
        return 0.0;
    }
    let scale = slope_scale(grid, i);
    if t <= nodes[i] {
        let h = nodes[i] - nodes[i - 1];
        scale * hermite_value(0.0, 0.0, 0.0, 1.0, h, (t - nodes[i - 1]) / h)
    } else {
        let h = nodes[i + 1] - nodes[i];
        scale * hermite_value(0.0, 1.0, 0.0, 0.0, h, (t - nodes[i]) / h)
    }
}

fn slope_scale(grid: &Grid, i: usize) -> f64 {
    0.5 * (grid.node(i + 1) - grid.node(i - 1))
}

/// `t (1 - t/z)^2` and its derivative; zero value and slope at `z`, slope 1 at 0.
fn profile(z: f64, t: f64) -> (f64, f64) {
    let u = 1.0 - t / z;
    (t * u * u, u * u - 2.0 * t * u / z)
}

fn profile_segment(grid: &Arc<Grid>, first: usize) -> SegmentC1 {
    let z = grid.node(first);
    let m = grid.len();
    let mut values = vec![0.0; m];
    let mut derivs = vec![0.0; m];
    for i in first..m {
        let (v, d) = profile(z, grid.node(i));
        values[i] = v;
        derivs[i] = d;
    }
    values[m - 1] = 0.0;
    derivs[m - 1] = 1.0;
    values[first] = 0.0;
    derivs[first] = 0.0;
    SegmentC1::new(grid.clone(), 1, values, derivs).expect("profile data matches grid")
}

/// Minimum-norm least-squares solution of `a x = b` for a wide `a`:
/// `x = a^T y` with `y` from the pseudo-inverse of the small Gram matrix
/// `a a^T`. The SVD of `a` itself is avoided because it returned wrong
/// singular values for wide matrices with a zero row.
fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eig = (a * a.transpose()).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let cut = lmax * 1e-13 * a.nrows() as f64;
    let gram_pinv = |rhs: &DVector<f64>| -> DVector<f64> {
        let mut y = DVector::zeros(a.nrows());
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cut {
                let v = eig.eigenvectors.column(i);
                y += v * (v.dot(rhs) / l);
            }
        }
        a.transpose() * y
    };
    // the Gram matrix squares the condition number; refinement restores accuracy
    let mut x = gram_pinv(b);
    for _ in 0..2 {
        x += gram_pinv(&(b - a * &x));
    }
    x
}

/// Builds a bump for `req` with a certificate.
pub fn make_bump(req: &BumpRequest) -> Result<Bump> {
    let grid = &req.grid;
    let r = grid.r();
    if !(req.z >= -r - 1e-12 && req.z < 0.0) {
        return Err(Error::Precondition(format!(
            "bump cut point z = {} must lie in [-{r}, 0)",
            req.z
        )));
    }
    let m = grid.len();
    let first = grid
        .snap_up(req.z.max(-r))
        .filter(|&i| i + 1 < m)
        .ok_or(Error::GridTooCoarse {
            z: req.z,
            available: 0,
            needed: req.functional.rank() + 2,
        })?;
    let mut interior: Vec<usize> = (first + 1..m - 1).collect();
    if let Some(budget) = req.budget {
        let skip = interior.len().saturating_sub(budget);
        interior.drain(..skip);
    }
    let q = req.functional.rank();
    let available = interior.len() + 1;
    if available < q + 2 {
        return Err(Error::GridTooCoarse {
            z: req.z,
            available,
            needed: q + 2,
        });
    }

    let base = profile_segment(grid, first);
    let mut segment = base.clone();
    if q > 0 {
        // columns: value tents, then slope tents
        let k = interior.len();
        let mut a: DMatrix<f64> = DMatrix::zeros(q, 2 * k);
        let mut rhs: DVector<f64> = DVector::zeros(q);
        for (row, rf) in req.functional.rows.iter().enumerate() {
            for (col, &i) in interior.iter().enumerate() {
                a[(row, col)] = rf
                    .terms
                    .iter()
                    .map(|&(t, w)| w * tent_value(grid, i, t))
                    .sum();
                a[(row, k + col)] = rf
                    .terms
                    .iter()
                    .map(|&(t, w)| w * slope_tent_value(grid, i, t))
                    .sum();
            }
            rhs[row] = -rf.apply(&base)?;
        }
        let coeffs = min_norm_solve(&a, &rhs);
        let residual = (&a * &coeffs - &rhs).amax();
        let scale = 1.0 + rhs.amax();
        if !residual.is_finite() || residual > 0.1 * CERTIFICATE_TOL * scale {
            return Err(Error::InfeasibleRank { residual });
        }
        for (col, &i) in interior.iter().enumerate() {
            segment.values_mut()[i] += coeffs[col];
            segment.derivs_mut()[i] += coeffs[k + col] * slope_scale(grid, i);
        }
    }

    let certificate = certify(&segment, &req.functional, req.z)?;
    if !certificate.passes(CERTIFICATE_TOL) {
        return Err(Error::InfeasibleRank {
            residual: certificate.max(),
        });
    }
    Ok(Bump {
        segment,
        certificate,
        support_start: grid.node(first),
    })
}

/// Recomputes the four certificate residuals of a scalar segment.
pub fn certify(phi: &SegmentC1, functional: &Functional, z: f64) -> Result<Certificate> {
    let slope = (phi.deriv_at_zero()[0] - 1.0).abs();
    let functional = functional
        .apply(phi)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let at_zero = phi.value_at_zero()[0].abs();
    let mut support = 0.0f64;
    for t in phi
        .grid()
        .sample_times(crate::funcspace::SAMPLES_PER_INTERVAL)
    {
        if t > z {
            break;
        }
        support = support
            .max(phi.eval(t)?[0].abs())
            .max(phi.deriv(t)?[0].abs());
    }
    Ok(Certificate {
        slope,
        functional,
        support,
        at_zero,
    })
}

/// Scalar bump `eta` for component `nu` (0-based) with `L(eta e_nu) = 0`.
pub fn make_component_bump(model: &Model, nu: usize, z: f64) -> Result<Bump> {
    if nu >= model.n() {
        return Err(Error::IndexOutOfRange {
            index: nu + 1,
            max: model.n(),
        });
    }
    let req = BumpRequest::new(model.grid().clone(), model.l().column_functional(nu), z);
    make_bump(&req)
}

/// `eta_nu . e_nu` with slope 1 at 0 in component `nu`, annihilated by `L`.
pub fn make_vector_bump(model: &Model, nu: usize, z: f64) -> Result<SegmentC1> {
    let bump = make_component_bump(model, nu, z)?;
    scalar_times_basis(&bump.segment, nu, model.n())
}
