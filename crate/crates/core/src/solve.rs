//! Newton solver for small fixed-point problems `x = F(x)` in `R^n` with a
//! damped fallback.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::max_abs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Converged when `|x - F(x)| <= tol (1 + |x|)`.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tol: 1e-12,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `|x - F(x)|` at the returned point.
    pub residual: f64,
    /// Whether any step was shortened or replaced by a damped fixed-point step.
    pub damped: bool,
}

fn residual_of(x: &[f64], fx: &[f64]) -> Vec<f64> {
    x.iter().zip(fx).map(|(a, b)| a - b).collect()
}

/// Solves `x = F(x)` from `x0`. `jac(x)` must return `DF(x)`.
///
/// Each iteration takes a Newton step for `G(x) = x - F(x)`. If the step
/// does not reduce `|G|` it is halved; if halving fails or the Jacobian is
/// singular, a damped fixed-point step `x + (F(x) - x)/2` is tried instead.
pub fn solve_fixed_point<F, J>(
    x0: &[f64],
    settings: &SolverSettings,
    mut eval: F,
    mut jac: J,
) -> Result<Solution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<DMatrix<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let fx = eval(&x)?;
    let mut g = residual_of(&x, &fx);
    let mut damped = false;
    for it in 0..=settings.max_iterations {
        let gn = max_abs(&g);
        if gn <= settings.tol * (1.0 + max_abs(&x)) {
            return Ok(Solution {
                x,
                iterations: it,
                residual: gn,
                damped,
            });
        }
        if it == settings.max_iterations {
            break;
        }
        let dfx = jac(&x)?;
        let system = DMatrix::<f64>::identity(n, n) - dfx;
        let newton = system.lu().solve(&DVector::from_column_slice(&g));

        let mut accepted = None;
        if let Some(step) = newton.filter(|s| s.iter().all(|v| v.is_finite())) {
            let mut lambda = 1.0;
            for halving in 0..=settings.max_halvings {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(step.iter())
                    .map(|(a, s)| a - lambda * s)
                    .collect();
                if let Ok(ft) = eval(&trial) {
                    let gt = residual_of(&trial, &ft);
                    if max_abs(&gt) < gn {
                        damped |= halving > 0;
                        accepted = Some((trial, gt));
                        break;
                    }
                }
                lambda *= 0.5;
            }
        }
        if accepted.is_none() {
            let mut lambda = 0.5;
            for _ in 0..settings.max_halvings {
                let trial: Vec<f64> = x.iter().zip(&g).map(|(a, r)| a - lambda * r).collect();
                if let Ok(ft) = eval(&trial) {
                    let gt = residual_of(&trial, &ft);
                    if max_abs(&gt) < gn {
                        damped = true;
                        accepted = Some((trial, gt));
                        break;
                    }
                }
                lambda *= 0.5;
            }
        }
        match accepted {
            Some((xn, gnv)) => {
                x = xn;
                g = gnv;
            }
            None => {
                return Err(Error::NoConvergence {
                    iterations: it + 1,
                    residual: gn,
                })
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iterations,
        residual: max_abs(&g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_problem_converges_in_one_step() {
        // x = A x + b with spectral radius > 1, so plain iteration would diverge
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let b = [1.0, -2.0];
        let sol = solve_fixed_point(
            &[0.0, 0.0],
            &SolverSettings::default(),
            |x| {
                Ok((0..2)
                    .map(|i| a[(i, 0)] * x[0] + a[(i, 1)] * x[1] + b[i])
                    .collect())
            },
            |_| Ok(a.clone()),
        )
        .unwrap();
        assert!(sol.iterations <= 2);
        // (I - A) x = b
        let x = sol.x;
        assert!((x[0] - (2.0 * x[0] + x[1] + 1.0)).abs() < 1e-12);
        assert!((x[1] - (3.0 * x[1] - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_scalar() {
        let sol = solve_fixed_point(
            &[0.0],
            &SolverSettings::default(),
            |x| Ok(vec![x[0].cos()]),
            |x| Ok(DMatrix::from_element(1, 1, -x[0].sin())),
        )
        .unwrap();
        assert!((sol.x[0] - 0.739_085_133_215_160_6).abs() < 1e-12);
        assert!(sol.iterations < 10);
    }

    #[test]
    fn wrong_jacobian_falls_back_to_damping() {
        let sol = solve_fixed_point(
            &[1.0],
            &SolverSettings::default(),
            |x| Ok(vec![0.5 * x[0] + 1.0]),
            |_| Ok(DMatrix::from_element(1, 1, 1.0)),
        )
        .unwrap();
        assert!(sol.damped);
        assert!((sol.x[0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn no_fixed_point_reports_failure() {
        let err = solve_fixed_point(
            &[0.0],
            &SolverSettings::default(),
            |x| Ok(vec![x[0] + 1.0]),
            |_| Ok(DMatrix::from_element(1, 1, 1.0)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }
}
