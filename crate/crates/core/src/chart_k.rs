//! Chart for the stratum on which every delay vanishes.
//!
//! The frame `Y_K` is a diagonal matrix segment of bumps with
//! `(Y_K x)(0) = 0`, `(Y_K x)'(0) = x` and `L(Y_K x) = 0`. The chart map
//! `R^K phi = phi - Y_K phi'(0)` is a linear projection onto `X_0`; its
//! inverse on the manifold solves `x = f(chi + Y_K x)`.

use nalgebra::DMatrix;

use crate::bump::{make_component_bump, Bump};
use crate::error::{Error, Result};
use crate::funcspace::{MatSegmentC1, SegmentC1};
use crate::model::{max_abs, Model};
use crate::solve::{solve_fixed_point, Solution, SolverSettings};

/// Tolerance on `chi'(0)` for accepting `chi` as an element of `X_0`.
pub const X0_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FrameK {
    y: MatSegmentC1,
    bumps: Vec<Bump>,
    z: f64,
}

impl FrameK {
    pub fn build(model: &Model, z: f64) -> Result<Self> {
        let r = model.r();
        if !(z > -r && z < 0.0) {
            return Err(Error::Precondition(format!(
                "frame cut point z = {z} must lie in (-{r}, 0)"
            )));
        }
        let bumps = (0..model.n())
            .map(|nu| make_component_bump(model, nu, z))
            .collect::<Result<Vec<_>>>()?;
        let diag: Vec<SegmentC1> = bumps.iter().map(|b| b.segment.clone()).collect();
        Ok(Self {
            y: MatSegmentC1::diagonal(&diag)?,
            bumps,
            z,
        })
    }

    pub fn matrix(&self) -> &MatSegmentC1 {
        &self.y
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// `Y_K . x`
    pub fn apply(&self, x: &[f64]) -> Result<SegmentC1> {
        self.y.apply(x)
    }
}

/// Inverse image on the manifold with the solver record.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub phi: SegmentC1,
    pub solution: Solution,
}

pub(crate) fn require_x0(chi: &SegmentC1) -> Result<()> {
    let d = max_abs(chi.deriv_at_zero());
    if d > X0_TOL {
        return Err(Error::Precondition(format!(
            "segment is not in X_0: |chi'(0)| = {d:.3e}"
        )));
    }
    Ok(())
}

/// Solves `x = f(chi + Y x)` for a frozen frame `Y` by Newton's method,
/// assembling the Jacobian from `Df` applied to the columns of `Y`.
pub(crate) fn solve_offset(
    model: &Model,
    chi: &SegmentC1,
    y: &MatSegmentC1,
    settings: &SolverSettings,
) -> Result<Inversion> {
    let n = model.n();
    let shifted = |x: &[f64]| -> Result<SegmentC1> { chi.add(&y.apply(x)?) };
    let x0 = model.rhs_f(chi)?;
    let solution = solve_fixed_point(
        &x0,
        settings,
        |x| model.rhs_f(&shifted(x)?),
        |x| {
            let phi = shifted(x)?;
            let mut jac = DMatrix::zeros(n, n);
            for nu in 0..n {
                let col = model.df(&phi, y.column(nu))?;
                for mu in 0..n {
                    jac[(mu, nu)] = col[mu];
                }
            }
            Ok(jac)
        },
    )?;
    Ok(Inversion {
        phi: shifted(&solution.x)?,
        solution,
    })
}

#[derive(Debug, Clone)]
pub struct ChartK {
    model: Model,
    frame: FrameK,
    settings: SolverSettings,
}

impl ChartK {
    /// Chart with bumps cut at `z = -r/2`.
    pub fn new(model: Model) -> Result<Self> {
        let z = -model.r() / 2.0;
        Self::with_z(model, z)
    }

    pub fn with_z(model: Model, z: f64) -> Result<Self> {
        let frame = FrameK::build(&model, z)?;
        Ok(Self {
            model,
            frame,
            settings: SolverSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn frame(&self) -> &FrameK {
        &self.frame
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// `R^K phi = phi - Y_K phi'(0)`
    pub fn project(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        let mut out = phi.sub(&self.frame.apply(phi.deriv_at_zero())?)?;
        let zero = vec![0.0; phi.n()];
        out.set_deriv_at_zero(&zero);
        Ok(out)
    }

    /// The point of the manifold whose projection is `chi`.
    pub fn invert(&self, chi: &SegmentC1) -> Result<Inversion> {
        require_x0(chi)?;
        solve_offset(&self.model, chi, self.frame.matrix(), &self.settings)
    }

    /// Tangent vector at `phi` in `X_fK` that projects to `eta` in `X_0`.
    pub fn tangent_lift(&self, phi: &SegmentC1, eta: &SegmentC1) -> Result<SegmentC1> {
        require_x0(eta)?;
        let m = &self.model;
        let n = m.n();
        let w = m.apply_l(phi)?;
        let grads = m.delay_gradients(&w)?;
        let jac = m.g_jacobian(&m.hat_at(phi, &w)?)?;
        let l_eta = m.apply_l(eta)?;
        let eta0 = eta.value_at_zero();
        let dphi0 = phi.deriv_at_zero();
        let mut x = vec![0.0; n];
        for (k, grad) in grads.iter().enumerate() {
            let s: f64 = grad.iter().zip(&l_eta).map(|(a, b)| a * b).sum();
            for nu in 0..n {
                let bracket = eta0[nu] - dphi0[nu] * s;
                for (mu, xm) in x.iter_mut().enumerate() {
                    *xm += jac[(mu, k * n + nu)] * bracket;
                }
            }
        }
        eta.add(&self.frame.apply(&x)?)
    }

    /// `x(R^K phi)`: the slope at 0 of the manifold point over `R^K phi`.
    fn offset(&self, phi: &SegmentC1) -> Result<Vec<f64>> {
        Ok(self.invert(&self.project(phi)?)?.solution.x)
    }

    /// `A_K(phi) = phi - Y_K f(R_K^{-1}(R^K phi))`
    pub fn almost_graph(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        let x = self.offset(phi)?;
        phi.sub(&self.frame.apply(&x)?)
    }

    /// `B_K(psi) = psi + Y_K f(R_K^{-1}(R^K psi))`
    pub fn almost_graph_inv(&self, psi: &SegmentC1) -> Result<SegmentC1> {
        let x = self.offset(psi)?;
        psi.add(&self.frame.apply(&x)?)
    }
}
