//! Method of steps for `x'(t) = f(x_t)` starting on the solution manifold.
//!
//! Each step is classical RK4. The solution is kept as a dense cubic Hermite
//! history whose node data at the step points are `(x(t_n), f(x_{t_n}))`.
//! When a delayed argument falls inside the current step, the stage
//! functionals read a provisional Hermite polynomial over the step, and the
//! step is repeated until that polynomial stops changing.

use std::cell::Cell;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::atlas::DelaySet;
use crate::error::{Error, Result};
use crate::funcspace::{hermite_deriv, hermite_value, Continuous, Grid, SegmentC1, Smooth};
use crate::model::{max_abs, max_abs_diff, Membership, Model};

/// Initial data must satisfy `|phi'(0) - f(phi)|` below this.
pub const INITIAL_RESIDUAL_TOL: f64 = 1e-8;
pub const MAX_OVERLAP_PASSES: usize = 25;
pub const OVERLAP_TOL: f64 = 1e-12;

/// Dense piecewise cubic Hermite history on `[-r, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    n: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl History {
    pub fn from_segment(phi: &SegmentC1) -> Self {
        Self {
            n: phi.n(),
            times: phi.grid().nodes().to_vec(),
            values: phi.values().to_vec(),
            derivs: phi.derivs().to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node_value(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn node_deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.n..(i + 1) * self.n]
    }

    fn push(&mut self, t: f64, x: &[f64], dx: &[f64]) {
        self.times.push(t);
        self.values.extend_from_slice(x);
        self.derivs.extend_from_slice(dx);
    }

    fn check(&self, t: f64) -> Result<f64> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-12 * (b - a).max(1.0);
        if t.is_nan() || t < a - slack || t > b + slack {
            return Err(Error::Domain { t, r: -a });
        }
        Ok(t.clamp(a, b))
    }

    fn piece(&self, t: f64) -> usize {
        self.times
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.times.len() - 2)
    }

    fn eval_piece(&self, i: usize, t: f64, out: &mut [f64], deriv: bool) {
        let (a, b) = (self.times[i], self.times[i + 1]);
        let h = b - a;
        let s = (t - a) / h;
        let n = self.n;
        for (nu, o) in out.iter_mut().enumerate().take(n) {
            let args = (
                self.values[i * n + nu],
                self.derivs[i * n + nu],
                self.values[(i + 1) * n + nu],
                self.derivs[(i + 1) * n + nu],
            );
            *o = if deriv {
                hermite_deriv(args.0, args.1, args.2, args.3, h, s)
            } else {
                hermite_value(args.0, args.1, args.2, args.3, h, s)
            };
        }
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.check(t)?;
        self.eval_piece(self.piece(t), t, out, false);
        Ok(())
    }

    pub fn deriv_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.check(t)?;
        self.eval_piece(self.piece(t), t, out, true);
        Ok(())
    }

    pub fn value(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.value_into(t, &mut out)?;
        Ok(out)
    }

    pub fn deriv(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.deriv_into(t, &mut out)?;
        Ok(out)
    }

    /// Largest jump of value or derivative between adjacent pieces at the
    /// interior nodes.
    pub fn joint_continuity(&self) -> f64 {
        let n = self.n;
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        let mut worst = 0.0f64;
        for i in 1..self.times.len() - 1 {
            let t = self.times[i];
            for deriv in [false, true] {
                self.eval_piece(i - 1, t, &mut left, deriv);
                self.eval_piece(i, t, &mut right, deriv);
                worst = worst.max(max_abs_diff(&left, &right));
            }
        }
        worst
    }
}

/// The segment `x_t` read from a history.
pub struct SegmentView<'a> {
    hist: &'a History,
    t: f64,
    r: f64,
}

impl<'a> SegmentView<'a> {
    pub fn new(hist: &'a History, t: f64, r: f64) -> Self {
        Self { hist, t, r }
    }
}

impl Continuous for SegmentView<'_> {
    fn dim(&self) -> usize {
        self.hist.n
    }

    fn horizon(&self) -> f64 {
        self.r
    }

    fn value_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        self.hist.value_into(self.t + s.clamp(-self.r, 0.0), out)
    }
}

impl Smooth for SegmentView<'_> {
    fn deriv_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        self.hist.deriv_into(self.t + s.clamp(-self.r, 0.0), out)
    }
}

/// Cubic Hermite guess for the solution over the current step.
#[derive(Debug, Clone)]
struct Provisional {
    t0: f64,
    h: f64,
    x0: Vec<f64>,
    f0: Vec<f64>,
    x1: Vec<f64>,
    f1: Vec<f64>,
}

impl Provisional {
    fn value_into(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        for (nu, o) in out.iter_mut().enumerate() {
            *o = hermite_value(
                self.x0[nu],
                self.f0[nu],
                self.x1[nu],
                self.f1[nu],
                self.h,
                s,
            );
        }
    }
}

/// The segment at a stage time: the stage value at `s = 0`, the history up
/// to the step start, and the provisional polynomial in between.
struct StageView<'a> {
    hist: &'a History,
    prov: &'a Provisional,
    tau: f64,
    stage: &'a [f64],
    r: f64,
    overlap: &'a Cell<bool>,
}

impl Continuous for StageView<'_> {
    fn dim(&self) -> usize {
        self.hist.n
    }

    fn horizon(&self) -> f64 {
        self.r
    }

    fn value_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        if s == 0.0 {
            out.copy_from_slice(self.stage);
            return Ok(());
        }
        let u = self.tau + s.clamp(-self.r, 0.0);
        let t_n = self.prov.t0;
        if u <= t_n {
            self.hist.value_into(u, out)
        } else {
            self.overlap.set(true);
            self.prov.value_into(u, out);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    /// End of the step.
    pub t: f64,
    /// `|x'(t_mid) - f(x_{t_mid})|` at the step midpoint on the dense history.
    pub residual: f64,
    /// Stratum of `x_t` at the end of the step.
    pub stratum: DelaySet,
    pub overlap_passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateConfig {
    pub h: f64,
    pub t_end: f64,
    /// Write every `stride`-th step to CSV.
    pub stride: usize,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        Self {
            h: 1e-2,
            t_end: 1.0,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Arc<Grid>,
    history: History,
    h: f64,
    requested_end: f64,
    initial_residual: f64,
    initial_stratum: DelaySet,
    steps: Vec<StepDiagnostic>,
    truncation: Option<Truncation>,
}

impl Trajectory {
    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Time reached, equal to the requested horizon unless truncated.
    pub fn t_end(&self) -> f64 {
        self.history.end()
    }

    pub fn requested_end(&self) -> f64 {
        self.requested_end
    }

    pub fn steps(&self) -> &[StepDiagnostic] {
        &self.steps
    }

    pub fn truncation(&self) -> Option<&Truncation> {
        self.truncation.as_ref()
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn x(&self, t: f64) -> Result<Vec<f64>> {
        self.history.value(t)
    }

    pub fn dx(&self, t: f64) -> Result<Vec<f64>> {
        self.history.deriv(t)
    }

    /// `x_t` resampled on the model grid.
    pub fn segment_at(&self, t: f64) -> Result<SegmentC1> {
        if !(0.0..=self.t_end() + 1e-12).contains(&t) {
            return Err(Error::Domain {
                t,
                r: self.grid.r(),
            });
        }
        let view = SegmentView::new(&self.history, t, self.grid.r());
        SegmentC1::resample(self.grid.clone(), &view)
    }

    /// Writes `t, x.., dx.., residual, stratum` at `t = 0` and every
    /// `stride`-th step point. The residual column is the midpoint
    /// on-manifold residual of the step ending at `t`.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        let n = self.history.n;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("dx{i}")));
        header.push("residual".into());
        header.push("stratum".into());
        w.write_record(&header)?;
        let first = self.history.times.len() - self.steps.len() - 1;
        let mut row = |i: usize, residual: f64, stratum: DelaySet| -> Result<()> {
            let mut rec = vec![format!("{:.17e}", self.history.times[i])];
            rec.extend(
                self.history
                    .node_value(i)
                    .iter()
                    .map(|v| format!("{v:.17e}")),
            );
            rec.extend(
                self.history
                    .node_deriv(i)
                    .iter()
                    .map(|v| format!("{v:.17e}")),
            );
            rec.push(format!("{residual:.6e}"));
            rec.push(stratum.to_string());
            w.write_record(&rec)?;
            Ok(())
        };
        row(first, self.initial_residual, self.initial_stratum)?;
        let stride = stride.max(1);
        for (k, step) in self.steps.iter().enumerate() {
            if (k + 1) % stride == 0 || k + 1 == self.steps.len() {
                row(first + k + 1, step.residual, step.stratum)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn stratum_of<S: Continuous + ?Sized>(model: &Model, seg: &S) -> Result<DelaySet> {
    match model.membership(seg) {
        Membership::InU(j) => Ok(j),
        Membership::OutsideU => Err(Error::Precondition("segment left U".into())),
    }
}

struct Stepper<'a> {
    model: &'a Model,
    r: f64,
    hist: History,
}

impl Stepper<'_> {
    fn f_at(
        &self,
        prov: &Provisional,
        tau: f64,
        stage: &[f64],
        overlap: &Cell<bool>,
    ) -> Result<Vec<f64>> {
        let view = StageView {
            hist: &self.hist,
            prov,
            tau,
            stage,
            r: self.r,
            overlap,
        };
        self.model.rhs_f(&view)
    }

    /// Advances by `h`; returns the number of passes used.
    fn step(&mut self, h: f64) -> Result<usize> {
        let i = self.hist.times.len() - 1;
        let t_n = self.hist.end();
        let x_n = self.hist.node_value(i).to_vec();
        let f_n = self.hist.node_deriv(i).to_vec();
        let n = x_n.len();
        let mut prov = Provisional {
            t0: t_n,
            h,
            x1: x_n.iter().zip(&f_n).map(|(x, f)| x + h * f).collect(),
            f1: f_n.clone(),
            x0: x_n.clone(),
            f0: f_n,
        };
        let axpy = |a: f64, k: &[f64]| -> Vec<f64> {
            x_n.iter().zip(k).map(|(x, kk)| x + a * kk).collect()
        };
        let mut change = f64::INFINITY;
        for pass in 1..=MAX_OVERLAP_PASSES {
            let overlap = Cell::new(false);
            let k1 = self.f_at(&prov, t_n, &x_n, &overlap)?;
            let k2 = self.f_at(&prov, t_n + 0.5 * h, &axpy(0.5 * h, &k1), &overlap)?;
            let k3 = self.f_at(&prov, t_n + 0.5 * h, &axpy(0.5 * h, &k2), &overlap)?;
            let k4 = self.f_at(&prov, t_n + h, &axpy(h, &k3), &overlap)?;
            let x1: Vec<f64> = (0..n)
                .map(|nu| x_n[nu] + h / 6.0 * (k1[nu] + 2.0 * k2[nu] + 2.0 * k3[nu] + k4[nu]))
                .collect();
            let f1 = self.f_at(&prov, t_n + h, &x1, &overlap)?;
            change = max_abs_diff(&x1, &prov.x1).max(max_abs_diff(&f1, &prov.f1));
            prov.x1 = x1;
            prov.f1 = f1;
            if !overlap.get()
                || change <= OVERLAP_TOL * (1.0 + max_abs(&prov.x1) + max_abs(&prov.f1))
            {
                self.hist.push(t_n + h, &prov.x1, &prov.f1);
                return Ok(pass);
            }
        }
        Err(Error::OverlapNoConvergence { t: t_n, change })
    }
}

/// Integrates from `phi0` in `X_f` with step `h` up to `t_end`.
///
/// Leaving `U` truncates the trajectory; the reason is recorded in
/// [`Trajectory::truncation`].
pub fn integrate(model: &Model, phi0: &SegmentC1, h: f64, t_end: f64) -> Result<Trajectory> {
    let r = model.r();
    if !(h > 0.0 && h <= r / 4.0 + 1e-15) {
        return Err(Error::Precondition(format!(
            "step size h = {h} must lie in (0, r/4 = {}]",
            r / 4.0
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Precondition(format!(
            "horizon T = {t_end} must be finite and nonnegative"
        )));
    }
    if **phi0.grid() != **model.grid() {
        return Err(Error::GridMismatch);
    }
    let initial_residual = model.on_manifold_residual(phi0)?;
    if initial_residual > INITIAL_RESIDUAL_TOL {
        return Err(Error::Precondition(format!(
            "initial segment is not on the solution manifold (residual {initial_residual:.3e}); lift it first"
        )));
    }
    let initial_stratum = stratum_of(model, phi0)?;
    let mut stepper = Stepper {
        model,
        r,
        hist: History::from_segment(phi0),
    };
    let n_steps = ((t_end / h) - 1e-9).ceil().max(0.0) as usize;
    let mut steps = Vec::with_capacity(n_steps);
    let mut truncation = None;
    for k in 0..n_steps {
        let t_n = stepper.hist.end();
        let target = if k + 1 == n_steps {
            t_end
        } else {
            (k + 1) as f64 * h
        };
        let hk = target - t_n;
        let passes = match stepper.step(hk) {
            Ok(p) => p,
            Err(e @ (Error::OutsideW { .. } | Error::OutsideV { .. })) => {
                truncation = Some(Truncation {
                    t: t_n,
                    reason: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let t1 = stepper.hist.end();
        let t_mid = t_n + 0.5 * hk;
        let mid_view = SegmentView::new(&stepper.hist, t_mid, r);
        let end_view = SegmentView::new(&stepper.hist, t1, r);
        let (residual, stratum) = match (
            model.on_manifold_residual(&mid_view),
            model.membership(&end_view),
        ) {
            (Ok(res), Membership::InU(j)) => (res, j),
            (Err(e), _) => {
                truncation = Some(Truncation {
                    t: t_n,
                    reason: e.to_string(),
                });
                break;
            }
            (_, Membership::OutsideU) => {
                truncation = Some(Truncation {
                    t: t1,
                    reason: "x_t left U".into(),
                });
                break;
            }
        };
        steps.push(StepDiagnostic {
            t: t1,
            residual,
            stratum,
            overlap_passes: passes,
        });
    }
    // drop a step whose diagnostics could not be computed
    if truncation.is_some() && stepper.hist.times.len() > phi0.grid().len() + steps.len() {
        let keep = phi0.grid().len() + steps.len();
        let n = stepper.hist.n;
        stepper.hist.times.truncate(keep);
        stepper.hist.values.truncate(keep * n);
        stepper.hist.derivs.truncate(keep * n);
    }
    Ok(Trajectory {
        grid: model.grid().clone(),
        history: stepper.hist,
        h,
        requested_end: t_end,
        initial_residual,
        initial_stratum,
        steps,
        truncation,
    })
}
