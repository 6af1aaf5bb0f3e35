//! Systems of the form `x'(t) = g(x(t - d_1(L x_t)), ..., x(t - d_k(L x_t)))`.
//!
//! A [`Model`] bundles the linear map `L: C_n -> F`, the delay functions
//! `d_k: W -> [0, r]`, the right-hand side `g: V -> R^n` and their
//! derivatives. It evaluates the induced functional `f(phi) = g(hat(phi))`,
//! its derivative and the continuous extension of that derivative, and the
//! residuals that characterize the solution manifold and its tangent spaces.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::DelaySet;
use crate::bump::{Functional, RowFunctional};
use crate::error::{Error, Result};
use crate::funcspace::{Continuous, Grid, SegmentC1, Smooth};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Default threshold below which a delay value counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Step of the central differences used to check derivatives.
pub const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const REGISTRATION_SAMPLES: usize = 32;
const REGISTRATION_SEED: u64 = 0x005e_ed0f_c0de;

/// Point evaluation `weight . phi(time)` contributing to `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTerm {
    pub time: f64,
    /// `dim F x n`
    pub weight: DMatrix<f64>,
}

/// Continuous linear map `L: C_n -> F = R^{dim F}` given as a finite sum of
/// point evaluations. Quadrature terms are expanded into trapezoid-weighted
/// evaluations at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapL {
    dim_f: usize,
    n: usize,
    terms: Vec<PointTerm>,
}

impl LinearMapL {
    pub fn new(dim_f: usize, n: usize) -> Self {
        Self {
            dim_f,
            n,
            terms: Vec::new(),
        }
    }

    pub fn point(mut self, time: f64, weight: DMatrix<f64>) -> Self {
        assert_eq!(
            weight.shape(),
            (self.dim_f, self.n),
            "point term has wrong shape"
        );
        self.terms.push(PointTerm { time, weight });
        self
    }

    /// Adds `int_{-r}^0 K(t) phi(t) dt` by the trapezoid rule on `grid`.
    pub fn quadrature(mut self, grid: &Grid, kernel: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let nodes = grid.nodes();
        for (i, &t) in nodes.iter().enumerate() {
            let left = if i > 0 { t - nodes[i - 1] } else { 0.0 };
            let right = if i + 1 < nodes.len() {
                nodes[i + 1] - t
            } else {
                0.0
            };
            let w = 0.5 * (left + right);
            let k = kernel(t);
            assert_eq!(
                k.shape(),
                (self.dim_f, self.n),
                "quadrature kernel has wrong shape"
            );
            if k.iter().any(|x| *x != 0.0) {
                self.terms.push(PointTerm {
                    time: t,
                    weight: k * w,
                });
            }
        }
        self
    }

    pub fn dim_f(&self) -> usize {
        self.dim_f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[PointTerm] {
        &self.terms
    }

    pub fn apply<S: Continuous + ?Sized>(&self, phi: &S) -> Result<Vec<f64>> {
        if phi.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: phi.dim(),
            });
        }
        let mut out = vec![0.0; self.dim_f];
        let mut buf = vec![0.0; self.n];
        for term in &self.terms {
            phi.value_into(term.time, &mut buf)?;
            for (row, o) in out.iter_mut().enumerate() {
                *o += (0..self.n)
                    .map(|nu| term.weight[(row, nu)] * buf[nu])
                    .sum::<f64>();
            }
        }
        Ok(out)
    }

    /// The functional `psi -> L(psi . e_nu)` on scalar functions (`nu` 0-based).
    pub fn column_functional(&self, nu: usize) -> Functional {
        let rows = (0..self.dim_f)
            .map(|row| RowFunctional {
                terms: self
                    .terms
                    .iter()
                    .filter(|t| t.weight[(row, nu)] != 0.0)
                    .map(|t| (t.time, t.weight[(row, nu)]))
                    .collect(),
            })
            .collect();
        Functional { rows }
    }
}

/// A delay functional `d_k` with its gradient.
#[derive(Clone)]
pub struct DelayFn {
    pub value: ScalarFn,
    pub gradient: VecFn,
}

impl DelayFn {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn constant(c: f64, dim_f: usize) -> Self {
        Self::new(move |_| c, move |_| vec![0.0; dim_f])
    }
}

/// Right-hand side `g: (R^n)^k -> R^n` and its Jacobian (`n x nk`).
#[derive(Clone)]
pub struct RhsG {
    pub value: VecFn,
    pub jacobian: MatFn,
}

impl RhsG {
    pub fn new(
        value: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
        }
    }
}

/// The declared additional hypothesis justifying injectivity of the charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    /// `g` is bounded by `bound`.
    BoundedG {
        bound: f64,
    },
    /// `d_1 = 0` on `W`, and `g` is bounded on sets with bounded first argument.
    D1Bounded,
    /// Every `phi` in `U` lies in the stratum `U_J`.
    ConstantStratum {
        stratum: DelaySet,
    },
    None,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::BoundedG { bound } => write!(f, "g bounded by {bound}"),
            Hypothesis::D1Bounded => {
                write!(f, "d_1 = 0 with g bounded on bounded first argument")
            }
            Hypothesis::ConstantStratum { stratum } => write!(f, "U_J = U for J = {stratum}"),
            Hypothesis::None => write!(f, "none declared"),
        }
    }
}

/// Axis-aligned box used to sample an open set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds differ in length");
        assert!(
            lo.iter().zip(&hi).all(|(a, b)| a <= b),
            "box bounds are inverted"
        );
        Self { lo, hi }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| if a < b { rng.gen_range(a..b) } else { a })
            .collect()
    }

    /// Sample strictly inside the box, at least `margin` away from its faces.
    pub fn sample_inner<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| {
                let (a, b) = (a + margin, b - margin);
                if a < b {
                    rng.gen_range(a..b)
                } else {
                    0.5 * (a + b)
                }
            })
            .collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..(1usize << d.min(16)))
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.hi[i]
                        } else {
                            self.lo[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// An open domain given by a membership predicate and an optional sampling box.
#[derive(Clone, Default)]
pub struct Domain {
    pub predicate: Option<Predicate>,
    pub bbox: Option<BoxDomain>,
}

impl Domain {
    pub fn everywhere() -> Self {
        Self::default()
    }

    pub fn with_box(bbox: BoxDomain) -> Self {
        Self {
            predicate: None,
            bbox: Some(bbox),
        }
    }

    pub fn predicate(mut self, p: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.predicate = Some(Arc::new(p));
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && self.predicate.as_ref().is_none_or(|p| p(x))
    }
}

/// Result of locating a segment in the strata of `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    OutsideU,
    InU(DelaySet),
}

/// The system `(r, n, k, F, L, {d_k}, W, g, V)` with a declared hypothesis.
#[derive(Clone)]
pub struct Model {
    name: String,
    grid: Arc<Grid>,
    n: usize,
    l: LinearMapL,
    delays: Vec<DelayFn>,
    g: RhsG,
    w: Domain,
    v: Domain,
    hypothesis: Hypothesis,
    zero_tol: f64,
    witness: SegmentC1,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("r", &self.r())
            .field("n", &self.n)
            .field("k", &self.delays.len())
            .field("dim_f", &self.l.dim_f)
            .field("hypothesis", &self.hypothesis)
            .finish()
    }
}

impl Model {
    pub fn builder(name: impl Into<String>, grid: Arc<Grid>, n: usize) -> ModelBuilder {
        ModelBuilder {
            name: name.into(),
            grid,
            n,
            l: None,
            delays: Vec::new(),
            g: None,
            w: Domain::everywhere(),
            v: Domain::everywhere(),
            hypothesis: Hypothesis::None,
            zero_tol: DEFAULT_ZERO_TOL,
            witness: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn r(&self) -> f64 {
        self.grid.r()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of delays.
    pub fn k(&self) -> usize {
        self.delays.len()
    }

    pub fn dim_f(&self) -> usize {
        self.l.dim_f
    }

    pub fn l(&self) -> &LinearMapL {
        &self.l
    }

    pub fn hypothesis(&self) -> Hypothesis {
        self.hypothesis
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub fn witness(&self) -> &SegmentC1 {
        &self.witness
    }

    pub fn w_box(&self) -> Option<&BoxDomain> {
        self.w.bbox.as_ref()
    }

    pub fn v_box(&self) -> Option<&BoxDomain> {
        self.v.bbox.as_ref()
    }

    pub fn in_w(&self, w: &[f64]) -> bool {
        w.len() == self.dim_f() && self.w.contains(w)
    }

    pub fn in_v(&self, v: &[f64]) -> bool {
        v.len() == self.n * self.k() && self.v.contains(v)
    }

    /// The full delay index set `K`.
    pub fn all_delays(&self) -> DelaySet {
        DelaySet::full(self.k())
    }

    pub fn apply_l<S: Continuous + ?Sized>(&self, phi: &S) -> Result<Vec<f64>> {
        self.l.apply(phi)
    }

    fn require_w(&self, w: &[f64]) -> Result<()> {
        if self.in_w(w) {
            Ok(())
        } else {
            Err(Error::OutsideW { w: w.to_vec() })
        }
    }

    /// `(d_1(w), ..., d_k(w))`.
    pub fn delays_at(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.require_w(w)?;
        Ok(self.delays.iter().map(|d| (d.value)(w)).collect())
    }

    /// Gradients `Dd_k(w)` as rows in the dual of `F`.
    pub fn delay_gradients(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.require_w(w)?;
        Ok(self.delays.iter().map(|d| (d.gradient)(w)).collect())
    }

    pub fn g_value(&self, v: &[f64]) -> Result<Vec<f64>> {
        if !self.in_v(v) {
            return Err(Error::OutsideV { v: v.to_vec() });
        }
        Ok((self.g.value)(v))
    }

    pub fn g_jacobian(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        if !self.in_v(v) {
            return Err(Error::OutsideV { v: v.to_vec() });
        }
        Ok((self.g.jacobian)(v))
    }

    /// `{k : d_k(w) <= zero_tol}`.
    pub fn classify(&self, w: &[f64]) -> Result<DelaySet> {
        let d = self.delays_at(w)?;
        Ok(DelaySet::from_indices(
            d.iter()
                .enumerate()
                .filter(|(_, &dk)| dk <= self.zero_tol)
                .map(|(k, _)| k),
        ))
    }

    /// Values of `phi` at the delayed times `-d_k(w)` for a given `w`.
    pub fn hat_at<S: Continuous + ?Sized>(&self, phi: &S, w: &[f64]) -> Result<Vec<f64>> {
        let d = self.delays_at(w)?;
        let n = self.n;
        let mut out = vec![0.0; n * d.len()];
        for (k, dk) in d.iter().enumerate() {
            phi.value_into(-dk, &mut out[k * n..(k + 1) * n])?;
        }
        Ok(out)
    }

    /// `hat(phi) = (phi(-d_1(L phi)), ..., phi(-d_k(L phi)))`, flattened.
    pub fn hat<S: Continuous + ?Sized>(&self, phi: &S) -> Result<Vec<f64>> {
        let w = self.apply_l(phi)?;
        self.hat_at(phi, &w)
    }

    /// `f(phi) = g(hat(phi))`.
    pub fn rhs_f<S: Continuous + ?Sized>(&self, phi: &S) -> Result<Vec<f64>> {
        let v = self.hat(phi)?;
        self.g_value(&v)
    }

    /// `Df(phi) chi` for `chi` in `C^1_n`.
    pub fn df(&self, phi: &SegmentC1, chi: &SegmentC1) -> Result<Vec<f64>> {
        self.df_ext(phi, chi)
    }

    /// The continuous extension `D_e f(phi) chi` for any continuous `chi`.
    pub fn df_ext<P, C>(&self, phi: &P, chi: &C) -> Result<Vec<f64>>
    where
        P: Smooth + ?Sized,
        C: Continuous + ?Sized,
    {
        let n = self.n;
        if chi.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: chi.dim(),
            });
        }
        let w = self.apply_l(phi)?;
        let d = self.delays_at(&w)?;
        let grads = self.delay_gradients(&w)?;
        let hat = self.hat_at(phi, &w)?;
        let jac = self.g_jacobian(&hat)?;
        let l_chi = self.apply_l(chi)?;

        let mut bracket = vec![0.0; n * d.len()];
        let mut chi_t = vec![0.0; n];
        let mut dphi_t = vec![0.0; n];
        for (k, (dk, grad)) in d.iter().zip(&grads).enumerate() {
            let s: f64 = grad.iter().zip(&l_chi).map(|(a, b)| a * b).sum();
            chi.value_into(-dk, &mut chi_t)?;
            phi.deriv_into(-dk, &mut dphi_t)?;
            for nu in 0..n {
                bracket[k * n + nu] = chi_t[nu] - dphi_t[nu] * s;
            }
        }
        Ok((0..n)
            .map(|mu| {
                bracket
                    .iter()
                    .enumerate()
                    .map(|(col, b)| jac[(mu, col)] * b)
                    .sum()
            })
            .collect())
    }

    /// Stratum of `phi`, or `OutsideU`.
    pub fn membership<S: Continuous + ?Sized>(&self, phi: &S) -> Membership {
        let Ok(w) = self.apply_l(phi) else {
            return Membership::OutsideU;
        };
        if !self.in_w(&w) {
            return Membership::OutsideU;
        }
        match self.hat_at(phi, &w) {
            Ok(v) if self.in_v(&v) => match self.classify(&w) {
                Ok(j) => Membership::InU(j),
                Err(_) => Membership::OutsideU,
            },
            _ => Membership::OutsideU,
        }
    }

    /// `|phi'(0) - f(phi)|` in the max norm.
    pub fn on_manifold_residual<S: Smooth + ?Sized>(&self, phi: &S) -> Result<f64> {
        let f = self.rhs_f(phi)?;
        let d0 = phi.deriv(0.0)?;
        Ok(max_abs_diff(&d0, &f))
    }

    /// `|chi'(0) - Df(phi) chi|` in the max norm.
    pub fn tangent_residual(&self, phi: &SegmentC1, chi: &SegmentC1) -> Result<f64> {
        let df = self.df(phi, chi)?;
        Ok(max_abs_diff(chi.deriv_at_zero(), &df))
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub struct ModelBuilder {
    name: String,
    grid: Arc<Grid>,
    n: usize,
    l: Option<LinearMapL>,
    delays: Vec<DelayFn>,
    g: Option<RhsG>,
    w: Domain,
    v: Domain,
    hypothesis: Hypothesis,
    zero_tol: f64,
    witness: Option<SegmentC1>,
}

impl ModelBuilder {
    pub fn linear_map(mut self, l: LinearMapL) -> Self {
        self.l = Some(l);
        self
    }

    pub fn delay(mut self, d: DelayFn) -> Self {
        self.delays.push(d);
        self
    }

    pub fn rhs(mut self, g: RhsG) -> Self {
        self.g = Some(g);
        self
    }

    pub fn w_domain(mut self, w: Domain) -> Self {
        self.w = w;
        self
    }

    pub fn v_domain(mut self, v: Domain) -> Self {
        self.v = v;
        self
    }

    pub fn hypothesis(mut self, h: Hypothesis) -> Self {
        self.hypothesis = h;
        self
    }

    pub fn zero_tol(mut self, tol: f64) -> Self {
        self.zero_tol = tol;
        self
    }

    pub fn witness(mut self, phi: SegmentC1) -> Self {
        self.witness = Some(phi);
        self
    }

    /// Registers the model after checking gradients against finite
    /// differences, the delay range, the declared bound on `g`, and the
    /// witness of a nonempty `U`.
    pub fn build(self) -> Result<Model> {
        let reg = |msg: String| Error::Registration(msg);
        let l = self.l.ok_or_else(|| reg("missing linear map L".into()))?;
        let g = self
            .g
            .ok_or_else(|| reg("missing right-hand side g".into()))?;
        if self.delays.is_empty() {
            return Err(reg("at least one delay is required".into()));
        }
        if self.delays.len() > 64 {
            return Err(reg("at most 64 delays are supported".into()));
        }
        if l.n != self.n {
            return Err(reg(format!(
                "L acts on R^{}, model has n = {}",
                l.n, self.n
            )));
        }
        let witness = self.witness.ok_or_else(|| {
            reg("a witness segment phi with L phi in W and hat(phi) in V is required".into())
        })?;
        let model = Model {
            name: self.name,
            grid: self.grid,
            n: self.n,
            l,
            delays: self.delays,
            g,
            w: self.w,
            v: self.v,
            hypothesis: self.hypothesis,
            zero_tol: self.zero_tol,
            witness,
        };
        model.self_check()?;
        Ok(model)
    }
}

fn fd_agrees(analytic: f64, fd: f64) -> bool {
    (analytic - fd).abs() <= FD_REL_TOL * (1.0 + fd.abs())
}

impl Model {
    fn self_check(&self) -> Result<()> {
        let reg = Error::Registration;
        if self.witness.n() != self.n {
            return Err(reg(format!("witness has {} components", self.witness.n())));
        }
        if **self.witness.grid() != *self.grid {
            return Err(reg("witness lives on a different grid".into()));
        }
        let w0 = self.apply_l(&self.witness)?;
        if !self.in_w(&w0) {
            return Err(reg(format!("witness has L phi = {w0:?} outside W")));
        }
        let v0 = self.hat_at(&self.witness, &w0)?;
        if !self.in_v(&v0) {
            return Err(reg(format!("witness has hat(phi) = {v0:?} outside V")));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(REGISTRATION_SEED);
        let dim_f = self.dim_f();
        let r = self.r();

        let mut ws = vec![w0.clone()];
        for _ in 0..REGISTRATION_SAMPLES {
            let w = match &self.w.bbox {
                Some(b) => b.sample(&mut rng),
                None => w0.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect(),
            };
            if self.in_w(&w) {
                ws.push(w);
            }
        }
        for w in &ws {
            for (k, d) in self.delays.iter().enumerate() {
                let val = (d.value)(w);
                if !(-1e-12..=r + 1e-12).contains(&val) {
                    return Err(reg(format!(
                        "d_{} = {val} outside [0, r] at w = {w:?}",
                        k + 1
                    )));
                }
                let grad = (d.gradient)(w);
                if grad.len() != dim_f {
                    return Err(reg(format!(
                        "gradient of d_{} has length {}",
                        k + 1,
                        grad.len()
                    )));
                }
                for i in 0..dim_f {
                    let h = FD_STEP * w[i].abs().max(1.0);
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[i] += h;
                    wm[i] -= h;
                    if !(self.in_w(&wp) && self.in_w(&wm)) {
                        continue;
                    }
                    let fd = ((d.value)(&wp) - (d.value)(&wm)) / (2.0 * h);
                    if !fd_agrees(grad[i], fd) {
                        return Err(reg(format!(
                            "gradient of d_{} disagrees with finite differences at w = {w:?}: {} vs {fd}",
                            k + 1,
                            grad[i]
                        )));
                    }
                }
            }
        }

        let nk = self.n * self.k();
        let mut vs = vec![v0.clone()];
        for _ in 0..REGISTRATION_SAMPLES {
            let v = match &self.v.bbox {
                Some(b) => b.sample(&mut rng),
                None => v0.iter().map(|x| x + rng.gen_range(-1.0..1.0)).collect(),
            };
            if self.in_v(&v) {
                vs.push(v);
            }
        }
        for v in &vs {
            let gv = (self.g.value)(v);
            if gv.len() != self.n {
                return Err(reg(format!("g returns {} components", gv.len())));
            }
            if let Hypothesis::BoundedG { bound } = self.hypothesis {
                if max_abs(&gv) > bound {
                    return Err(reg(format!(
                        "|g(v)| exceeds the declared bound {bound} at v = {v:?}"
                    )));
                }
            }
            let jac = (self.g.jacobian)(v);
            if jac.shape() != (self.n, nk) {
                return Err(reg(format!(
                    "Dg has shape {:?}, expected ({}, {nk})",
                    jac.shape(),
                    self.n
                )));
            }
            for col in 0..nk {
                let h = FD_STEP * v[col].abs().max(1.0);
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[col] += h;
                vm[col] -= h;
                if !(self.in_v(&vp) && self.in_v(&vm)) {
                    continue;
                }
                let (gp, gm) = ((self.g.value)(&vp), (self.g.value)(&vm));
                for mu in 0..self.n {
                    let fd = (gp[mu] - gm[mu]) / (2.0 * h);
                    if !fd_agrees(jac[(mu, col)], fd) {
                        return Err(reg(format!(
                            "Dg[{mu},{col}] disagrees with finite differences at v = {v:?}: {} vs {fd}",
                            jac[(mu, col)]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::funcspace::SegmentC0;

    fn identity_like(t: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![t], vec![1.0])
    }

    #[test]
    fn hat_of_constant_is_constant() {
        let m = builtin::twodelay(&builtin::Params::default())
            .unwrap()
            .model;
        let c = SegmentC1::constant(m.grid().clone(), &[0.3, -0.2]);
        assert_eq!(m.hat(&c).unwrap(), vec![0.3, -0.2, 0.3, -0.2]);
    }

    #[test]
    fn eq1_hat_and_rhs_with_unit_delay() {
        let p =
            builtin::Params::from_pairs(&[("rho0", 1.0), ("rho_amp", 0.0), ("a", 0.0), ("b", 1.0)]);
        let b = builtin::eq1_with(&p, |_, v2| (v2, 0.0, 1.0)).unwrap();
        let phi = SegmentC1::from_fn(b.model.grid().clone(), 1, identity_like);
        let hat = b.model.hat(&phi).unwrap();
        assert!(hat[0].abs() < 1e-15);
        assert!((hat[1] + 1.0).abs() < 1e-14);
        assert!((b.model.rhs_f(&phi).unwrap()[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn mvw_hat_with_constant_delay() {
        let p = builtin::Params::from_pairs(&[("delta_amp", 0.0)]);
        let m = builtin::mvw(&p).unwrap().model;
        let phi = SegmentC1::from_fn(m.grid().clone(), 1, identity_like);
        let hat = m.hat(&phi).unwrap();
        assert!((hat[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let grid = Grid::uniform(1.0, 17).unwrap();
        let m = Model::builder("zero", grid.clone(), 1)
            .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::from_element(1, 1, 1.0)))
            .delay(DelayFn::new(
                |w| 0.5 + 0.25 * w[0].tanh(),
                |w| vec![0.25 / w[0].cosh().powi(2)],
            ))
            .rhs(RhsG::new(|_| vec![0.0], |_| DMatrix::zeros(1, 1)))
            .witness(SegmentC1::zeros(grid.clone(), 1))
            .build()
            .unwrap();
        let phi = SegmentC1::from_fn(grid, 1, |t| (vec![t.sin()], vec![t.cos()]));
        assert_eq!(m.rhs_f(&phi).unwrap(), vec![0.0]);
        let c = SegmentC1::constant(m.grid().clone(), &[2.0]);
        assert_eq!(m.on_manifold_residual(&c).unwrap(), 0.0);
    }

    #[test]
    fn df_of_zero_direction_vanishes() {
        for b in builtin::all(&builtin::Params::default()).unwrap() {
            let phi = b.model.witness().clone();
            let zero = SegmentC1::zeros(b.model.grid().clone(), b.model.n());
            assert!(max_abs(&b.model.df(&phi, &zero).unwrap()) == 0.0);
        }
    }

    #[test]
    fn df_ext_agrees_with_df_on_c1() {
        let m = builtin::twodelay(&builtin::Params::default())
            .unwrap()
            .model;
        let g = m.grid().clone();
        let phi = SegmentC1::from_fn(g.clone(), 2, |t| {
            (
                vec![0.3 * (2.0 * t).sin(), 0.2 * t],
                vec![0.6 * (2.0 * t).cos(), 0.2],
            )
        });
        let chi = SegmentC1::from_fn(g.clone(), 2, |t| {
            (
                vec![t * t, (3.0 * t).cos()],
                vec![2.0 * t, -3.0 * (3.0 * t).sin()],
            )
        });
        let a = m.df(&phi, &chi).unwrap();
        let b = m.df_ext(&phi, &chi as &dyn Continuous).unwrap();
        assert_eq!(a, b);
        let c0 = SegmentC0::from_fn(g, 2, |t| vec![t.abs(), 1.0]);
        assert!(m.df_ext(&phi, &c0).is_ok());
    }

    #[test]
    fn membership_examples() {
        let ode = builtin::ode(&builtin::Params::default()).unwrap().model;
        assert_eq!(
            ode.membership(ode.witness()),
            Membership::InU(DelaySet::full(1))
        );
        let eq1 = builtin::eq1(&builtin::Params::default()).unwrap().model;
        assert_eq!(
            eq1.membership(eq1.witness()),
            Membership::InU(DelaySet::from_indices([0]))
        );
        let mvw = builtin::mvw(&builtin::Params::default()).unwrap().model;
        assert_eq!(
            mvw.membership(mvw.witness()),
            Membership::InU(DelaySet::empty())
        );
    }

    #[test]
    fn perturbed_derivative_gives_unit_tangent_residual() {
        let b = builtin::ode(&builtin::Params::default()).unwrap();
        let m = &b.model;
        let phi = SegmentC1::constant(m.grid().clone(), &[0.0, 0.0]);
        let mut chi = SegmentC1::zeros(m.grid().clone(), 2);
        assert_eq!(m.tangent_residual(&phi, &chi).unwrap(), 0.0);
        chi.set_deriv_at_zero(&[1.0, 0.0]);
        assert!((m.tangent_residual(&phi, &chi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn registration_rejects_bad_gradient() {
        let grid = Grid::uniform(1.0, 17).unwrap();
        let err = Model::builder("bad", grid.clone(), 1)
            .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::from_element(1, 1, 1.0)))
            .delay(DelayFn::new(|w| 0.5 + 0.25 * w[0].tanh(), |_| vec![0.0]))
            .rhs(RhsG::new(
                |v| vec![-v[0]],
                |_| DMatrix::from_element(1, 1, -1.0),
            ))
            .witness(SegmentC1::zeros(grid, 1))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Registration(_)), "{err}");
    }

    #[test]
    fn registration_rejects_unbounded_g_declared_bounded() {
        let grid = Grid::uniform(1.0, 17).unwrap();
        let err = Model::builder("bad", grid.clone(), 1)
            .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::from_element(1, 1, 1.0)))
            .delay(DelayFn::constant(0.5, 1))
            .rhs(RhsG::new(
                |v| vec![3.0 * v[0]],
                |_| DMatrix::from_element(1, 1, 3.0),
            ))
            .v_domain(Domain::with_box(BoxDomain::cube(1, 2.0)))
            .hypothesis(Hypothesis::BoundedG { bound: 1.0 })
            .witness(SegmentC1::zeros(grid, 1))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Registration(_)));
    }

    #[test]
    fn registration_requires_witness_in_u() {
        let grid = Grid::uniform(1.0, 17).unwrap();
        let err = Model::builder("bad", grid.clone(), 1)
            .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::from_element(1, 1, 1.0)))
            .delay(DelayFn::constant(0.5, 1))
            .rhs(RhsG::new(
                |v| vec![-v[0]],
                |_| DMatrix::from_element(1, 1, -1.0),
            ))
            .w_domain(Domain::everywhere().predicate(|w| w[0] > 0.0))
            .witness(SegmentC1::zeros(grid, 1))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Registration(_)));
    }

    #[test]
    fn outside_w_is_reported() {
        let grid = Grid::uniform(1.0, 17).unwrap();
        let m = Model::builder("halfline", grid.clone(), 1)
            .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::from_element(1, 1, 1.0)))
            .delay(DelayFn::constant(0.5, 1))
            .rhs(RhsG::new(
                |v| vec![-v[0]],
                |_| DMatrix::from_element(1, 1, -1.0),
            ))
            .w_domain(Domain::everywhere().predicate(|w| w[0] > 0.0))
            .witness(SegmentC1::constant(grid.clone(), &[1.0]))
            .build()
            .unwrap();
        let neg = SegmentC1::constant(grid, &[-1.0]);
        assert!(matches!(m.hat(&neg), Err(Error::OutsideW { .. })));
        assert_eq!(m.membership(&neg), Membership::OutsideU);
    }
}
