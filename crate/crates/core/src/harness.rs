//! Verification suite: every invariant of the library as a sampled check
//! against one model, collected into a deterministic report.
//!
//! Checks run concurrently. Each check draws from its own ChaCha stream of
//! the suite seed, so results do not depend on scheduling.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{lift_to_manifold, Atlas, Chart, DelaySet};
use crate::builtin::{self, Builtin, Params};
use crate::bump::{make_bump, make_vector_bump, BumpRequest};
use crate::chart_j::dmin_j;
use crate::error::{Error, Result};
use crate::funcspace::{Continuous, MatSegmentC1, SegmentC1, SAMPLES_PER_INTERVAL};
use crate::model::{max_abs, max_abs_diff, Membership, Model};
use crate::sampling::{random_functional, random_segment, random_vec, random_x0, x0_on_manifold};
use crate::semiflow::integrate;

/// Amplitude of random segments.
pub const SAMPLE_AMPLITUDE: f64 = 1.0;
/// Rejection-sampling budget per requested sample.
const MAX_TRIES: usize = 2000;
/// Random seeds used to build the atlas under test.
const ATLAS_SEEDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random segments per segment-based check.
    pub segments: usize,
    /// Random `(w, x)` pairs per pair-based check.
    pub pairs: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            segments: 64,
            pairs: 32,
        }
    }
}

/// A model and, for built-ins, the strata its atlas must have.
#[derive(Debug, Clone)]
pub struct Target {
    pub model: Model,
    pub expected_strata: Option<Vec<DelaySet>>,
}

impl From<Builtin> for Target {
    fn from(b: Builtin) -> Self {
        Self {
            model: b.model,
            expected_strata: Some(b.expected_strata),
        }
    }
}

impl From<Model> for Target {
    fn from(model: Model) -> Self {
        Self {
            model,
            expected_strata: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// The property being checked.
    pub anchor: String,
    pub status: Status,
    pub samples: usize,
    /// `None` when skipped or aborted by an error.
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    /// ChaCha stream of the suite seed used by this check.
    pub stream: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub grid_nodes: usize,
    pub r: f64,
    pub zero_tol: f64,
    pub hypothesis: String,
    pub seed: u64,
    pub segments: usize,
    pub pairs: usize,
    pub sample_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub model: String,
    pub environment: Environment,
    pub checks: Vec<CheckReport>,
}

impl VerificationReport {
    /// No check failed (skipped checks do not count as failures).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let e = &self.environment;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {}  hypothesis {}  r = {}  nodes = {}  zero_tol = {:e}  seed = {}",
            self.model, e.hypothesis, e.r, e.grid_nodes, e.zero_tol, e.seed
        );
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            let res = c
                .max_residual
                .map_or("-".to_string(), |r| format!("{r:.3e}"));
            let _ = write!(
                out,
                "{tag}  {:width$}  {:>10} <= {:<8.1e} n={:<4}",
                c.name, res, c.tolerance, c.samples
            );
            if let Some(note) = &c.note {
                let _ = write!(out, "  {note}");
            }
            out.push('\n');
        }
        let failed = self.failures().count();
        let skipped = self
            .checks
            .iter()
            .filter(|c| c.status == Status::Skipped)
            .count();
        let _ = writeln!(
            out,
            "{} checks: {} passed, {failed} failed, {skipped} skipped",
            self.checks.len(),
            self.checks.len() - failed - skipped
        );
        out
    }
}

/// Result of one check body.
enum Run {
    Done {
        samples: usize,
        worst: f64,
        note: Option<String>,
    },
    Skipped(String),
}

/// Running maximum; NaN counts as infinitely bad.
#[derive(Default)]
struct Acc {
    samples: usize,
    worst: f64,
}

impl Acc {
    fn add(&mut self, r: f64) {
        self.samples += 1;
        self.worst = if r.is_nan() {
            f64::INFINITY
        } else {
            self.worst.max(r)
        };
    }

    fn max(&mut self, r: f64) {
        self.worst = if r.is_nan() {
            f64::INFINITY
        } else {
            self.worst.max(r)
        };
    }

    fn done(self) -> Result<Run> {
        Ok(Run::Done {
            samples: self.samples,
            worst: self.worst,
            note: None,
        })
    }

    fn done_with(self, note: String) -> Result<Run> {
        Ok(Run::Done {
            samples: self.samples,
            worst: self.worst,
            note: Some(note),
        })
    }
}

type Rng8 = ChaCha8Rng;
type Body = Box<dyn Fn(&Fixture, &mut Rng8) -> Result<Run> + Send + Sync>;

pub struct CheckDef {
    pub name: String,
    pub anchor: &'static str,
    pub tolerance: f64,
    body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    AllDelays,
    Positive,
}

impl Kind {
    fn prefix(self) -> &'static str {
        match self {
            Kind::AllDelays => "chart_k",
            Kind::Positive => "chart_j",
        }
    }

    fn matches(self, chart: &Chart) -> bool {
        matches!(
            (self, chart),
            (Kind::AllDelays, Chart::AllDelays(_)) | (Kind::Positive, Chart::Positive(_))
        )
    }
}

struct Fixture {
    model: Model,
    expected: Option<Vec<DelaySet>>,
    atlas: Atlas,
    cfg: SuiteConfig,
}

fn dist(a: &SegmentC1, b: &SegmentC1) -> Result<f64> {
    a.node_distance(b)
}

impl Fixture {
    fn new(target: &Target, cfg: &SuiteConfig) -> Result<Self> {
        let model = target.model.clone();
        let atlas = seeded_atlas(&model, cfg.seed)?;
        Ok(Self {
            model,
            expected: target.expected_strata.clone(),
            atlas,
            cfg: *cfg,
        })
    }

    fn segment(&self, rng: &mut Rng8) -> SegmentC1 {
        random_segment(rng, self.model.grid(), self.model.n(), SAMPLE_AMPLITUDE)
    }

    fn charts(&self, kind: Kind) -> Vec<&Chart> {
        self.atlas
            .strata()
            .filter_map(|j| self.atlas.chart(j).ok())
            .filter(|c| kind.matches(c))
            .collect()
    }

    fn admissible(&self, chart: &Chart, phi: &SegmentC1) -> Result<bool> {
        Ok(
            self.model.membership(phi) == Membership::InU(chart.stratum())
                && chart.covers(&self.model.apply_l(phi)?),
        )
    }

    fn draw(
        &self,
        chart: &Chart,
        rng: &mut Rng8,
        what: &str,
        mut gen: impl FnMut(&mut Rng8) -> Result<SegmentC1>,
    ) -> Result<SegmentC1> {
        for _ in 0..MAX_TRIES {
            let phi = gen(rng)?;
            if self.admissible(chart, &phi)? {
                return Ok(phi);
            }
        }
        Err(Error::Precondition(format!(
            "no {what} sample found in the domain of the chart for {}",
            chart.stratum()
        )))
    }

    /// `phi` in `U_J` inside the chart's coverage.
    fn in_chart(&self, chart: &Chart, rng: &mut Rng8) -> Result<SegmentC1> {
        self.draw(chart, rng, "U_J", |rng| Ok(self.segment(rng)))
    }

    /// `phi` in `X_fJ` inside the chart's coverage.
    fn on_manifold(&self, chart: &Chart, rng: &mut Rng8) -> Result<SegmentC1> {
        self.draw(chart, rng, "X_fJ", |rng| {
            Ok(lift_to_manifold(&self.model, &self.segment(rng))?.phi)
        })
    }

    /// `chi` in `X_0` inside the chart's coverage.
    fn x0(&self, chart: &Chart, rng: &mut Rng8) -> Result<SegmentC1> {
        self.draw(chart, rng, "X_0", |rng| {
            Ok(random_x0(
                rng,
                self.model.grid(),
                self.model.n(),
                SAMPLE_AMPLITUDE,
            ))
        })
    }

    /// `chi` in `X_0 ∩ X_f` inside the chart's coverage.
    fn x0_on_manifold(&self, chart: &Chart, rng: &mut Rng8) -> Result<SegmentC1> {
        self.draw(chart, rng, "X_0 ∩ X_f", |rng| {
            x0_on_manifold(rng, &self.model, 0.5)
        })
    }

    fn frame_at(&self, chart: &Chart, w: &[f64], x: &[f64]) -> Result<SegmentC1> {
        match chart {
            Chart::AllDelays(c) => c.frame().apply(x),
            Chart::Positive(c) => c.frame().apply(w, x),
        }
    }

    /// A point `w` where the chart's frame is defined.
    fn frame_point(&self, chart: &Chart, rng: &mut Rng8, margin: f64) -> Result<Vec<f64>> {
        if let Chart::Positive(c) = chart {
            if let Some(b) = c.frame().coverage_box() {
                return Ok(b.sample_inner(rng, margin));
            }
        }
        self.model.apply_l(&self.in_chart(chart, rng)?)
    }
}

/// Atlas over the lifts of `ATLAS_SEEDS` random segments drawn from `U` on
/// rng stream 0 of `seed`. This is the atlas the suite checks.
pub fn seeded_atlas(model: &Model, seed: u64) -> Result<Atlas> {
    let mut rng = stream_rng(seed, 0);
    let seeds: Vec<SegmentC1> = (0..ATLAS_SEEDS)
        .map(|_| sample_in_u(model, &mut rng))
        .collect::<Result<_>>()?;
    Atlas::build(model, &seeds, &Default::default())
}

/// Random segment of the suite's sampling amplitude with `L phi` in `W`
/// and `hat(phi)` in `V`.
pub fn sample_in_u<R: rand::Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<SegmentC1> {
    for _ in 0..MAX_TRIES {
        let phi = random_segment(rng, model.grid(), model.n(), SAMPLE_AMPLITUDE);
        if model.membership(&phi) != Membership::OutsideU {
            return Ok(phi);
        }
    }
    Err(Error::Precondition(
        "no random segment of the sampling amplitude lies in U".into(),
    ))
}

fn stream_rng(seed: u64, stream: u64) -> Rng8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn def(name: impl Into<String>, anchor: &'static str, tolerance: f64, body: Body) -> CheckDef {
    CheckDef {
        name: name.into(),
        anchor,
        tolerance,
        body,
    }
}

/// Runs `per` on every chart of `kind` and merges the maxima.
fn over_charts(
    fx: &Fixture,
    kind: Kind,
    rng: &mut Rng8,
    per: impl Fn(&Fixture, &Chart, &mut Rng8, &mut Acc) -> Result<()>,
) -> Result<Run> {
    let charts = fx.charts(kind);
    if charts.is_empty() {
        return Ok(Run::Skipped(format!(
            "no {} chart in the atlas",
            kind.prefix()
        )));
    }
    let mut acc = Acc::default();
    for chart in charts {
        per(fx, chart, rng, &mut acc)?;
    }
    acc.done()
}

fn funcspace_checks() -> Vec<CheckDef> {
    vec![
        def(
            "funcspace.linearity",
            "eval(a phi + b psi, t) = a eval(phi, t) + b eval(psi, t)",
            1e-12,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                let times = fx.model.grid().sample_times(SAMPLES_PER_INTERVAL);
                for _ in 0..fx.cfg.segments {
                    let (phi, psi) = (fx.segment(rng), fx.segment(rng));
                    let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                    let comb = phi.lin_comb(a, b, &psi)?;
                    let mut worst = 0.0f64;
                    for &t in &times {
                        let lhs = comb.eval(t)?;
                        let (p, q) = (phi.eval(t)?, psi.eval(t)?);
                        let rhs: Vec<f64> = p.iter().zip(&q).map(|(p, q)| a * p + b * q).collect();
                        worst = worst.max(max_abs_diff(&lhs, &rhs));
                    }
                    acc.add(worst);
                }
                acc.done()
            }),
        ),
        def(
            "funcspace.derivative_fd",
            "eval_deriv is the derivative of eval between nodes",
            1e-6,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                let nodes = fx.model.grid().nodes().to_vec();
                for _ in 0..fx.cfg.segments {
                    let phi = fx.segment(rng);
                    let i = rng.gen_range(0..nodes.len() - 1);
                    let h = nodes[i + 1] - nodes[i];
                    let t = nodes[i] + h * rng.gen_range(0.2..0.8);
                    let eps = 1e-5 * h;
                    let (p, q) = (phi.eval(t + eps)?, phi.eval(t - eps)?);
                    let d = phi.eval_deriv(t)?;
                    let worst = d
                        .iter()
                        .enumerate()
                        .map(|(nu, dv)| {
                            ((p[nu] - q[nu]) / (2.0 * eps) - dv).abs() / (1.0 + dv.abs())
                        })
                        .fold(0.0, f64::max);
                    acc.add(worst);
                }
                acc.done()
            }),
        ),
        def(
            "funcspace.mat_apply",
            "eval(A . q, t) = A(t) q",
            1e-12,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                let n = fx.model.n();
                let times = fx.model.grid().sample_times(4);
                for _ in 0..fx.cfg.pairs {
                    let a = MatSegmentC1::from_columns((0..n).map(|_| fx.segment(rng)).collect())?;
                    let q = random_vec(rng, n, 2.0);
                    let aq = a.apply(&q)?;
                    let mut worst = 0.0f64;
                    for &t in &times {
                        let lhs = aq.eval(t)?;
                        let rhs = a.eval(t)? * nalgebra::DVector::from_column_slice(&q);
                        worst = worst.max(max_abs_diff(&lhs, rhs.as_slice()));
                    }
                    acc.add(worst);
                }
                acc.done()
            }),
        ),
        def(
            "funcspace.cubic_exact",
            "cubic polynomials are reproduced exactly",
            1e-12,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                let n = fx.model.n();
                let times = fx.model.grid().sample_times(SAMPLES_PER_INTERVAL);
                for _ in 0..fx.cfg.segments {
                    let c: Vec<[f64; 4]> = (0..n)
                        .map(|_| [0; 4].map(|_: i32| rng.gen_range(-1.0..1.0)))
                        .collect();
                    let poly = |t: f64| -> (Vec<f64>, Vec<f64>) {
                        (
                            c.iter()
                                .map(|k| k[0] + t * (k[1] + t * (k[2] + t * k[3])))
                                .collect(),
                            c.iter()
                                .map(|k| k[1] + t * (2.0 * k[2] + 3.0 * t * k[3]))
                                .collect(),
                        )
                    };
                    let seg = SegmentC1::from_fn(fx.model.grid().clone(), n, poly);
                    let mut worst = 0.0f64;
                    for &t in &times {
                        let (v, d) = poly(t);
                        worst = worst.max(max_abs_diff(&seg.eval(t)?, &v));
                        worst = worst.max(max_abs_diff(&seg.eval_deriv(t)?, &d));
                    }
                    acc.add(worst);
                }
                acc.done()
            }),
        ),
    ]
}

fn model_checks() -> Vec<CheckDef> {
    vec![
        def(
            "model.registration",
            "gradients of d_k and g agree with finite differences at registration",
            0.0,
            Box::new(|_, _| {
                let acc = Acc {
                    samples: 1,
                    worst: 0.0,
                };
                acc.done_with("model passed its registration self-check".into())
            }),
        ),
        def(
            "model.linearity",
            "L, Df(phi) and its continuous extension are linear",
            1e-10,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(m, rng)?;
                    let (c1, c2) = (fx.segment(rng), fx.segment(rng));
                    let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                    let comb = c1.lin_comb(a, b, &c2)?;
                    let lin = |u: &[f64], v: &[f64], w: &[f64]| -> f64 {
                        let rhs: Vec<f64> = u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
                        max_abs_diff(w, &rhs)
                    };
                    acc.add(lin(&m.apply_l(&c1)?, &m.apply_l(&c2)?, &m.apply_l(&comb)?));
                    acc.max(lin(
                        &m.df(&phi, &c1)?,
                        &m.df(&phi, &c2)?,
                        &m.df(&phi, &comb)?,
                    ));
                    let (e1, e2, ec) = (c1.to_c0(), c2.to_c0(), comb.to_c0());
                    acc.max(lin(
                        &m.df_ext(&phi, &e1)?,
                        &m.df_ext(&phi, &e2)?,
                        &m.df_ext(&phi, &ec)?,
                    ));
                }
                acc.done()
            }),
        ),
        def(
            "model.df_fd",
            "Df(phi) chi matches central differences of f (relative)",
            1e-5,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.segments {
                    let phi = sample_in_u(m, rng)?;
                    let chi = fx.segment(rng);
                    acc.add(df_fd_error(m, &phi, &chi)?);
                }
                acc.done()
            }),
        ),
        def(
            "model.df_ext_restriction",
            "the continuous extension of Df equals Df on C^1 arguments",
            0.0,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(m, rng)?;
                    let chi = fx.segment(rng);
                    let ext: &dyn Continuous = &chi;
                    acc.add(max_abs_diff(&m.df(&phi, &chi)?, &m.df_ext(&phi, ext)?));
                }
                acc.done()
            }),
        ),
        def(
            "model.membership_consistency",
            "membership agrees with the pointwise test d_k(L phi) <= zero_tol",
            0.0,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.segments {
                    let phi = random_segment(rng, m.grid(), m.n(), 1.5 * SAMPLE_AMPLITUDE);
                    let w = m.apply_l(&phi)?;
                    let expected = match (m.in_w(&w), m.hat_at(&phi, &w)) {
                        (true, Ok(v)) if m.in_v(&v) => {
                            let d = m.delays_at(&w)?;
                            Membership::InU(DelaySet::from_indices(
                                (0..d.len()).filter(|&k| d[k] <= m.zero_tol()),
                            ))
                        }
                        _ => Membership::OutsideU,
                    };
                    acc.add(if m.membership(&phi) == expected {
                        0.0
                    } else {
                        1.0
                    });
                }
                acc.done_with("residual counts disagreements".into())
            }),
        ),
        def(
            "model.shift_invariance",
            "f(phi + psi) = f(phi) when L psi = 0 and psi vanishes at the delayed times",
            1e-10,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(m, rng)?;
                    let w = m.apply_l(&phi)?;
                    let j = m.classify(&w)?;
                    let z = if j == m.all_delays() {
                        -m.r() / 2.0
                    } else {
                        -dmin_j(m, j, &w)?
                    };
                    let mut psi = SegmentC1::zeros(m.grid().clone(), m.n());
                    for nu in 0..m.n() {
                        psi.axpy(rng.gen_range(-1.0..1.0), &make_vector_bump(m, nu, z)?)?;
                    }
                    acc.add(max_abs_diff(&m.rhs_f(&phi.add(&psi)?)?, &m.rhs_f(&phi)?));
                }
                acc.done()
            }),
        ),
    ]
}

/// `max_mu |Df(phi) chi - (f(phi + e chi) - f(phi - e chi)) / 2e| / (1 + |fd|)`.
pub fn df_fd_error(m: &Model, phi: &SegmentC1, chi: &SegmentC1) -> Result<f64> {
    let eps = crate::model::FD_STEP;
    let fp = m.rhs_f(&phi.lin_comb(1.0, eps, chi)?)?;
    let fm = m.rhs_f(&phi.lin_comb(1.0, -eps, chi)?)?;
    let d = m.df(phi, chi)?;
    Ok(d.iter()
        .enumerate()
        .map(|(mu, dv)| {
            let fd = (fp[mu] - fm[mu]) / (2.0 * eps);
            (dv - fd).abs() / fd.abs().max(1.0)
        })
        .fold(0.0, f64::max))
}

fn bump_checks() -> Vec<CheckDef> {
    vec![
        def(
            "bump.certificates",
            "phi'(0) = 1, lambda phi = 0, phi = 0 on [-r, z] and at 0",
            crate::bump::CERTIFICATE_TOL,
            Box::new(|fx, rng| {
                let grid = fx.model.grid();
                let r = grid.r();
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let lambda = random_functional(rng, grid, 3);
                    let z = rng.gen_range(-r..-r / 4.0);
                    let bump = make_bump(&BumpRequest::new(grid.clone(), lambda.clone(), z))?;
                    acc.add(bump_residual(&bump.segment, &lambda, z)?);
                }
                acc.done()
            }),
        ),
        def(
            "bump.determinism",
            "identical requests give identical bumps",
            0.0,
            Box::new(|fx, rng| {
                let grid = fx.model.grid();
                let r = grid.r();
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let lambda = random_functional(rng, grid, 3);
                    let z = rng.gen_range(-r..-r / 4.0);
                    let req = BumpRequest::new(grid.clone(), lambda, z);
                    acc.add(dist(&make_bump(&req)?.segment, &make_bump(&req)?.segment)?);
                }
                acc.done()
            }),
        ),
        def(
            "bump.vector_bumps",
            "eta e_nu has slope e_nu at 0, L(eta e_nu) = 0 and vanishes left of z",
            crate::bump::CERTIFICATE_TOL,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let nu = rng.gen_range(0..m.n());
                    let z = rng.gen_range(-m.r()..-m.r() / 4.0);
                    let eta = make_vector_bump(m, nu, z)?;
                    let mut e = vec![0.0; m.n()];
                    e[nu] = 1.0;
                    let mut worst = max_abs_diff(eta.deriv_at_zero(), &e)
                        .max(max_abs(eta.value_at_zero()))
                        .max(max_abs(&m.apply_l(&eta)?));
                    for t in m
                        .grid()
                        .sample_times(SAMPLES_PER_INTERVAL)
                        .into_iter()
                        .filter(|&t| t <= z)
                    {
                        worst = worst
                            .max(max_abs(&eta.eval(t)?))
                            .max(max_abs(&eta.eval_deriv(t)?));
                    }
                    acc.add(worst);
                }
                acc.done()
            }),
        ),
    ]
}

/// The four bump conditions evaluated directly on the segment.
pub fn bump_residual(phi: &SegmentC1, lambda: &crate::bump::Functional, z: f64) -> Result<f64> {
    let mut worst = (phi.deriv_at_zero()[0] - 1.0).abs();
    worst = worst.max(max_abs(&lambda.apply(phi)?));
    worst = worst.max(phi.value_at_zero()[0].abs());
    for t in phi
        .grid()
        .sample_times(SAMPLES_PER_INTERVAL)
        .into_iter()
        .filter(|&t| t <= z)
    {
        worst = worst
            .max(phi.eval(t)?[0].abs())
            .max(phi.eval_deriv(t)?[0].abs());
    }
    Ok(worst)
}

/// Checks that hold for both chart kinds.
fn chart_checks(kind: Kind) -> Vec<CheckDef> {
    let p = kind.prefix();
    vec![
        def(
            format!("{p}.frame_identities"),
            "(Y x)(0) = 0, (Y x)'(0) = x, L(Y x) = 0, Y x = 0 on [-r, -d_k(w)] for positive d_k",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let m = &fx.model;
                    let times = m.grid().sample_times(SAMPLES_PER_INTERVAL);
                    for _ in 0..fx.cfg.pairs {
                        let w = fx.frame_point(chart, rng, 0.0)?;
                        let x = random_vec(rng, m.n(), 2.0);
                        let yx = fx.frame_at(chart, &w, &x)?;
                        let mut worst = max_abs(yx.value_at_zero())
                            .max(max_abs_diff(yx.deriv_at_zero(), &x))
                            .max(max_abs(&m.apply_l(&yx)?));
                        let j = chart.stratum();
                        for (k, &d) in m.delays_at(&w)?.iter().enumerate() {
                            if j.contains(k) {
                                continue;
                            }
                            for &t in times.iter().filter(|&&t| t <= -d) {
                                worst = worst.max(max_abs(&yx.eval(t)?));
                            }
                        }
                        acc.add(worst);
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.projection"),
            "R is idempotent, fixes X_0 and has zero slope at 0",
            1e-12,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.in_chart(chart, rng)?;
                        let p = chart.project(&phi)?;
                        let chi = fx.x0(chart, rng)?;
                        acc.add(
                            dist(&chart.project(&p)?, &p)?
                                .max(max_abs(p.deriv_at_zero()))
                                .max(dist(&chart.project(&chi)?, &chi)?),
                        );
                        if let Chart::AllDelays(c) = chart {
                            let psi = fx.segment(rng);
                            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                            let lhs = c.project(&phi.lin_comb(a, b, &psi)?)?;
                            let rhs = p.lin_comb(a, b, &c.project(&psi)?)?;
                            acc.max(dist(&lhs, &rhs)?);
                        }
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.invariance"),
            "phi + Y(L phi) x stays in U_J and f(phi + Y(L phi) x) = f(phi)",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let m = &fx.model;
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.in_chart(chart, rng)?;
                        let x = random_vec(rng, m.n(), 2.0);
                        let shifted = phi.add(&chart.frame_apply(&phi, &x)?)?;
                        if m.membership(&shifted) != Membership::InU(chart.stratum()) {
                            acc.add(f64::INFINITY);
                            continue;
                        }
                        acc.add(max_abs_diff(&m.rhs_f(&shifted)?, &m.rhs_f(&phi)?));
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.round_trip"),
            "invert(project(phi)) = phi on X_fJ",
            1e-9,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.on_manifold(chart, rng)?;
                        acc.add(dist(&chart.invert(&chart.project(&phi)?)?.phi, &phi)?);
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.x0_round_trip"),
            "project(invert(chi)) = chi on X_0 and invert(chi) lies on X_f",
            1e-9,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let chi = fx.x0(chart, rng)?;
                        let inv = chart.invert(&chi)?;
                        acc.add(
                            dist(&chart.project(&inv.phi)?, &chi)?
                                .max(fx.model.on_manifold_residual(&inv.phi)?),
                        );
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.newton_iterations"),
            "chart inversions converge within 20 Newton iterations",
            20.0,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let chi = fx.x0(chart, rng)?;
                        acc.add(chart.invert(&chi)?.solution.iterations as f64);
                        let phi = fx.in_chart(chart, rng)?;
                        acc.add(chart.invert(&chart.project(&phi)?)?.solution.iterations as f64);
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.chart_range"),
            "for phi in the chart domain, invert(project(phi)) is on X_f with the same image",
            1e-9,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.in_chart(chart, rng)?;
                        let image = chart.project(&phi)?;
                        let psi = chart.invert(&image)?.phi;
                        acc.add(
                            fx.model
                                .on_manifold_residual(&psi)?
                                .max(dist(&chart.project(&psi)?, &image)?),
                        );
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.injectivity"),
            "distinct points of X_fJ have distinct chart images",
            0.0,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let a = fx.on_manifold(chart, rng)?;
                        let b = fx.on_manifold(chart, rng)?;
                        let collide = dist(&a, &b)? > 0.0
                            && dist(&chart.project(&a)?, &chart.project(&b)?)? == 0.0;
                        acc.add(if collide { 1.0 } else { 0.0 });
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.almost_graph_inverse"),
            "B(A(phi)) = phi and A(B(phi)) = phi",
            1e-9,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.in_chart(chart, rng)?;
                        let ba = chart.almost_graph_inv(&chart.almost_graph(&phi)?)?;
                        let ab = chart.almost_graph(&chart.almost_graph_inv(&phi)?)?;
                        acc.add(dist(&ba, &phi)?.max(dist(&ab, &phi)?));
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.almost_graph_fixes"),
            "A(chi) = chi on X_0 ∩ X_f",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let chi = fx.x0_on_manifold(chart, rng)?;
                        acc.add(dist(&chart.almost_graph(&chi)?, &chi)?);
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.almost_graph_flattens"),
            "A(phi) = project(phi) and A(phi)'(0) = 0 on X_f",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.on_manifold(chart, rng)?;
                        let a = chart.almost_graph(&phi)?;
                        acc.add(max_abs(a.deriv_at_zero()).max(dist(&a, &chart.project(&phi)?)?));
                    }
                    Ok(())
                })
            }),
        ),
        def(
            format!("{p}.tangent_lift"),
            "the lift of eta is tangent to X_f and the chart derivative maps it back to eta",
            1e-9,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let m = &fx.model;
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.on_manifold(chart, rng)?;
                        let eta = random_x0(rng, m.grid(), m.n(), SAMPLE_AMPLITUDE);
                        let chi = chart.tangent_lift(&phi, &eta)?;
                        acc.add(
                            m.tangent_residual(&phi, &chi)?
                                .max(dist(&chart.derivative(&phi, &chi)?, &eta)?),
                        );
                    }
                    Ok(())
                })
            }),
        ),
    ]
}

fn positive_chart_checks() -> Vec<CheckDef> {
    let kind = Kind::Positive;
    vec![
        def(
            "chart_j.frame_derivative_identities",
            "(DY(w) v x)(0) = 0, (DY(w) v x)'(0) = 0, L(DY(w) v x) = 0",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let Chart::Positive(c) = chart else { return Ok(()) };
                    let m = &fx.model;
                    for _ in 0..fx.cfg.pairs {
                        let w = fx.frame_point(chart, rng, 0.0)?;
                        let v = random_vec(rng, w.len(), 1.0);
                        let x = random_vec(rng, m.n(), 2.0);
                        let d = c.frame().dy_apply(&w, &v, &x)?;
                        acc.add(
                            max_abs(d.value_at_zero())
                                .max(max_abs(d.deriv_at_zero()))
                                .max(max_abs(&m.apply_l(&d)?)),
                        );
                    }
                    Ok(())
                })
            }),
        ),
        def(
            "chart_j.dy_fd",
            "DY(w) v x matches central differences in w (relative)",
            1e-4,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let Chart::Positive(c) = chart else { return Ok(()) };
                    let m = &fx.model;
                    let eps = 1e-5;
                    for _ in 0..fx.cfg.pairs {
                        let w = fx.frame_point(chart, rng, 10.0 * eps)?;
                        let v = crate::sampling::random_direction(rng, w.len().max(1));
                        let v = &v[..w.len()];
                        let x = random_vec(rng, m.n(), 2.0);
                        let d = c.frame().dy_apply(&w, v, &x)?;
                        let shift = |s: f64| -> Vec<f64> { w.iter().zip(v).map(|(a, b)| a + s * b).collect() };
                        let fd = c
                            .frame()
                            .apply(&shift(eps), &x)?
                            .lin_comb(0.5 / eps, -0.5 / eps, &c.frame().apply(&shift(-eps), &x)?)?;
                        acc.add(dist(&d, &fd)? / (1.0 + fd.node_max()));
                    }
                    Ok(())
                })
            }),
        ),
        def(
            "chart_j.derivative_fd",
            "DR(phi) chi matches central differences of R (relative)",
            1e-4,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let eps = 1e-5;
                    for _ in 0..fx.cfg.pairs {
                        let phi = fx.in_chart(chart, rng)?;
                        let chi = fx.segment(rng);
                        let plus = phi.lin_comb(1.0, eps, &chi)?;
                        let minus = phi.lin_comb(1.0, -eps, &chi)?;
                        if !fx.admissible(chart, &plus)? || !fx.admissible(chart, &minus)? {
                            continue;
                        }
                        let fd = chart.project(&plus)?.lin_comb(0.5 / eps, -0.5 / eps, &chart.project(&minus)?)?;
                        acc.add(dist(&chart.derivative(&phi, &chi)?, &fd)? / (1.0 + fd.node_max()));
                    }
                    Ok(())
                })
            }),
        ),
        def(
            "chart_j.frame_independence",
            "the columns of Y(w) are linearly independent (residual 1 / smallest singular value)",
            1e8,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let Chart::Positive(c) = chart else { return Ok(()) };
                    for _ in 0..fx.cfg.pairs {
                        let w = fx.frame_point(chart, rng, 0.0)?;
                        let y = c.frame().y(&w)?;
                        let n = y.n();
                        let rows = 2 * y.column(0).values().len();
                        let a = DMatrix::from_fn(rows, n, |i, nu| {
                            let col = y.column(nu);
                            let half = rows / 2;
                            if i < half {
                                col.values()[i]
                            } else {
                                col.derivs()[i - half]
                            }
                        });
                        let smin = a.singular_values().min();
                        acc.add(1.0 / smin);
                    }
                    Ok(())
                })
            }),
        ),
        def(
            "chart_j.offset",
            "the offset Y(L chi) f(R^{-1} chi) vanishes on X_0 ∩ X_f and has nonzero slope at 0 otherwise",
            1e-10,
            Box::new(move |fx, rng| {
                over_charts(fx, kind, rng, |fx, chart, rng, acc| {
                    let Chart::Positive(c) = chart else { return Ok(()) };
                    for _ in 0..fx.cfg.pairs {
                        let chi = fx.x0_on_manifold(chart, rng)?;
                        acc.add(c.offset(&chi)?.node_max());
                        let chi = fx.x0(chart, rng)?;
                        let off = c.offset(&chi)?;
                        if off.node_max() > 1e-10 && max_abs(off.deriv_at_zero()) == 0.0 {
                            acc.add(f64::INFINITY);
                        }
                    }
                    Ok(())
                })
            }),
        ),
    ]
}

fn atlas_checks() -> Vec<CheckDef> {
    vec![
        def(
            "atlas.partition",
            "classify(w) is the unique J with d_k(w) <= zero_tol exactly for k in J",
            0.0,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.segments {
                    let w = match m.w_box() {
                        Some(b) => b.sample(rng),
                        None => m.apply_l(&fx.segment(rng))?,
                    };
                    if !m.in_w(&w) {
                        continue;
                    }
                    let d = m.delays_at(&w)?;
                    let j = crate::atlas::classify(m, &w)?;
                    let bad = (0..d.len())
                        .filter(|&k| j.contains(k) != (d[k] <= m.zero_tol()))
                        .count()
                        + usize::from(!j.is_subset_of_full(m.k()));
                    acc.add(bad as f64);
                }
                acc.done_with("residual counts disagreements".into())
            }),
        ),
        def(
            "atlas.lift_residual",
            "lifted segments satisfy phi'(0) = f(phi)",
            1e-10,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(&fx.model, rng)?;
                    acc.add(
                        fx.model
                            .on_manifold_residual(&lift_to_manifold(&fx.model, &phi)?.phi)?,
                    );
                }
                acc.done()
            }),
        ),
        def(
            "atlas.lift_preservation",
            "the lift keeps L phi, hat(phi) and the stratum",
            1e-12,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(m, rng)?;
                    let lifted = lift_to_manifold(m, &phi)?.phi;
                    if m.membership(&lifted) != m.membership(&phi) {
                        acc.add(f64::INFINITY);
                        continue;
                    }
                    acc.add(
                        max_abs_diff(&m.apply_l(&lifted)?, &m.apply_l(&phi)?)
                            .max(max_abs_diff(&m.hat(&lifted)?, &m.hat(&phi)?)),
                    );
                }
                acc.done()
            }),
        ),
        def(
            "atlas.lift_idempotent",
            "lifting a lifted segment changes nothing",
            1e-12,
            Box::new(|fx, rng| {
                let mut acc = Acc::default();
                for _ in 0..fx.cfg.pairs {
                    let phi = sample_in_u(&fx.model, rng)?;
                    let once = lift_to_manifold(&fx.model, &phi)?.phi;
                    let twice = lift_to_manifold(&fx.model, &once)?.phi;
                    acc.add(dist(&once, &twice)?);
                }
                acc.done()
            }),
        ),
        def(
            "atlas.witness_coverage",
            "every witness is on X_f and round-trips through its chart",
            1e-9,
            Box::new(|fx, _| {
                let mut acc = Acc::default();
                for j in fx.atlas.strata() {
                    let entry = fx.atlas.entry(j).expect("listed stratum");
                    for phi in &entry.witnesses {
                        let back = entry.chart.invert(&entry.chart.project(phi)?)?.phi;
                        acc.add(dist(&back, phi)?.max(fx.model.on_manifold_residual(phi)?));
                    }
                }
                acc.done()
            }),
        ),
        def(
            "atlas.strata",
            "the atlas has exactly the expected strata, at most 2^k of them",
            0.0,
            Box::new(|fx, _| {
                let found: BTreeSet<DelaySet> = fx.atlas.strata().collect();
                let Some(expected) = &fx.expected else {
                    return Ok(Run::Skipped(
                        "no expected strata declared for this model".into(),
                    ));
                };
                let expected: BTreeSet<DelaySet> = expected.iter().copied().collect();
                let bound_ok = (found.len() as u128) <= 1u128 << fx.model.k();
                let acc = Acc {
                    samples: 1,
                    worst: if found == expected && bound_ok {
                        0.0
                    } else {
                        1.0
                    },
                };
                let list = |s: &BTreeSet<DelaySet>| {
                    s.iter()
                        .map(|j| j.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                acc.done_with(format!(
                    "found [{}], expected [{}]",
                    list(&found),
                    list(&expected)
                ))
            }),
        ),
    ]
}

/// Initial data on `X_f` for integrator checks.
fn initial_data(fx: &Fixture, rng: &mut Rng8) -> Result<SegmentC1> {
    Ok(lift_to_manifold(&fx.model, &sample_in_u(&fx.model, rng)?)?.phi)
}

/// `(x_1(t), x_2(t))` for the `ode` built-in started from the constant `(1, 1)`.
pub fn ode_exact(t: f64) -> [f64; 2] {
    let (e1, e2) = ((-t).exp(), (-2.0 * t).exp());
    [e1, 0.5 * e1 + 0.5 * e2]
}

/// Constant `(1, 1)` on the `ode` grid with the compatible slope.
pub fn ode_initial(m: &Model) -> Result<SegmentC1> {
    let mut phi = SegmentC1::constant(m.grid().clone(), &[1.0, 1.0]);
    let f = m.rhs_f(&phi)?;
    phi.set_deriv_at_zero(&f);
    Ok(phi)
}

/// Largest error against the closed-form `ode` solution over the step points.
pub fn ode_max_error(m: &Model, h: f64, t_end: f64) -> Result<f64> {
    let traj = integrate(m, &ode_initial(m)?, h, t_end)?;
    let hist = traj.history();
    let first = hist.times().len() - traj.steps().len() - 1;
    let mut worst = 0.0f64;
    for i in first..hist.times().len() {
        let exact = ode_exact(hist.times()[i]);
        worst = worst.max(max_abs_diff(hist.node_value(i), &exact));
    }
    Ok(worst)
}

/// `log2` of the ratio of the largest midpoint residuals with steps `h` and
/// `h / 2`, over steps ending after `t_from`.
pub fn residual_halving_ratio(
    m: &Model,
    phi0: &SegmentC1,
    h: f64,
    t_end: f64,
    t_from: f64,
) -> Result<f64> {
    let late = |h: f64| -> Result<f64> {
        let traj = integrate(m, phi0, h, t_end)?;
        if let Some(t) = traj.truncation() {
            return Err(Error::Precondition(format!(
                "trajectory left U at t = {}: {}",
                t.t, t.reason
            )));
        }
        Ok(traj
            .steps()
            .iter()
            .filter(|s| s.t > t_from)
            .map(|s| s.residual)
            .fold(0.0, f64::max))
    };
    Ok((late(h)? / late(0.5 * h)?).log2())
}

fn semiflow_checks() -> Vec<CheckDef> {
    vec![
        def(
            "semiflow.residual_order",
            "midpoint residual |x_t'(0) - f(x_t)| halves in log2 by 4 +- 1 per step halving (t > 2r)",
            1.0,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let r = m.r();
                let mut acc = Acc::default();
                for _ in 0..2 {
                    let phi0 = initial_data(fx, rng)?;
                    acc.add((residual_halving_ratio(m, &phi0, r / 32.0, 3.0 * r, 2.0 * r)? - 4.0).abs());
                }
                acc.done_with("residual is |log2(ratio) - 4|".into())
            }),
        ),
        def(
            "semiflow.history_continuity",
            "the history is C^1 at every joint and starts with the initial segment",
            1e-12,
            Box::new(|fx, rng| {
                let m = &fx.model;
                let mut acc = Acc::default();
                for _ in 0..4 {
                    let phi0 = initial_data(fx, rng)?;
                    let traj = integrate(m, &phi0, m.r() / 32.0, m.r())?;
                    acc.add(traj.history().joint_continuity().max(dist(&traj.segment_at(0.0)?, &phi0)?));
                }
                acc.done()
            }),
        ),
        def(
            "semiflow.ode_oracle",
            "max error against the closed-form solution on [0, 1] with h = 1e-3",
            1e-6,
            Box::new(|fx, _| {
                if fx.model.name() != "ode" {
                    return Ok(Run::Skipped("closed-form oracle only for the ode built-in".into()));
                }
                let acc = Acc {
                    samples: 1,
                    worst: ode_max_error(&fx.model, 1e-3, 1.0)?,
                };
                acc.done()
            }),
        ),
        def(
            "semiflow.convergence_order",
            "log-log slope of the error at T = 1 over h = 0.1, 0.05, 0.025 is 4 +- 0.3",
            0.3,
            Box::new(|fx, _| {
                if fx.model.name() != "ode" {
                    return Ok(Run::Skipped("closed-form oracle only for the ode built-in".into()));
                }
                let slope = convergence_slope(&fx.model, &[0.1, 0.05, 0.025])?;
                let acc = Acc {
                    samples: 3,
                    worst: (slope - 4.0).abs(),
                };
                acc.done_with(format!("slope {slope:.3}"))
            }),
        ),
    ]
}

/// Least-squares slope of `log(error at T = 1)` against `log h` for the `ode` built-in.
pub fn convergence_slope(m: &Model, hs: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .map(|&h| {
            let traj = integrate(m, &ode_initial(m)?, h, 1.0)?;
            let err = max_abs_diff(&traj.x(1.0)?, &ode_exact(1.0));
            Ok((h.ln(), err.ln()))
        })
        .collect::<Result<_>>()?;
    let k = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / k,
        pts.iter().map(|p| p.1).sum::<f64>() / k,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Every check of the suite, sorted by name.
pub fn registry() -> Vec<CheckDef> {
    let mut all = funcspace_checks();
    all.extend(model_checks());
    all.extend(bump_checks());
    all.extend(chart_checks(Kind::AllDelays));
    all.extend(chart_checks(Kind::Positive));
    all.extend(positive_chart_checks());
    all.extend(atlas_checks());
    all.extend(semiflow_checks());
    all.sort_by(|a, b| a.name.cmp(&b.name));
    all
}

pub fn check_names() -> Vec<String> {
    registry().into_iter().map(|c| c.name).collect()
}

fn environment(model: &Model, cfg: &SuiteConfig) -> Environment {
    Environment {
        grid_nodes: model.grid().len(),
        r: model.r(),
        zero_tol: model.zero_tol(),
        hypothesis: model.hypothesis().to_string(),
        seed: cfg.seed,
        segments: cfg.segments,
        pairs: cfg.pairs,
        sample_amplitude: SAMPLE_AMPLITUDE,
    }
}

fn failed_report(name: &str, env: Environment, reason: &str) -> VerificationReport {
    let checks = registry()
        .into_iter()
        .enumerate()
        .map(|(i, c)| CheckReport {
            name: c.name,
            anchor: c.anchor.to_string(),
            status: Status::Fail,
            samples: 0,
            max_residual: None,
            tolerance: c.tolerance,
            stream: i as u64 + 1,
            note: Some(reason.to_string()),
        })
        .collect();
    VerificationReport {
        model: name.to_string(),
        environment: env,
        checks,
    }
}

/// Runs every registered check against `target`. Deterministic in `cfg.seed`.
pub fn run_suite(target: &Target, cfg: &SuiteConfig) -> VerificationReport {
    let env = environment(&target.model, cfg);
    let fx = match Fixture::new(target, cfg) {
        Ok(fx) => fx,
        Err(e) => {
            return failed_report(
                target.model.name(),
                env,
                &format!("atlas construction failed: {e}"),
            )
        }
    };
    let checks = registry()
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| {
            let stream = i as u64 + 1;
            let mut rng = stream_rng(cfg.seed, stream);
            let (status, samples, max_residual, note) = match (c.body)(&fx, &mut rng) {
                Ok(Run::Done {
                    samples,
                    worst,
                    note,
                }) => {
                    let pass = worst.is_finite() && worst <= c.tolerance && samples > 0;
                    let note = if samples == 0 {
                        Some("no admissible samples".to_string())
                    } else {
                        note
                    };
                    (
                        if pass { Status::Pass } else { Status::Fail },
                        samples,
                        Some(worst),
                        note,
                    )
                }
                Ok(Run::Skipped(why)) => (Status::Skipped, 0, None, Some(why)),
                Err(e) => (Status::Fail, 0, None, Some(format!("error: {e}"))),
            };
            CheckReport {
                name: c.name,
                anchor: c.anchor.to_string(),
                status,
                samples,
                max_residual: max_residual.map(|r| if r.is_finite() { r } else { f64::MAX }),
                tolerance: c.tolerance,
                stream,
                note,
            }
        })
        .collect();
    VerificationReport {
        model: target.model.name().to_string(),
        environment: env,
        checks,
    }
}

/// Builds a built-in and runs the suite on it. A model that fails its
/// registration self-check yields a report whose every check fails.
pub fn run_builtin(id: &str, params: &Params, cfg: &SuiteConfig) -> Result<VerificationReport> {
    match builtin::by_id(id, params) {
        Ok(b) => Ok(run_suite(&b.into(), cfg)),
        Err(Error::Registration(reason)) => {
            let env = Environment {
                grid_nodes: params.nodes.unwrap_or(crate::funcspace::DEFAULT_NODES),
                r: f64::NAN,
                zero_tol: params.zero_tol.unwrap_or(crate::model::DEFAULT_ZERO_TOL),
                hypothesis: String::new(),
                seed: cfg.seed,
                segments: cfg.segments,
                pairs: cfg.pairs,
                sample_amplitude: SAMPLE_AMPLITUDE,
            };
            Ok(failed_report(
                id,
                env,
                &format!("model registration failed: {reason}"),
            ))
        }
        Err(e) => Err(e),
    }
}
