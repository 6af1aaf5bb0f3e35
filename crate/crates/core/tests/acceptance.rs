//! Acceptance suite: ten criteria, one PASS/FAIL line each. Tolerances are
//! pinned below and expected values come from oracles built in test code.

mod common;

use std::time::{Duration, Instant};

use common::*;
use solman::atlas::Chart;
use solman::builtin::{self, Builtin, Params};
use solman::bump::{make_bump, BumpRequest};
use solman::harness::seeded_atlas;
use solman::sampling::{random_functional, random_x0, x0_on_manifold};
use solman::{integrate, lift_to_manifold, Atlas, DelaySet, Membership, Model, SegmentC1};

use rand::Rng;

const DF_REL_TOL: f64 = 1e-5;
const DF_BUDGET: Duration = Duration::from_secs(5);
const DF_STEP: f64 = 1e-6;
const CERT_TOL: f64 = 1e-10;
const FRAME_TOL: f64 = 1e-10;
const DY_FD_TOL: f64 = 1e-4;
const DY_FD_STEP: f64 = 1e-5;
const INVARIANCE_TOL: f64 = 1e-10;
const LIFT_RESIDUAL_TOL: f64 = 1e-10;
const LIFT_PRESERVE_TOL: f64 = 1e-12;
const ROUND_TRIP_TOL: f64 = 1e-9;
const MAX_NEWTON: usize = 20;
const AG_INVERSE_TOL: f64 = 1e-9;
const AG_FIX_TOL: f64 = 1e-10;
const AG_FLAT_TOL: f64 = 1e-10;
const TANGENT_TOL: f64 = 1e-9;
const ODE_TOL: f64 = 1e-6;
const CONST_DELAY_TOL: f64 = 1e-8;
const RATIO_RANGE: (f64, f64) = (8.0, 32.0);

const DF_PAIRS: usize = 64;
const SAMPLES: usize = 32;
const SEED: u64 = 20_240_601;

/// One measured quantity against its bound.
struct Measure {
    what: String,
    value: f64,
    bound: f64,
    upper: bool,
}

impl Measure {
    fn le(what: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            what: what.into(),
            value,
            bound,
            upper: true,
        }
    }

    fn ge(what: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            what: what.into(),
            value,
            bound,
            upper: false,
        }
    }

    fn ok(&self) -> bool {
        self.value.is_finite()
            && if self.upper {
                self.value <= self.bound
            } else {
                self.value >= self.bound
            }
    }
}

type Criterion = (&'static str, fn() -> Vec<Measure>);

fn builtins() -> Vec<Builtin> {
    builtin::all(&Params::default()).unwrap()
}

fn charts(atlas: &Atlas) -> Vec<&Chart> {
    atlas.strata().map(|j| atlas.chart(j).unwrap()).collect()
}

fn frame_at(chart: &Chart, w: &[f64], x: &[f64]) -> SegmentC1 {
    match chart {
        Chart::AllDelays(c) => c.frame().apply(x).unwrap(),
        Chart::Positive(c) => c.frame().apply(w, x).unwrap(),
    }
}

/// A point where the chart's frame is defined: the coverage box of a
/// positive-delay chart, otherwise `L phi` for an admissible `phi`.
fn frame_point(
    m: &Model,
    chart: &Chart,
    rng: &mut rand_chacha::ChaCha8Rng,
    margin: f64,
) -> Vec<f64> {
    if let Chart::Positive(c) = chart {
        if let Some(b) = c.frame().coverage_box() {
            return b.sample_inner(rng, margin);
        }
    }
    m.apply_l(&in_chart(m, chart, rng)).unwrap()
}

fn derivative_vs_differences() -> Vec<Measure> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let mut r = rng(SEED, 100 + i as u64);
        for _ in 0..DF_PAIRS {
            let phi = in_u(m, &mut r);
            let chi = segment(m, &mut r);
            let plus = f_oracle(m, &phi.lin_comb(1.0, DF_STEP, &chi).unwrap());
            let minus = f_oracle(m, &phi.lin_comb(1.0, -DF_STEP, &chi).unwrap());
            let df = m.df(&phi, &chi).unwrap();
            for mu in 0..m.n() {
                let fd = (plus[mu] - minus[mu]) / (2.0 * DF_STEP);
                worst = worst.max((df[mu] - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    let elapsed = start.elapsed();
    vec![
        Measure::le("relative gap", worst, DF_REL_TOL),
        Measure::le("seconds", elapsed.as_secs_f64(), DF_BUDGET.as_secs_f64()),
    ]
}

fn bump_certificates() -> Vec<Measure> {
    let mut worst = 0.0f64;
    for (i, b) in builtins().iter().enumerate() {
        let grid = b.model.grid();
        let r = grid.r();
        let h = r / (grid.len() - 1) as f64;
        let mut rg = rng(SEED, 200 + i as u64);
        for _ in 0..SAMPLES {
            let lambda = random_functional(&mut rg, grid, 3);
            let z = rg.gen_range(-r..-r / 4.0);
            let bump = make_bump(&BumpRequest::new(grid.clone(), lambda.clone(), z)).unwrap();
            let phi = &bump.segment;
            let slope = (phi.deriv_at_zero()[0] - 1.0).abs();
            let at_zero = phi.value_at_zero()[0].abs();
            let mut functional = 0.0f64;
            for row in &lambda.rows {
                let v: f64 = row
                    .terms
                    .iter()
                    .map(|&(t, c)| c * phi.eval(t).unwrap()[0])
                    .sum();
                functional = functional.max(v.abs());
            }
            let mut support = 0.0f64;
            for t in dense(-r, z, h, 16) {
                support = support
                    .max(phi.eval(t).unwrap()[0].abs())
                    .max(phi.eval_deriv(t).unwrap()[0].abs());
            }
            worst = worst.max(slope).max(at_zero).max(functional).max(support);
        }
    }
    vec![Measure::le("largest certificate residual", worst, CERT_TOL)]
}

fn frame_identities() -> Vec<Measure> {
    let (mut k_worst, mut j_worst, mut dj_worst, mut fd_worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let atlas = seeded_atlas(m, SEED).unwrap();
        let mut rg = rng(SEED, 300 + i as u64);
        for chart in charts(&atlas) {
            let h = m.r() / (m.grid().len() - 1) as f64;
            for _ in 0..SAMPLES {
                let w = frame_point(m, chart, &mut rg, 10.0 * DY_FD_STEP);
                let x = random_vec(&mut rg, m.n(), 2.0);
                let yx = frame_at(chart, &w, &x);
                let mut worst = max_abs(yx.value_at_zero())
                    .max(max_diff(yx.deriv_at_zero(), &x))
                    .max(max_abs(&m.apply_l(&yx).unwrap()));
                for (k, d) in m.delays_at(&w).unwrap().into_iter().enumerate() {
                    if chart.stratum().contains(k) {
                        continue;
                    }
                    for t in dense(-m.r(), -d, h, 8) {
                        worst = worst.max(max_abs(&yx.eval(t).unwrap()));
                    }
                }
                let Chart::Positive(c) = chart else {
                    k_worst = k_worst.max(worst);
                    continue;
                };
                j_worst = j_worst.max(worst);
                let v = random_vec(&mut rg, w.len(), 1.0);
                let d = c.frame().dy_apply(&w, &v, &x).unwrap();
                dj_worst = dj_worst
                    .max(max_abs(d.value_at_zero()))
                    .max(max_abs(d.deriv_at_zero()))
                    .max(max_abs(&m.apply_l(&d).unwrap()));
                let shifted =
                    |s: f64| -> Vec<f64> { w.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
                let fp = c.frame().apply(&shifted(DY_FD_STEP), &x).unwrap();
                let fm = c.frame().apply(&shifted(-DY_FD_STEP), &x).unwrap();
                let fd = fp
                    .lin_comb(0.5 / DY_FD_STEP, -0.5 / DY_FD_STEP, &fm)
                    .unwrap();
                let scale = 1.0 + max_abs(fd.values()).max(max_abs(fd.derivs()));
                fd_worst = fd_worst.max(dist(&d, &fd) / scale);
            }
        }
    }
    vec![
        Measure::le("all-delays frame", k_worst, FRAME_TOL),
        Measure::le("positive-delay frame", j_worst, FRAME_TOL),
        Measure::le("frame derivative", dj_worst, FRAME_TOL),
        Measure::le("frame derivative vs differences", fd_worst, DY_FD_TOL),
    ]
}

fn invariance() -> Vec<Measure> {
    let mut worst = 0.0f64;
    let mut strata = 0usize;
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let atlas = seeded_atlas(m, SEED).unwrap();
        let mut rg = rng(SEED, 400 + i as u64);
        for chart in charts(&atlas) {
            strata += 1;
            for _ in 0..SAMPLES {
                let phi = in_chart(m, chart, &mut rg);
                let x = random_vec(&mut rg, m.n(), 2.0);
                let shifted = phi
                    .add(&frame_at(chart, &m.apply_l(&phi).unwrap(), &x))
                    .unwrap();
                if m.membership(&shifted) != Membership::InU(chart.stratum()) {
                    worst = f64::INFINITY;
                    continue;
                }
                worst = worst.max(max_diff(&f_oracle(m, &shifted), &f_oracle(m, &phi)));
            }
        }
    }
    vec![
        Measure::le("|f(phi + Y x) - f(phi)|", worst, INVARIANCE_TOL),
        Measure::ge("strata covered", strata as f64, 4.0),
    ]
}

fn lift() -> Vec<Measure> {
    let (mut res, mut pres, mut moved) = (0.0f64, 0.0f64, 0.0f64);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let mut rg = rng(SEED, 500 + i as u64);
        for _ in 0..SAMPLES {
            let phi = in_u(m, &mut rg);
            let lifted = lift_to_manifold(m, &phi).unwrap().phi;
            res = res.max(manifold_residual(m, &lifted));
            let (w0, w1) = (m.apply_l(&phi).unwrap(), m.apply_l(&lifted).unwrap());
            pres = pres.max(max_diff(&w0, &w1));
            let mut hat0 = Vec::new();
            let mut hat1 = Vec::new();
            for d in m.delays_at(&w0).unwrap() {
                hat0.extend(phi.eval(-d).unwrap());
                hat1.extend(lifted.eval(-d).unwrap());
            }
            pres = pres.max(max_diff(&hat0, &hat1));
            if m.classify(&w0).unwrap() != m.classify(&w1).unwrap() {
                moved += 1.0;
            }
        }
    }
    vec![
        Measure::le("on-manifold residual", res, LIFT_RESIDUAL_TOL),
        Measure::le("change of L and hat", pres, LIFT_PRESERVE_TOL),
        Measure::le("stratum changes", moved, 0.0),
    ]
}

fn round_trips() -> Vec<Measure> {
    let (mut manifold, mut flat, mut iterations) = (0.0f64, 0.0f64, 0usize);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let atlas = seeded_atlas(m, SEED).unwrap();
        let mut rg = rng(SEED, 600 + i as u64);
        for chart in charts(&atlas) {
            for _ in 0..SAMPLES {
                let phi = on_manifold(m, chart, &mut rg);
                let inv = chart.invert(&chart.project(&phi).unwrap()).unwrap();
                manifold = manifold.max(dist(&inv.phi, &phi));
                iterations = iterations.max(inv.solution.iterations);

                let chi = in_x0(m, chart, &mut rg);
                let inv = chart.invert(&chi).unwrap();
                flat = flat
                    .max(dist(&chart.project(&inv.phi).unwrap(), &chi))
                    .max(manifold_residual(m, &inv.phi));
                iterations = iterations.max(inv.solution.iterations);
            }
        }
    }
    vec![
        Measure::le("invert after project", manifold, ROUND_TRIP_TOL),
        Measure::le("project after invert", flat, ROUND_TRIP_TOL),
        Measure::le("Newton iterations", iterations as f64, MAX_NEWTON as f64),
    ]
}

fn almost_graphs() -> Vec<Measure> {
    let (mut inverse, mut fixes, mut flat) = (0.0f64, 0.0f64, 0.0f64);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let atlas = seeded_atlas(m, SEED).unwrap();
        let mut rg = rng(SEED, 700 + i as u64);
        for chart in charts(&atlas) {
            for _ in 0..SAMPLES {
                let phi = in_chart(m, chart, &mut rg);
                let ba = chart
                    .almost_graph_inv(&chart.almost_graph(&phi).unwrap())
                    .unwrap();
                let ab = chart
                    .almost_graph(&chart.almost_graph_inv(&phi).unwrap())
                    .unwrap();
                inverse = inverse.max(dist(&ba, &phi)).max(dist(&ab, &phi));

                let chi = draw(m, chart, &mut rg, |r| x0_on_manifold(r, m, 0.5).unwrap());
                assert!(manifold_residual(m, &chi) <= 1e-12 && max_abs(chi.deriv_at_zero()) == 0.0);
                fixes = fixes.max(dist(&chart.almost_graph(&chi).unwrap(), &chi));

                let psi = on_manifold(m, chart, &mut rg);
                flat = flat.max(max_abs(chart.almost_graph(&psi).unwrap().deriv_at_zero()));
            }
        }
    }
    vec![
        Measure::le("A(B) and B(A) vs identity", inverse, AG_INVERSE_TOL),
        Measure::le("A on X_0 ∩ X_f vs identity", fixes, AG_FIX_TOL),
        Measure::le("slope at 0 of A on X_f", flat, AG_FLAT_TOL),
    ]
}

fn tangent_lifts() -> Vec<Measure> {
    let (mut tangent, mut back) = (0.0f64, 0.0f64);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let atlas = seeded_atlas(m, SEED).unwrap();
        let mut rg = rng(SEED, 800 + i as u64);
        for chart in charts(&atlas) {
            for _ in 0..SAMPLES {
                let phi = on_manifold(m, chart, &mut rg);
                let eta = random_x0(&mut rg, m.grid(), m.n(), 1.0);
                let chi = chart.tangent_lift(&phi, &eta).unwrap();
                // tangent space of X_f at phi: chi'(0) = Df(phi) chi
                tangent = tangent.max(max_diff(chi.deriv_at_zero(), &m.df(&phi, &chi).unwrap()));
                back = back.max(dist(&chart.derivative(&phi, &chi).unwrap(), &eta));
            }
        }
    }
    vec![
        Measure::le("tangent residual", tangent, TANGENT_TOL),
        Measure::le("chart derivative vs eta", back, TANGENT_TOL),
    ]
}

/// `x' = A x`, `A = [[-1, 0], [1/2, -2]]`, from `(1, 1)`.
fn ode_solution(t: f64) -> [f64; 2] {
    [(-t).exp(), 0.5 * (-t).exp() + 0.5 * (-2.0 * t).exp()]
}

/// `x'(t) = -tanh(gain x(t - 1))` by the method of steps, with every
/// integral done by 8-point Gauss–Legendre on cells of width `h`. Returns
/// `x(i h)` for `0 <= i h <= 2`.
fn constant_delay_oracle(phi0: &SegmentC1, gain: f64, h: f64) -> Vec<f64> {
    let rule = gauss_legendre(8);
    let g = |v: f64| -(gain * v).tanh();
    let cells = (1.0 / h).round() as usize;
    // x on [0, 1] from the history
    let mut first = vec![phi0.value_at_zero()[0]];
    for i in 0..cells {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let inc = integrate_gl(&rule, a, b, |s| g(phi0.eval(s - 1.0).unwrap()[0]));
        first.push(first[i] + inc);
    }
    let x_first = |u: f64| -> f64 {
        let i = ((u / h).floor() as usize).min(cells - 1);
        let a = i as f64 * h;
        first[i] + integrate_gl(&rule, a, u, |s| g(phi0.eval(s - 1.0).unwrap()[0]))
    };
    let mut out = first.clone();
    for i in 0..cells {
        let (a, b) = (1.0 + i as f64 * h, 1.0 + (i + 1) as f64 * h);
        let inc = integrate_gl(&rule, a, b, |s| g(x_first(s - 1.0)));
        let last = *out.last().unwrap();
        out.push(last + inc);
    }
    out
}

fn integrator() -> Vec<Measure> {
    let ode = builtin::ode(&Params::default()).unwrap().model;
    let mut phi = SegmentC1::constant(ode.grid().clone(), &[1.0, 1.0]);
    phi.set_deriv_at_zero(&f_oracle(&ode, &phi));
    let traj = integrate(&ode, &phi, 1e-3, 1.0).unwrap();
    let mut ode_err = 0.0f64;
    for s in traj.steps() {
        ode_err = ode_err.max(max_diff(&traj.x(s.t).unwrap(), &ode_solution(s.t)));
    }
    let reached_one = (traj.t_end() - 1.0).abs() < 1e-12;

    let gain = 2.0;
    let mvw = builtin::mvw(&Params::from_pairs(&[("delta_amp", 0.0), ("gain", gain)]))
        .unwrap()
        .model;
    let seed = SegmentC1::from_fn(mvw.grid().clone(), 1, |t| {
        (
            vec![0.6 * (2.0 * t).cos() + 0.1 * t],
            vec![-1.2 * (2.0 * t).sin() + 0.1],
        )
    });
    let phi0 = lift_to_manifold(&mvw, &seed).unwrap().phi;
    let h = 1.0 / 256.0;
    let oracle = constant_delay_oracle(&phi0, gain, h);
    let traj = integrate(&mvw, &phi0, h, 2.0).unwrap();
    let mut delay_err = 0.0f64;
    for (i, x) in oracle.iter().enumerate() {
        delay_err = delay_err.max((traj.x(i as f64 * h).unwrap()[0] - x).abs());
    }

    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, b) in builtins().iter().enumerate() {
        let m = &b.model;
        let r = m.r();
        let phi0 = lift_to_manifold(m, &in_u(m, &mut rng(SEED, 900 + i as u64)))
            .unwrap()
            .phi;
        let late = |h: f64| -> f64 {
            let t = integrate(m, &phi0, h, 3.0 * r).unwrap();
            assert!(t.truncation().is_none(), "{} stopped early", m.name());
            t.steps()
                .iter()
                .filter(|s| s.t > 2.0 * r)
                .map(|s| s.residual)
                .fold(0.0, f64::max)
        };
        let ratio = late(r / 32.0) / late(r / 64.0);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    vec![
        Measure::le(
            "linear system error at T = 1",
            if reached_one { ode_err } else { f64::INFINITY },
            ODE_TOL,
        ),
        Measure::le("constant-delay error", delay_err, CONST_DELAY_TOL),
        Measure::ge("smallest halving ratio", lo, RATIO_RANGE.0),
        Measure::le("largest halving ratio", hi, RATIO_RANGE.1),
    ]
}

fn strata() -> Vec<Measure> {
    let expected: [(&str, Vec<DelaySet>); 4] = [
        ("ode", vec![DelaySet::from_indices([0])]),
        ("eq1", vec![DelaySet::from_indices([0])]),
        ("mvw", vec![DelaySet::empty()]),
        ("twodelay", vec![DelaySet::empty()]),
    ];
    let mut mismatches = 0.0;
    for (id, want) in &expected {
        let b = builtin::by_id(id, &Params::default()).unwrap();
        assert_eq!(
            b.model.k(),
            if *id == "twodelay" || *id == "eq1" {
                2
            } else {
                1
            }
        );
        for seed in 0..4 {
            let got: Vec<DelaySet> = seeded_atlas(&b.model, seed).unwrap().strata().collect();
            if &got != want {
                println!("    {id} seed {seed}: got {got:?}, want {want:?}");
                mismatches += 1.0;
            }
        }
    }
    vec![Measure::le(
        "atlases with unexpected strata",
        mismatches,
        0.0,
    )]
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (
            "derivative matches central differences",
            derivative_vs_differences,
        ),
        ("bump certificates", bump_certificates),
        ("frame identities", frame_identities),
        ("invariance along the frame", invariance),
        ("lift onto the manifold", lift),
        ("chart round trips", round_trips),
        ("almost graph diffeomorphisms", almost_graphs),
        ("tangent lifts", tangent_lifts),
        ("integrator accuracy", integrator),
        ("atlas strata", strata),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let measures = run();
        let pass = measures.iter().all(Measure::ok);
        let detail: Vec<String> = measures
            .iter()
            .map(|m| {
                format!(
                    "{} {:.3e} {} {:.1e}",
                    m.what,
                    m.value,
                    if m.upper { "<=" } else { ">=" },
                    m.bound
                )
            })
            .collect();
        println!(
            "{} {:>2} {:<40} {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            detail.join("; ")
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
