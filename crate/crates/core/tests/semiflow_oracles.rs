//! Integrator against solutions known in closed form.

mod common;

use nalgebra::DMatrix;

use common::*;
use solman::builtin::{self, Params};
use solman::model::{BoxDomain, DelayFn, Domain, RhsG};
use solman::{integrate, DelaySet, Grid, Hypothesis, LinearMapL, Model, SegmentC1};

/// `x'(t) = -x(t - 1)` on `[-1, 0]`.
fn unit_delay() -> Model {
    let grid = Grid::uniform(1.0, 33).unwrap();
    Model::builder("unit_delay", grid.clone(), 1)
        .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::identity(1, 1)))
        .delay(DelayFn::constant(1.0, 1))
        .rhs(RhsG::new(|v| vec![-v[0]], |_| -DMatrix::identity(1, 1)))
        .w_domain(Domain::with_box(BoxDomain::cube(1, 3.0)))
        .v_domain(Domain::with_box(BoxDomain::cube(1, 3.0)))
        .hypothesis(Hypothesis::ConstantStratum {
            stratum: DelaySet::empty(),
        })
        .witness(SegmentC1::zeros(grid, 1))
        .build()
        .unwrap()
}

/// Method of steps from `phi(t) = t`: `t - t^2/2` on `[0, 1]`, then
/// `1/2 - s^2/2 + s^3/6` with `s = t - 1` on `[1, 2]`.
fn unit_delay_solution(t: f64) -> f64 {
    if t <= 1.0 {
        t - t * t / 2.0
    } else {
        let s = t - 1.0;
        0.5 - s * s / 2.0 + s * s * s / 6.0
    }
}

#[test]
fn piecewise_polynomial_solution_is_exact() {
    let m = unit_delay();
    let phi = SegmentC1::from_fn(m.grid().clone(), 1, |t| (vec![t], vec![1.0]));
    assert_eq!(manifold_residual(&m, &phi), 0.0);
    let traj = integrate(&m, &phi, 1.0 / 16.0, 2.0).unwrap();
    for i in 0..=64 {
        let t = i as f64 / 32.0;
        assert!(
            (traj.x(t).unwrap()[0] - unit_delay_solution(t)).abs() <= 1e-12,
            "t = {t}"
        );
    }
    // the residual vanishes up to rounding since every stage is exact
    assert!(traj.max_residual() <= 1e-12);
}

#[test]
fn linear_system_converges_at_fourth_order() {
    let m = builtin::ode(&Params::default()).unwrap().model;
    let mut phi = SegmentC1::constant(m.grid().clone(), &[1.0, 1.0]);
    phi.set_deriv_at_zero(&f_oracle(&m, &phi));
    let exact = [
        (-1.0f64).exp(),
        0.5 * (-1.0f64).exp() + 0.5 * (-2.0f64).exp(),
    ];
    let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let x = integrate(&m, &phi, h, 1.0).unwrap().x(1.0).unwrap();
            (f64::ln(h), max_diff(&x, &exact).ln())
        })
        .collect();
    let slopes: Vec<f64> = pts
        .windows(2)
        .map(|p| (p[1].1 - p[0].1) / (p[1].0 - p[0].0))
        .collect();
    for s in slopes {
        assert!((s - 4.0).abs() <= 0.3, "slope {s}");
    }
}

#[test]
fn equilibrium_is_preserved() {
    for b in builtin::all(&Params::default()).unwrap() {
        let m = &b.model;
        let zero = SegmentC1::zeros(m.grid().clone(), m.n());
        let traj = integrate(m, &zero, m.r() / 8.0, 2.0 * m.r()).unwrap();
        assert_eq!(max_abs(&traj.x(traj.t_end()).unwrap()), 0.0, "{}", b.id);
    }
}

#[test]
fn resampled_state_stays_on_the_manifold() {
    let m = builtin::mvw(&Params::default()).unwrap().model;
    let phi0 = solman::lift_to_manifold(&m, &in_u(&m, &mut rng(5, 0)))
        .unwrap()
        .phi;
    let traj = integrate(&m, &phi0, m.r() / 64.0, 2.0 * m.r()).unwrap();
    let xt = traj.segment_at(traj.t_end()).unwrap();
    // resampling onto the coarse grid costs interpolation accuracy, not the compatibility condition
    assert!(manifold_residual(&m, &xt) <= 1e-5);
}
