//! Helpers shared by the integration tests. Everything that serves as an
//! expected value is assembled here from primitive evaluations, not taken
//! from the library routine under test.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use solman::atlas::Chart;
use solman::harness::sample_in_u;
use solman::sampling::{random_segment, random_x0};
use solman::{Membership, Model, SegmentC1};

pub const TRIES: usize = 4000;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest difference of values and node slopes.
pub fn dist(a: &SegmentC1, b: &SegmentC1) -> f64 {
    max_diff(a.values(), b.values()).max(max_diff(a.derivs(), b.derivs()))
}

/// `g(phi(-d_1(L phi)), ..., phi(-d_k(L phi)))`, assembled from `L`, the
/// delays, point evaluation and `g`.
pub fn f_oracle(m: &Model, phi: &SegmentC1) -> Vec<f64> {
    let w = m.apply_l(phi).unwrap();
    let mut v = Vec::new();
    for d in m.delays_at(&w).unwrap() {
        v.extend(phi.eval(-d).unwrap());
    }
    m.g_value(&v).unwrap()
}

/// `|phi'(0) - f(phi)|`.
pub fn manifold_residual(m: &Model, phi: &SegmentC1) -> f64 {
    max_diff(phi.deriv_at_zero(), &f_oracle(m, phi))
}

/// Dense sample times of `[a, b]`, `per` points per grid cell of width `h`.
pub fn dense(a: f64, b: f64, h: f64, per: usize) -> Vec<f64> {
    let cells = ((b - a) / h).ceil().max(1.0) as usize * per;
    (0..=cells)
        .map(|i| a + (b - a) * i as f64 / cells as f64)
        .collect()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `int_a^b f` with the given Gauss–Legendre rule.
pub fn integrate_gl(rule: &[(f64, f64)], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

pub fn segment(m: &Model, rng: &mut ChaCha8Rng) -> SegmentC1 {
    random_segment(rng, m.grid(), m.n(), 1.0)
}

/// Whether `phi` lies in the stratum of `chart` and its coverage.
pub fn admissible(m: &Model, chart: &Chart, phi: &SegmentC1) -> bool {
    m.membership(phi) == Membership::InU(chart.stratum()) && chart.covers(&m.apply_l(phi).unwrap())
}

pub fn draw(
    m: &Model,
    chart: &Chart,
    rng: &mut ChaCha8Rng,
    mut gen: impl FnMut(&mut ChaCha8Rng) -> SegmentC1,
) -> SegmentC1 {
    for _ in 0..TRIES {
        let phi = gen(rng);
        if admissible(m, chart, &phi) {
            return phi;
        }
    }
    panic!("no admissible sample for the chart on {}", chart.stratum());
}

pub fn in_chart(m: &Model, chart: &Chart, rng: &mut ChaCha8Rng) -> SegmentC1 {
    draw(m, chart, rng, |r| segment(m, r))
}

pub fn on_manifold(m: &Model, chart: &Chart, rng: &mut ChaCha8Rng) -> SegmentC1 {
    draw(m, chart, rng, |r| {
        solman::lift_to_manifold(m, &segment(m, r)).unwrap().phi
    })
}

pub fn in_x0(m: &Model, chart: &Chart, rng: &mut ChaCha8Rng) -> SegmentC1 {
    draw(m, chart, rng, |r| random_x0(r, m.grid(), m.n(), 1.0))
}

pub fn in_u(m: &Model, rng: &mut ChaCha8Rng) -> SegmentC1 {
    sample_in_u(m, rng).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}
