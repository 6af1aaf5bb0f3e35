//! Random segments, directions and functionals for property checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bump::{Functional, RowFunctional};
use crate::error::{Error, Result};
use crate::funcspace::{Grid, SegmentC1};
use crate::model::{max_abs, Model};

/// Smooth random segment: per component a constant plus three sinusoids,
/// with exact derivatives at the nodes. Values stay below `amp`.
pub fn random_segment<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &Arc<Grid>,
    n: usize,
    amp: f64,
) -> SegmentC1 {
    let terms: Vec<[(f64, f64, f64); 4]> = (0..n)
        .map(|_| {
            let mut t = [(0.0, 0.0, 0.0); 4];
            t[0] = (rng.gen_range(-amp..amp) * 0.25, 0.0, 0.0);
            for slot in t.iter_mut().skip(1) {
                *slot = (
                    rng.gen_range(-amp..amp) * 0.25,
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                );
            }
            t
        })
        .collect();
    SegmentC1::from_fn(grid.clone(), n, |t| {
        let mut v = vec![0.0; n];
        let mut d = vec![0.0; n];
        for (nu, comp) in terms.iter().enumerate() {
            v[nu] = comp[0].0;
            for &(a, w, th) in &comp[1..] {
                v[nu] += a * (w * t + th).sin();
                d[nu] += a * w * (w * t + th).cos();
            }
        }
        (v, d)
    })
}

/// Random element of `X_0` (zero slope at 0).
pub fn random_x0<R: Rng + ?Sized>(rng: &mut R, grid: &Arc<Grid>, n: usize, amp: f64) -> SegmentC1 {
    let mut s = random_segment(rng, grid, n, amp);
    s.set_deriv_at_zero(&vec![0.0; n]);
    s
}

pub fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

/// Unit-length random direction.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = random_vec(rng, n, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Random functional with up to `max_rows` rows of one to three point terms.
/// Points lie on the half-grid (nodes and midpoints), so no subinterval
/// carries two distinct interior evaluation points.
pub fn random_functional<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, max_rows: usize) -> Functional {
    let half_points = 2 * (grid.len() - 1);
    let rows = rng.gen_range(0..=max_rows);
    Functional {
        rows: (0..rows)
            .map(|_| RowFunctional {
                terms: (0..rng.gen_range(1..=3))
                    .map(|_| {
                        let k = rng.gen_range(0..=half_points);
                        let i = k / 2;
                        let t = if k % 2 == 0 || i + 1 >= grid.len() {
                            grid.node(i.min(grid.len() - 1))
                        } else {
                            0.5 * (grid.node(i) + grid.node(i + 1))
                        };
                        (t, rng.gen_range(-2.0..2.0))
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// A point of `X_0 ∩ X_f` near the equilibrium `0`: a combination of
/// tent-cubics that vanishes at `0` and at every delayed time of the zero
/// segment and is annihilated by `L`. Requires `g(0) = 0`.
pub fn x0_on_manifold<R: Rng + ?Sized>(rng: &mut R, model: &Model, amp: f64) -> Result<SegmentC1> {
    let grid = model.grid();
    let n = model.n();
    let m = grid.len();
    let zero = SegmentC1::zeros(grid.clone(), n);
    if max_abs(&model.rhs_f(&zero)?) != 0.0 {
        return Err(Error::Precondition(
            "the zero segment is not an equilibrium".into(),
        ));
    }
    let w0 = model.apply_l(&zero)?;
    let delayed: Vec<f64> = model.delays_at(&w0)?.iter().map(|d| -d).collect();
    let mut out = SegmentC1::zeros(grid.clone(), n);
    for nu in 0..n {
        let mut rows = model.l().column_functional(nu).rows;
        rows.extend(delayed.iter().map(|&t| RowFunctional::point(t)));
        let interior: Vec<usize> = (1..m - 1).collect();
        let a = DMatrix::from_fn(rows.len(), interior.len(), |r, c| {
            rows[r]
                .terms
                .iter()
                .map(|&(t, w)| w * crate::bump::tent_value(grid, interior[c], t))
                .sum()
        });
        let c = DVector::from_fn(interior.len(), |_, _| rng.gen_range(-amp..amp));
        // project onto the null space of a
        let correction = if rows.is_empty() {
            DVector::zeros(interior.len())
        } else {
            let rhs = &a * &c;
            a.clone()
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Precondition(e.to_string()))?
        };
        let c = c - correction;
        for (k, &i) in interior.iter().enumerate() {
            out.values_mut()[i * n + nu] = c[k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{self, Params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_segment_is_bounded_and_seeded() {
        let g = Grid::uniform(2.0, 33).unwrap();
        let a = random_segment(&mut ChaCha8Rng::seed_from_u64(1), &g, 2, 0.5);
        let b = random_segment(&mut ChaCha8Rng::seed_from_u64(1), &g, 2, 0.5);
        assert_eq!(a, b);
        assert!(a.norm_c0() <= 0.5);
    }

    #[test]
    fn random_x0_has_zero_slope() {
        let g = Grid::uniform(1.0, 17).unwrap();
        let s = random_x0(&mut ChaCha8Rng::seed_from_u64(2), &g, 3, 1.0);
        assert_eq!(s.deriv_at_zero(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn x0_on_manifold_for_builtins() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for b in builtin::all(&Params::default()).unwrap() {
            let m = &b.model;
            let chi = x0_on_manifold(&mut rng, m, 0.3).unwrap();
            assert!(chi.node_max() > 0.0);
            assert_eq!(max_abs(chi.deriv_at_zero()), 0.0);
            assert!(
                m.on_manifold_residual(&chi).unwrap() <= 1e-12,
                "{}",
                m.name()
            );
        }
    }
}
