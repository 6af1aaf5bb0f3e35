//! Charts for strata on which some delay stays positive.
//!
//! The frame `Y_J(w)` depends on `w = L phi`. Its columns blend bumps whose
//! supports shrink level by level, so that `Y_J(w) x` vanishes left of
//! `-min_{k not in J} d_k(w)`. Transitions between levels are quintic
//! smoothsteps in a C¹ proxy of that minimum: the minimum itself when one
//! delay is involved, a softmin otherwise.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::atlas::DelaySet;
use crate::bump::{make_component_bump, Bump};
use crate::chart_k::{require_x0, solve_offset, Inversion};
use crate::error::{Error, Result};
use crate::funcspace::{MatSegmentC1, SegmentC1};
use crate::model::{BoxDomain, Model};
use crate::solve::SolverSettings;

/// Sharpness of the softmin proxy.
pub const SOFTMIN_BETA: f64 = 50.0;
/// Random samples used to check that a coverage box lies in `W^J`.
pub const BOX_SAMPLES: usize = 256;
const BOX_SEED: u64 = 0xb0c5;
const CACHE_CAPACITY: usize = 4096;

fn complement(model: &Model, j: DelaySet) -> Result<Vec<usize>> {
    let k = model.k();
    if !j.is_subset_of_full(k) {
        return Err(Error::InvalidStratum(format!(
            "{j} is not a subset of {}",
            DelaySet::full(k)
        )));
    }
    let ks: Vec<usize> = (0..k).filter(|&i| !j.contains(i)).collect();
    if ks.is_empty() {
        return Err(Error::InvalidStratum(format!(
            "{j} contains every delay; use the all-delays chart"
        )));
    }
    Ok(ks)
}

/// `d^J(w) = min_{k not in J} d_k(w)`.
pub fn dmin_j(model: &Model, j: DelaySet, w: &[f64]) -> Result<f64> {
    let ks = complement(model, j)?;
    let d = model.delays_at(w)?;
    Ok(ks.iter().map(|&k| d[k]).fold(f64::INFINITY, f64::min))
}

/// C¹ lower proxy of `d^J` and its gradient.
fn proxy(model: &Model, ks: &[usize], w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d = model.delays_at(w)?;
    let grads = model.delay_gradients(w)?;
    if ks.len() == 1 {
        return Ok((d[ks[0]], grads[ks[0]].clone()));
    }
    let dmin = ks.iter().map(|&k| d[k]).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = ks
        .iter()
        .map(|&k| (-SOFTMIN_BETA * (d[k] - dmin)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let p = dmin - total.ln() / SOFTMIN_BETA;
    let mut dp = vec![0.0; w.len()];
    for (&k, wt) in ks.iter().zip(&weights) {
        for (g, gk) in dp.iter_mut().zip(&grads[k]) {
            *g += wt / total * gk;
        }
    }
    Ok((p, dp))
}

fn smoothstep(u: f64) -> (f64, f64) {
    let u = u.clamp(0.0, 1.0);
    (
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u),
        30.0 * u * u * (1.0 - u) * (1.0 - u),
    )
}

/// Transition between consecutive bump levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub lo: f64,
    pub hi: f64,
}

impl Transition {
    /// Weight of the next (narrower) level and its derivative in the proxy.
    fn weight(&self, p: f64) -> (f64, f64) {
        let width = self.hi - self.lo;
        let (s, ds) = smoothstep((p - self.lo) / width);
        (
            1.0 - s,
            if p > self.lo && p < self.hi {
                -ds / width
            } else {
                0.0
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    pub stratum: DelaySet,
    pub coverage_box: Option<BoxDomain>,
    pub thresholds: Vec<f64>,
    pub transitions: Vec<Transition>,
    pub softmin_beta: f64,
    pub softmin_bias: f64,
    pub min_sampled_dmin: f64,
    pub max_bump_certificate: f64,
}

/// Level weights with their proxy derivatives, and `Dp(w)`.
type LevelWeights = (Vec<(f64, f64)>, Vec<f64>);

pub struct FrameJ {
    model: Model,
    j: DelaySet,
    ks: Vec<usize>,
    bbox: Option<BoxDomain>,
    thresholds: Vec<f64>,
    transitions: Vec<Transition>,
    /// `levels[m][nu]`
    levels: Vec<Vec<Bump>>,
    bias: f64,
    dmin_sampled: f64,
    cache: Mutex<HashMap<Vec<u64>, Arc<MatSegmentC1>>>,
}

impl fmt::Debug for FrameJ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameJ")
            .field("stratum", &self.j)
            .field("thresholds", &self.thresholds)
            .field("bbox", &self.bbox)
            .finish()
    }
}

impl Clone for FrameJ {
    fn clone(&self) -> Self {
        Self {
            model: self.model.clone(),
            j: self.j,
            ks: self.ks.clone(),
            bbox: self.bbox.clone(),
            thresholds: self.thresholds.clone(),
            transitions: self.transitions.clone(),
            levels: self.levels.clone(),
            bias: self.bias,
            dmin_sampled: self.dmin_sampled,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl FrameJ {
    /// Builds the frame for stratum `j` over `bbox` (ignored when `dim F = 0`).
    pub fn build(model: &Model, j: DelaySet, bbox: Option<BoxDomain>) -> Result<Self> {
        let ks = complement(model, j)?;
        let r = model.r();
        let dim_f = model.dim_f();
        let bias = if ks.len() > 1 {
            (ks.len() as f64).ln() / SOFTMIN_BETA
        } else {
            0.0
        };

        let (bbox, samples) = if dim_f == 0 {
            (None, vec![Vec::new()])
        } else {
            let bbox = bbox.ok_or_else(|| Error::BoxNotInWJ {
                j,
                reason: "a coverage box is required when dim F > 0".into(),
            })?;
            if bbox.dim() != dim_f {
                return Err(Error::DimensionMismatch {
                    expected: dim_f,
                    got: bbox.dim(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(BOX_SEED);
            let mut samples = if dim_f <= 10 {
                bbox.corners()
            } else {
                Vec::new()
            };
            samples.push(
                bbox.lo
                    .iter()
                    .zip(&bbox.hi)
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            );
            samples.extend((0..BOX_SAMPLES).map(|_| bbox.sample(&mut rng)));
            (Some(bbox), samples)
        };

        let mut dmin_sampled = f64::INFINITY;
        for w in &samples {
            if !model.in_w(w) {
                return Err(Error::BoxNotInWJ {
                    j,
                    reason: format!("sample {w:?} lies outside W"),
                });
            }
            let d = dmin_j(model, j, w)?;
            if d <= 10.0 * model.zero_tol() {
                return Err(Error::BoxNotInWJ {
                    j,
                    reason: format!("d^J = {d:.3e} at {w:?} is not safely positive"),
                });
            }
            dmin_sampled = dmin_sampled.min(d);
        }

        let thresholds = if dim_f == 0 {
            vec![dmin_sampled.min(r)]
        } else {
            let mut t = vec![r / 2.0];
            while *t.last().unwrap() > dmin_sampled / 2.0 {
                let next = t.last().unwrap() / 2.0;
                t.push(next);
            }
            t
        };
        let transitions = thresholds[..thresholds.len() - 1]
            .iter()
            .map(|&delta| {
                let lo = delta + bias;
                Transition {
                    lo,
                    hi: lo + delta / 2.0,
                }
            })
            .collect();
        let levels = thresholds
            .iter()
            .map(|&delta| {
                (0..model.n())
                    .map(|nu| make_component_bump(model, nu, -delta))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: model.clone(),
            j,
            ks,
            bbox,
            thresholds,
            transitions,
            levels,
            bias,
            dmin_sampled,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn stratum(&self) -> DelaySet {
        self.j
    }

    pub fn coverage_box(&self) -> Option<&BoxDomain> {
        self.bbox.as_ref()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn covers(&self, w: &[f64]) -> bool {
        match &self.bbox {
            Some(b) => b.contains(w) && self.model.in_w(w),
            None => w.is_empty(),
        }
    }

    fn require_covered(&self, w: &[f64]) -> Result<()> {
        if self.covers(w) {
            Ok(())
        } else {
            Err(Error::OutsideBox { w: w.to_vec() })
        }
    }

    pub fn report(&self) -> FrameReport {
        FrameReport {
            stratum: self.j,
            coverage_box: self.bbox.clone(),
            thresholds: self.thresholds.clone(),
            transitions: self.transitions.clone(),
            softmin_beta: SOFTMIN_BETA,
            softmin_bias: self.bias,
            min_sampled_dmin: self.dmin_sampled,
            max_bump_certificate: self
                .levels
                .iter()
                .flatten()
                .map(|b| b.certificate.max())
                .fold(0.0, f64::max),
        }
    }

    /// Level weights `c_m(p(w))`, their proxy derivatives, and `Dp(w)`.
    fn weights(&self, w: &[f64]) -> Result<LevelWeights> {
        if self.transitions.is_empty() {
            return Ok((Vec::new(), vec![0.0; w.len()]));
        }
        let (p, dp) = proxy(&self.model, &self.ks, w)?;
        Ok((self.transitions.iter().map(|t| t.weight(p)).collect(), dp))
    }

    fn blend(&self, coeffs: &[f64], base: f64) -> Result<MatSegmentC1> {
        let n = self.model.n();
        let columns = (0..n)
            .map(|nu| {
                let mut y = self.levels[0][nu].segment.scale(base);
                for (m, &c) in coeffs.iter().enumerate() {
                    if c != 0.0 {
                        y.axpy(c, &self.levels[m + 1][nu].segment)?;
                        y.axpy(-c, &self.levels[m][nu].segment)?;
                    }
                }
                Ok(y)
            })
            .collect::<Result<Vec<_>>>()?;
        MatSegmentC1::diagonal(&columns)
    }

    /// `Y_J(w)`, memoized per `w`.
    pub fn y(&self, w: &[f64]) -> Result<Arc<MatSegmentC1>> {
        self.require_covered(w)?;
        let key: Vec<u64> = w.iter().map(|v| v.to_bits()).collect();
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(hit) = cache.get(&key) {
            return Ok(hit.clone());
        }
        let (weights, _) = self.weights(w)?;
        let coeffs: Vec<f64> = weights.iter().map(|(c, _)| *c).collect();
        let y = Arc::new(self.blend(&coeffs, 1.0)?);
        if cache.len() >= CACHE_CAPACITY {
            cache.clear();
        }
        cache.insert(key, y.clone());
        Ok(y)
    }

    /// `Y_J(w) . x`
    pub fn apply(&self, w: &[f64], x: &[f64]) -> Result<SegmentC1> {
        self.y(w)?.apply(x)
    }

    /// `DY_J(w) w_dir` as a matrix segment.
    pub fn dy(&self, w: &[f64], w_dir: &[f64]) -> Result<MatSegmentC1> {
        self.require_covered(w)?;
        if w_dir.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: w_dir.len(),
            });
        }
        let (weights, dp) = self.weights(w)?;
        let dp_dir: f64 = dp.iter().zip(w_dir).map(|(a, b)| a * b).sum();
        let coeffs: Vec<f64> = weights.iter().map(|(_, dc)| dc * dp_dir).collect();
        self.blend(&coeffs, 0.0)
    }

    /// `(DY_J(w) w_dir) . x`
    pub fn dy_apply(&self, w: &[f64], w_dir: &[f64], x: &[f64]) -> Result<SegmentC1> {
        self.dy(w, w_dir)?.apply(x)
    }
}

#[derive(Debug, Clone)]
pub struct ChartJ {
    frame: FrameJ,
    settings: SolverSettings,
}

impl ChartJ {
    pub fn new(model: &Model, j: DelaySet, bbox: Option<BoxDomain>) -> Result<Self> {
        Ok(Self {
            frame: FrameJ::build(model, j, bbox)?,
            settings: SolverSettings::default(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn model(&self) -> &Model {
        &self.frame.model
    }

    pub fn frame(&self) -> &FrameJ {
        &self.frame
    }

    pub fn stratum(&self) -> DelaySet {
        self.frame.j
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// `R^J phi = phi - Y_J(L phi) phi'(0)`
    pub fn project(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        let w = self.model().apply_l(phi)?;
        let mut out = phi.sub(&self.frame.apply(&w, phi.deriv_at_zero())?)?;
        out.set_deriv_at_zero(&vec![0.0; phi.n()]);
        Ok(out)
    }

    /// `DR^J(phi) chi = chi - (DY_J(L phi) L chi) phi'(0) - Y_J(L phi) chi'(0)`
    pub fn derivative(&self, phi: &SegmentC1, chi: &SegmentC1) -> Result<SegmentC1> {
        let m = self.model();
        let w = m.apply_l(phi)?;
        let l_chi = m.apply_l(chi)?;
        let a = self.frame.dy_apply(&w, &l_chi, phi.deriv_at_zero())?;
        let b = self.frame.apply(&w, chi.deriv_at_zero())?;
        chi.sub(&a)?.sub(&b)
    }

    /// The manifold point over `chi` in `X_0`: solves `x = f(chi + Y_J(L chi) x)`.
    pub fn invert(&self, chi: &SegmentC1) -> Result<Inversion> {
        require_x0(chi)?;
        let w = self.model().apply_l(chi)?;
        let y = self.frame.y(&w)?;
        solve_offset(self.model(), chi, &y, &self.settings)
    }

    /// The almost-graph offset `Y_J(L chi) f(R_J^{-1} chi)` over `chi`.
    pub fn offset(&self, chi: &SegmentC1) -> Result<SegmentC1> {
        let inv = self.invert(chi)?;
        let w = self.model().apply_l(chi)?;
        self.frame.apply(&w, &inv.solution.x)
    }

    /// Tangent vector at `phi` in `X_fJ` mapped to `eta` in `X_0` by the chart derivative.
    pub fn tangent_lift(&self, phi: &SegmentC1, eta: &SegmentC1) -> Result<SegmentC1> {
        require_x0(eta)?;
        let m = self.model();
        let n = m.n();
        let w = m.apply_l(phi)?;
        let d = m.delays_at(&w)?;
        let grads = m.delay_gradients(&w)?;
        let jac = m.g_jacobian(&m.hat_at(phi, &w)?)?;
        let l_eta = m.apply_l(eta)?;
        let dphi0 = phi.deriv_at_zero().to_vec();
        let corrected = eta.add(&self.frame.dy_apply(&w, &l_eta, &dphi0)?)?;

        let mut x = vec![0.0; n];
        for (k, (dk, grad)) in d.iter().zip(&grads).enumerate() {
            let s: f64 = grad.iter().zip(&l_eta).map(|(a, b)| a * b).sum();
            let (val, slope) = if self.frame.j.contains(k) {
                (eta.value_at_zero().to_vec(), dphi0.clone())
            } else {
                (corrected.eval(-dk)?, phi.eval_deriv(-dk)?)
            };
            for nu in 0..n {
                let bracket = val[nu] - slope[nu] * s;
                for (mu, xm) in x.iter_mut().enumerate() {
                    *xm += jac[(mu, k * n + nu)] * bracket;
                }
            }
        }
        corrected.add(&self.frame.apply(&w, &x)?)
    }

    fn slope_over(&self, phi: &SegmentC1) -> Result<Vec<f64>> {
        Ok(self.invert(&self.project(phi)?)?.solution.x)
    }

    /// `A_J(phi) = phi - Y_J(L phi) f(R_J^{-1}(R^J phi))`
    pub fn almost_graph(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        let x = self.slope_over(phi)?;
        let w = self.model().apply_l(phi)?;
        phi.sub(&self.frame.apply(&w, &x)?)
    }

    /// `B_J(rho) = rho + Y_J(L rho) f(R_J^{-1}(R^J rho))`
    pub fn almost_graph_inv(&self, rho: &SegmentC1) -> Result<SegmentC1> {
        let x = self.slope_over(rho)?;
        let w = self.model().apply_l(rho)?;
        rho.add(&self.frame.apply(&w, &x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{self, Params};
    use crate::model::max_abs;

    fn eq1_chart() -> ChartJ {
        let m = builtin::eq1(&Params::default()).unwrap().model;
        let bbox = m.w_box().cloned();
        ChartJ::new(&m, DelaySet::from_indices([0]), bbox).unwrap()
    }

    #[test]
    fn smoothstep_endpoints() {
        assert_eq!(smoothstep(0.0), (0.0, 0.0));
        assert_eq!(smoothstep(1.0), (1.0, 0.0));
        assert_eq!(smoothstep(0.5).0, 0.5);
    }

    #[test]
    fn dmin_examples() {
        let m = builtin::twodelay(&Params::default()).unwrap().model;
        let w = [0.0, 0.0];
        let d = m.delays_at(&w).unwrap();
        assert_eq!(dmin_j(&m, DelaySet::empty(), &w).unwrap(), d[0].min(d[1]));
        assert_eq!(dmin_j(&m, DelaySet::from_indices([0]), &w).unwrap(), d[1]);
        assert!(matches!(
            dmin_j(&m, DelaySet::full(2), &w),
            Err(Error::InvalidStratum(_))
        ));
    }

    #[test]
    fn softmin_is_a_lower_bound() {
        let m = builtin::twodelay(&Params::default()).unwrap().model;
        for w in [[0.0, 0.0], [1.0, -2.0], [-3.0, 3.0]] {
            let (p, _) = proxy(&m, &[0, 1], &w).unwrap();
            let d = dmin_j(&m, DelaySet::empty(), &w).unwrap();
            assert!(p <= d && p >= d - 2f64.ln() / SOFTMIN_BETA - 1e-15);
        }
    }

    #[test]
    fn thresholds_halve_down_to_half_the_minimum() {
        let c = eq1_chart();
        let t = c.frame().thresholds();
        assert_eq!(t[0], 1.0);
        assert!(t.windows(2).all(|p| p[1] == p[0] / 2.0));
        assert!(*t.last().unwrap() <= c.frame().report().min_sampled_dmin / 2.0);
    }

    #[test]
    fn frame_identities_eq1() {
        let c = eq1_chart();
        let m = c.model();
        for w in [[-2.5], [0.0], [0.3], [2.9]] {
            let x = [1.7];
            let yx = c.frame().apply(&w, &x).unwrap();
            assert_eq!(yx.value_at_zero()[0], 0.0);
            assert!((yx.deriv_at_zero()[0] - 1.7).abs() <= 1e-15);
            assert!(max_abs(&m.apply_l(&yx).unwrap()) <= 1e-10);
            let dj = dmin_j(m, c.stratum(), &w).unwrap();
            for t in m.grid().sample_times(8).into_iter().filter(|&t| t <= -dj) {
                assert_eq!(yx.eval(t).unwrap()[0], 0.0);
            }
        }
    }

    #[test]
    fn dy_matches_finite_differences() {
        let c = eq1_chart();
        let x = [0.9];
        for w in [-2.0, -1.2, -0.4, 0.5] {
            let dy = c.frame().dy_apply(&[w], &[1.0], &x).unwrap();
            let eps = 1e-5;
            let p = c.frame().apply(&[w + eps], &x).unwrap();
            let q = c.frame().apply(&[w - eps], &x).unwrap();
            let fd = p.lin_comb(0.5 / eps, -0.5 / eps, &q).unwrap();
            let err = dy.node_distance(&fd).unwrap();
            assert!(err <= 1e-4 * (1.0 + fd.node_max()), "w = {w}: {err}");
        }
    }

    #[test]
    fn outside_box_is_reported() {
        let c = eq1_chart();
        assert!(matches!(
            c.frame().y(&[10.0]),
            Err(Error::OutsideBox { .. })
        ));
    }

    #[test]
    fn box_with_vanishing_delay_is_rejected() {
        let p = Params::from_pairs(&[("rho0", 0.5), ("rho_amp", 0.5)]);
        let m = builtin::eq1(&p).unwrap().model;
        let err = FrameJ::build(
            &m,
            DelaySet::from_indices([0]),
            Some(BoxDomain::cube(1, 50.0)),
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::BoxNotInWJ { .. } | Error::OutsideW { .. }),
            "{err}"
        );
    }

    #[test]
    fn cache_returns_the_same_frame() {
        let c = eq1_chart();
        let a = c.frame().y(&[0.25]).unwrap();
        let b = c.frame().y(&[0.25]).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn projection_fixes_x0() {
        let c = eq1_chart();
        let chi = SegmentC1::from_fn(c.model().grid().clone(), 1, |t| {
            (
                vec![0.3 * (t * t).cos() - 0.2],
                vec![-0.6 * t * (t * t).sin()],
            )
        });
        let p = c.project(&chi).unwrap();
        assert!(p.node_distance(&chi).unwrap() <= 1e-12);
    }
}
