//! Discretized function spaces on `[-r, 0]`.
//!
//! A [`SegmentC1`] stores value and derivative data at the nodes of a shared
//! [`Grid`] and is interpreted as the piecewise-cubic Hermite interpolant of
//! that data, so it is continuously differentiable by construction and its
//! endpoint data `phi(0)`, `phi'(0)` are stored exactly. [`SegmentC0`] is
//! the piecewise-linear counterpart used for merely continuous arguments.
//!
//! All linear operations act on node data only, so they are exact up to
//! floating-point rounding. Mixing segments from different grids is an error.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid nodes.
pub const DEFAULT_NODES: usize = 65;
/// Samples per subinterval used by norms and sampled checks.
pub const SAMPLES_PER_INTERVAL: usize = 8;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    r: f64,
    nodes: Vec<f64>,
    uniform: bool,
}

impl Grid {
    pub fn uniform(r: f64, m: usize) -> Result<Arc<Grid>> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "horizon r = {r} must be positive"
            )));
        }
        if m < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {m}"
            )));
        }
        let last = (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| -r * ((m - 1 - i) as f64 / last)).collect();
        nodes[0] = -r;
        nodes[m - 1] = 0.0;
        Ok(Arc::new(Grid {
            r,
            nodes,
            uniform: true,
        }))
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Arc<Grid>> {
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[nodes.len() - 1] != 0.0 {
            return Err(Error::InvalidGrid("last node must be 0".into()));
        }
        if nodes
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidGrid(
                "nodes must be strictly increasing".into(),
            ));
        }
        let r = -nodes[0];
        if r.is_nan() || r <= 0.0 {
            return Err(Error::InvalidGrid("first node must be negative".into()));
        }
        Ok(Arc::new(Grid {
            r,
            nodes,
            uniform: false,
        }))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Clamp `t` into `[-r, 0]`, tolerating rounding-level excursions.
    pub fn check_time(&self, t: f64) -> Result<f64> {
        let slack = DOMAIN_SLACK * self.r.max(1.0);
        if t.is_nan() || t < -self.r - slack || t > slack {
            return Err(Error::Domain { t, r: self.r });
        }
        Ok(t.clamp(-self.r, 0.0))
    }

    /// Index `i` of the subinterval `[t_i, t_{i+1}]` containing `t` (already clamped).
    pub fn locate(&self, t: f64) -> usize {
        let m = self.nodes.len();
        let i = if self.uniform {
            let h = self.r / (m - 1) as f64;
            (((t + self.r) / h).floor().max(0.0) as usize).min(m - 2)
        } else {
            self.nodes
                .partition_point(|&x| x <= t)
                .saturating_sub(1)
                .min(m - 2)
        };
        // correct rounding in the uniform formula
        if t < self.nodes[i] && i > 0 {
            i - 1
        } else if i + 2 < m && t >= self.nodes[i + 1] {
            i + 1
        } else {
            i
        }
    }

    /// Index of the smallest node `>= t`, or `None` if `t > 0`.
    pub fn snap_up(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.r.max(1.0);
        self.nodes.iter().position(|&x| x >= t - tol)
    }

    /// Nodes plus `per_interval - 1` interior points per subinterval.
    pub fn sample_times(&self, per_interval: usize) -> Vec<f64> {
        let per = per_interval.max(1);
        let mut out = Vec::with_capacity((self.len() - 1) * per + 1);
        for w in self.nodes.windows(2) {
            for j in 0..per {
                out.push(w[0] + (w[1] - w[0]) * j as f64 / per as f64);
            }
        }
        out.push(0.0);
        out
    }
}

/// Read access to a continuous `R^n`-valued function on `[-r, 0]`.
pub trait Continuous {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn value_into(&self, t: f64, out: &mut [f64]) -> Result<()>;

    fn value(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.value_into(t, &mut out)?;
        Ok(out)
    }
}

/// A continuously differentiable function on `[-r, 0]`.
pub trait Smooth: Continuous {
    fn deriv_into(&self, t: f64, out: &mut [f64]) -> Result<()>;

    fn deriv(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.deriv_into(t, &mut out)?;
        Ok(out)
    }
}

#[inline]
fn hermite_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

#[inline]
fn hermite_deriv_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        -6.0 * s2 + 6.0 * s,
        3.0 * s2 - 2.0 * s,
    ]
}

/// Cubic Hermite interpolant on `[a, a + h]` evaluated at relative position `s`.
pub fn hermite_value(y0: f64, m0: f64, y1: f64, m1: f64, h: f64, s: f64) -> f64 {
    let w = hermite_weights(s);
    w[0] * y0 + w[1] * h * m0 + w[2] * y1 + w[3] * h * m1
}

pub fn hermite_deriv(y0: f64, m0: f64, y1: f64, m1: f64, h: f64, s: f64) -> f64 {
    let w = hermite_deriv_weights(s);
    (w[0] * y0 + w[2] * y1) / h + w[1] * m0 + w[3] * m1
}

/// Element of `C^1([-r,0], R^n)` in Hermite form.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentC1 {
    grid: Arc<Grid>,
    n: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl SegmentC1 {
    /// Node-major data: `values[i * n + nu]` is component `nu` at node `i`.
    pub fn new(grid: Arc<Grid>, n: usize, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        let len = grid.len() * n;
        if values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: values.len(),
            });
        }
        if derivs.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: derivs.len(),
            });
        }
        Ok(Self {
            grid,
            n,
            values,
            derivs,
        })
    }

    pub fn zeros(grid: Arc<Grid>, n: usize) -> Self {
        let len = grid.len() * n;
        Self {
            grid,
            n,
            values: vec![0.0; len],
            derivs: vec![0.0; len],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: &[f64]) -> Self {
        let n = c.len();
        let m = grid.len();
        let values = (0..m).flat_map(|_| c.iter().copied()).collect();
        Self {
            grid,
            n,
            values,
            derivs: vec![0.0; m * n],
        }
    }

    /// Sample a function given with its exact derivative at the grid nodes.
    pub fn from_fn(grid: Arc<Grid>, n: usize, f: impl Fn(f64) -> (Vec<f64>, Vec<f64>)) -> Self {
        let m = grid.len();
        let mut values = Vec::with_capacity(m * n);
        let mut derivs = Vec::with_capacity(m * n);
        for &t in grid.nodes() {
            let (v, d) = f(t);
            assert_eq!(v.len(), n, "from_fn: value has wrong length");
            assert_eq!(d.len(), n, "from_fn: derivative has wrong length");
            values.extend(v);
            derivs.extend(d);
        }
        Self {
            grid,
            n,
            values,
            derivs,
        }
    }

    /// Resample any smooth function onto `grid`.
    pub fn resample<S: Smooth + ?Sized>(grid: Arc<Grid>, src: &S) -> Result<Self> {
        let n = src.dim();
        let mut values = vec![0.0; grid.len() * n];
        let mut derivs = vec![0.0; grid.len() * n];
        for (i, &t) in grid.nodes().iter().enumerate() {
            src.value_into(t, &mut values[i * n..(i + 1) * n])?;
            src.deriv_into(t, &mut derivs[i * n..(i + 1) * n])?;
        }
        Self::new(grid, n, values, derivs)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn derivs_mut(&mut self) -> &mut [f64] {
        &mut self.derivs
    }

    pub fn node_value(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn node_deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.n..(i + 1) * self.n]
    }

    /// `phi(0)`, read from the last node.
    pub fn value_at_zero(&self) -> &[f64] {
        self.node_value(self.grid.len() - 1)
    }

    /// `phi'(0)`, read from the last node.
    pub fn deriv_at_zero(&self) -> &[f64] {
        self.node_deriv(self.grid.len() - 1)
    }

    pub fn set_deriv_at_zero(&mut self, d: &[f64]) {
        let i = self.grid.len() - 1;
        self.derivs[i * self.n..(i + 1) * self.n].copy_from_slice(d);
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.value(t)
    }

    pub fn eval_deriv(&self, t: f64) -> Result<Vec<f64>> {
        self.deriv(t)
    }

    pub fn norm_c0(&self) -> f64 {
        self.sampled_max(|s, t, out| s.value_into(t, out))
    }

    pub fn norm_c1(&self) -> f64 {
        self.norm_c0() + self.sampled_max(|s, t, out| s.deriv_into(t, out))
    }

    fn sampled_max(&self, f: impl Fn(&Self, f64, &mut [f64]) -> Result<()>) -> f64 {
        let mut buf = vec![0.0; self.n];
        self.grid
            .sample_times(SAMPLES_PER_INTERVAL)
            .into_iter()
            .map(|t| {
                f(self, t, &mut buf).expect("sample time inside the grid");
                buf.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
            })
            .fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(Error::GridMismatch);
        }
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, b: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let derivs = self
            .derivs
            .iter()
            .zip(&other.derivs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            n: self.n,
            values,
            derivs,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, 1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, -1.0, other)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            n: self.n,
            values: self.values.iter().map(|x| a * x).collect(),
            derivs: self.derivs.iter().map(|x| a * x).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        for (x, y) in self.derivs.iter_mut().zip(&other.derivs) {
            *x += a * y;
        }
        Ok(())
    }

    /// Scalar segment holding component `nu` (0-based).
    pub fn component(&self, nu: usize) -> Result<Self> {
        if nu >= self.n {
            return Err(Error::IndexOutOfRange {
                index: nu + 1,
                max: self.n,
            });
        }
        let m = self.grid.len();
        Ok(Self {
            grid: self.grid.clone(),
            n: 1,
            values: (0..m).map(|i| self.values[i * self.n + nu]).collect(),
            derivs: (0..m).map(|i| self.derivs[i * self.n + nu]).collect(),
        })
    }

    /// Maximum absolute difference of node data (values and derivatives).
    pub fn node_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .chain(self.derivs.iter().zip(&other.derivs))
            .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }

    /// Largest absolute node datum.
    pub fn node_max(&self) -> f64 {
        self.values
            .iter()
            .chain(&self.derivs)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Piecewise-linear view of the node values.
    pub fn to_c0(&self) -> SegmentC0 {
        SegmentC0 {
            grid: self.grid.clone(),
            n: self.n,
            values: self.values.clone(),
        }
    }

    pub fn to_doc(&self) -> SegmentDoc {
        let m = self.grid.len();
        SegmentDoc {
            grid: GridDoc {
                r: self.grid.r,
                m,
                nodes: (!self.grid.uniform).then(|| self.grid.nodes.clone()),
            },
            n: self.n,
            values: (0..m).map(|i| self.node_value(i).to_vec()).collect(),
            derivs: (0..m).map(|i| self.node_deriv(i).to_vec()).collect(),
        }
    }

    pub fn from_doc(doc: &SegmentDoc) -> Result<Self> {
        let grid = match &doc.grid.nodes {
            Some(nodes) => Grid::from_nodes(nodes.clone())?,
            None => Grid::uniform(doc.grid.r, doc.grid.m)?,
        };
        if doc.values.len() != grid.len() || doc.derivs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: doc.values.len().min(doc.derivs.len()),
            });
        }
        let mut values = Vec::with_capacity(grid.len() * doc.n);
        let mut derivs = Vec::with_capacity(grid.len() * doc.n);
        for (v, d) in doc.values.iter().zip(&doc.derivs) {
            if v.len() != doc.n || d.len() != doc.n {
                return Err(Error::DimensionMismatch {
                    expected: doc.n,
                    got: v.len().min(d.len()),
                });
            }
            values.extend_from_slice(v);
            derivs.extend_from_slice(d);
        }
        Self::new(grid, doc.n, values, derivs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(s)?)
    }

    /// CSV with columns `t, x1..xn, dx1..dxn` on the sampled grid.
    pub fn write_csv<W: Write>(&self, out: W, per_interval: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        header.extend((1..=self.n).map(|i| format!("dx{i}")));
        w.write_record(&header)?;
        for t in self.grid.sample_times(per_interval) {
            let mut row = vec![t.to_string()];
            row.extend(self.eval(t)?.iter().map(f64::to_string));
            row.extend(self.eval_deriv(t)?.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Continuous for SegmentC1 {
    fn dim(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> f64 {
        self.grid.r
    }

    fn value_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.grid.check_time(t)?;
        let i = self.grid.locate(t);
        let (a, b) = (self.grid.nodes[i], self.grid.nodes[i + 1]);
        let h = b - a;
        let w = hermite_weights((t - a) / h);
        let n = self.n;
        for (nu, o) in out.iter_mut().enumerate().take(n) {
            *o = w[0] * self.values[i * n + nu]
                + w[1] * h * self.derivs[i * n + nu]
                + w[2] * self.values[(i + 1) * n + nu]
                + w[3] * h * self.derivs[(i + 1) * n + nu];
        }
        Ok(())
    }
}

impl Smooth for SegmentC1 {
    fn deriv_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.grid.check_time(t)?;
        let i = self.grid.locate(t);
        let (a, b) = (self.grid.nodes[i], self.grid.nodes[i + 1]);
        let h = b - a;
        let w = hermite_deriv_weights((t - a) / h);
        let n = self.n;
        for (nu, o) in out.iter_mut().enumerate().take(n) {
            *o = (w[0] * self.values[i * n + nu] + w[2] * self.values[(i + 1) * n + nu]) / h
                + w[1] * self.derivs[i * n + nu]
                + w[3] * self.derivs[(i + 1) * n + nu];
        }
        Ok(())
    }
}

/// The segment `psi * e_nu` in `C^1_n` for a scalar `psi` (`nu` is 0-based).
pub fn scalar_times_basis(psi: &SegmentC1, nu: usize, n: usize) -> Result<SegmentC1> {
    if psi.n != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: psi.n,
        });
    }
    if nu >= n {
        return Err(Error::IndexOutOfRange {
            index: nu + 1,
            max: n,
        });
    }
    let mut out = SegmentC1::zeros(psi.grid.clone(), n);
    for i in 0..psi.grid.len() {
        out.values[i * n + nu] = psi.values[i];
        out.derivs[i * n + nu] = psi.derivs[i];
    }
    Ok(out)
}

/// Element of `C([-r,0], R^n)`, piecewise linear between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentC0 {
    grid: Arc<Grid>,
    n: usize,
    values: Vec<f64>,
}

impl SegmentC0 {
    pub fn new(grid: Arc<Grid>, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * n {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * n,
                got: values.len(),
            });
        }
        Ok(Self { grid, n, values })
    }

    pub fn from_fn(grid: Arc<Grid>, n: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let values = grid.nodes().iter().flat_map(|&t| f(t)).collect::<Vec<_>>();
        assert_eq!(
            values.len(),
            grid.len() * n,
            "from_fn: wrong component count"
        );
        Self { grid, n, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.value(t)
    }
}

impl Continuous for SegmentC0 {
    fn dim(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> f64 {
        self.grid.r
    }

    fn value_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.grid.check_time(t)?;
        let i = self.grid.locate(t);
        let (a, b) = (self.grid.nodes[i], self.grid.nodes[i + 1]);
        let s = (t - a) / (b - a);
        let n = self.n;
        for (nu, o) in out.iter_mut().enumerate().take(n) {
            *o = (1.0 - s) * self.values[i * n + nu] + s * self.values[(i + 1) * n + nu];
        }
        Ok(())
    }
}

/// Element of `C^1([-r,0], R^{n x n})`; column `mu` is a segment in `C^1_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatSegmentC1 {
    grid: Arc<Grid>,
    n: usize,
    columns: Vec<SegmentC1>,
}

impl MatSegmentC1 {
    pub fn from_columns(columns: Vec<SegmentC1>) -> Result<Self> {
        let n = columns.len();
        let grid = columns
            .first()
            .map(|c| c.grid.clone())
            .ok_or_else(|| Error::InvalidGrid("matrix segment needs at least one column".into()))?;
        for c in &columns {
            if c.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.n,
                });
            }
            if *c.grid != *grid {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self { grid, n, columns })
    }

    /// Diagonal matrix segment with scalar diagonal entries.
    pub fn diagonal(diag: &[SegmentC1]) -> Result<Self> {
        let n = diag.len();
        let columns = diag
            .iter()
            .enumerate()
            .map(|(nu, psi)| scalar_times_basis(psi, nu, n))
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(columns)
    }

    pub fn identity(grid: Arc<Grid>, n: usize) -> Self {
        let columns = (0..n)
            .map(|mu| {
                let mut e = vec![0.0; n];
                e[mu] = 1.0;
                SegmentC1::constant(grid.clone(), &e)
            })
            .collect();
        Self { grid, n, columns }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn column(&self, mu: usize) -> &SegmentC1 {
        &self.columns[mu]
    }

    pub fn columns(&self) -> &[SegmentC1] {
        &self.columns
    }

    /// `A . q = sum_mu q_mu A_mu`.
    pub fn apply(&self, q: &[f64]) -> Result<SegmentC1> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.len(),
            });
        }
        let mut out = SegmentC1::zeros(self.grid.clone(), self.n);
        for (col, &qm) in self.columns.iter().zip(q) {
            if qm != 0.0 {
                out.axpy(qm, col)?;
            }
        }
        Ok(out)
    }

    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (mu, col) in self.columns.iter().enumerate() {
            let v = col.eval(t)?;
            for (nu, x) in v.into_iter().enumerate() {
                m[(nu, mu)] = x;
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub r: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
}

/// JSON document form of a [`SegmentC1`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDoc {
    pub grid: GridDoc,
    pub n: usize,
    pub values: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
}
