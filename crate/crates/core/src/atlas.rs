//! Strata of vanishing delays, the lift of a segment onto the solution
//! manifold, and atlases of charts over the strata met by a set of seeds.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bump::make_component_bump;
use crate::chart_j::{dmin_j, ChartJ, FrameReport};
use crate::chart_k::{ChartK, Inversion};
use crate::error::{Error, Result};
use crate::funcspace::{scalar_times_basis, SegmentC1, SegmentDoc};
use crate::model::{max_abs, BoxDomain, Hypothesis, Membership, Model};

/// A subset `J` of the delay indices, stored as a bitmask.
///
/// Indices are 0-based in the API; `Display` and serde use the 1-based
/// labels `{1,2}`, with `∅` for the empty set.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DelaySet {
    bits: u64,
}

impl DelaySet {
    pub fn empty() -> Self {
        Self { bits: 0 }
    }

    /// `K = {0, ..., k-1}`
    pub fn full(k: usize) -> Self {
        assert!(k <= 64, "at most 64 delays");
        Self {
            bits: if k == 64 { u64::MAX } else { (1u64 << k) - 1 },
        }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty();
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn from_bits(bits: u64) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < 64, "delay index {i} out of range");
        self.bits |= 1 << i;
    }

    pub fn contains(&self, i: usize) -> bool {
        i < 64 && self.bits >> i & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_subset_of_full(&self, k: usize) -> bool {
        self.bits & !Self::full(k).bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(|&i| self.contains(i))
    }

    /// Parses `∅`, `{}`, `{1,2}` or `1,2` (1-based labels).
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "∅" || t == "empty" {
            return Ok(Self::empty());
        }
        let inner = t
            .strip_prefix('{')
            .and_then(|x| x.strip_suffix('}'))
            .unwrap_or(t);
        let mut set = Self::empty();
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let label: usize = part.parse().map_err(|_| {
                Error::InvalidStratum(format!("cannot parse delay label {part:?} in {s:?}"))
            })?;
            if label == 0 || label > 64 {
                return Err(Error::InvalidStratum(format!(
                    "delay label {label} out of range 1..=64"
                )));
            }
            set.insert(label - 1);
        }
        Ok(set)
    }

    fn labels(&self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Display for DelaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        let labels: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

impl fmt::Debug for DelaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for DelaySet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DelaySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(d)?;
        let mut set = Self::empty();
        for l in labels {
            if l == 0 || l > 64 {
                return Err(serde::de::Error::custom(format!(
                    "delay label {l} out of range 1..=64"
                )));
            }
            set.insert(l - 1);
        }
        Ok(set)
    }
}

/// `{k : d_k(w) <= zero_tol}`
pub fn classify(model: &Model, w: &[f64]) -> Result<DelaySet> {
    model.classify(w)
}

/// Whether some delay at `w` is positive but within ten times the zero tolerance.
pub fn near_boundary(model: &Model, w: &[f64]) -> Result<bool> {
    let tol = model.zero_tol();
    Ok(model
        .delays_at(w)?
        .iter()
        .any(|&d| d > tol && d <= 10.0 * tol))
}

#[derive(Debug, Clone)]
pub struct Lift {
    pub phi: SegmentC1,
    pub stratum: DelaySet,
    /// `f(phi) - phi'(0)` of the input.
    pub defect: Vec<f64>,
    /// Cut point of the bumps, `None` when no correction was needed.
    pub z: Option<f64>,
    pub residual: f64,
}

/// Adds to `phi` in `U_J` a combination of annihilated bumps supported right
/// of every positive delay, so that the result lies in `X_fJ` with the same
/// `L phi` and `hat(phi)`.
pub fn lift_to_manifold(model: &Model, phi: &SegmentC1) -> Result<Lift> {
    let w = model.apply_l(phi)?;
    let stratum = model.classify(&w)?;
    let f = model.rhs_f(phi)?;
    let defect: Vec<f64> = f
        .iter()
        .zip(phi.deriv_at_zero())
        .map(|(a, b)| a - b)
        .collect();
    if defect.iter().all(|&q| q == 0.0) {
        return Ok(Lift {
            phi: phi.clone(),
            stratum,
            defect,
            z: None,
            residual: 0.0,
        });
    }
    let z = if stratum == model.all_delays() {
        -model.r() / 2.0
    } else {
        -dmin_j(model, stratum, &w)?
    };
    let mut out = phi.clone();
    for (nu, &q) in defect.iter().enumerate() {
        if q != 0.0 {
            let eta = make_component_bump(model, nu, z)?;
            out.axpy(q, &scalar_times_basis(&eta.segment, nu, model.n())?)?;
        }
    }
    // the bump slopes at 0 are exactly 1, so this only removes rounding
    out.set_deriv_at_zero(&f);
    let residual = model.on_manifold_residual(&out)?;
    Ok(Lift {
        phi: out,
        stratum,
        defect,
        z: Some(z),
        residual,
    })
}

/// A chart of either kind.
#[derive(Debug, Clone)]
pub enum Chart {
    AllDelays(ChartK),
    Positive(ChartJ),
}

impl Chart {
    pub fn stratum(&self) -> DelaySet {
        match self {
            Chart::AllDelays(c) => c.model().all_delays(),
            Chart::Positive(c) => c.stratum(),
        }
    }

    pub fn model(&self) -> &Model {
        match self {
            Chart::AllDelays(c) => c.model(),
            Chart::Positive(c) => c.model(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Chart::AllDelays(_) => "all_delays",
            Chart::Positive(_) => "positive_delays",
        }
    }

    pub fn covers(&self, w: &[f64]) -> bool {
        match self {
            Chart::AllDelays(c) => c.model().in_w(w),
            Chart::Positive(c) => c.frame().covers(w),
        }
    }

    pub fn project(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.project(phi),
            Chart::Positive(c) => c.project(phi),
        }
    }

    /// Derivative of the chart map at `phi` applied to `chi`.
    pub fn derivative(&self, phi: &SegmentC1, chi: &SegmentC1) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.project(chi),
            Chart::Positive(c) => c.derivative(phi, chi),
        }
    }

    pub fn invert(&self, chi: &SegmentC1) -> Result<Inversion> {
        match self {
            Chart::AllDelays(c) => c.invert(chi),
            Chart::Positive(c) => c.invert(chi),
        }
    }

    pub fn tangent_lift(&self, phi: &SegmentC1, eta: &SegmentC1) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.tangent_lift(phi, eta),
            Chart::Positive(c) => c.tangent_lift(phi, eta),
        }
    }

    pub fn almost_graph(&self, phi: &SegmentC1) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.almost_graph(phi),
            Chart::Positive(c) => c.almost_graph(phi),
        }
    }

    pub fn almost_graph_inv(&self, psi: &SegmentC1) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.almost_graph_inv(psi),
            Chart::Positive(c) => c.almost_graph_inv(psi),
        }
    }

    /// `Y . x` at the base point `phi` (for `J != K` the frame depends on `L phi`).
    pub fn frame_apply(&self, phi: &SegmentC1, x: &[f64]) -> Result<SegmentC1> {
        match self {
            Chart::AllDelays(c) => c.frame().apply(x),
            Chart::Positive(c) => c.frame().apply(&c.model().apply_l(phi)?, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StratumEntry {
    pub chart: Chart,
    pub witnesses: Vec<SegmentC1>,
    pub near_boundary: Vec<bool>,
}

/// Charts for the strata met by the seeds, with the lifted seeds as witnesses.
#[derive(Debug, Clone)]
pub struct Atlas {
    model: Model,
    strata: BTreeMap<DelaySet, StratumEntry>,
}

/// Tolerance on the on-manifold residual for selecting a chart.
pub const CHART_SELECT_TOL: f64 = 1e-8;

impl Atlas {
    /// Lifts every seed, groups them by stratum and builds one chart per
    /// stratum. Strata other than `K` use `boxes[J]` or, failing that, the
    /// model's sampling box of `W`.
    pub fn build(
        model: &Model,
        seeds: &[SegmentC1],
        boxes: &BTreeMap<DelaySet, BoxDomain>,
    ) -> Result<Self> {
        let mut grouped: BTreeMap<DelaySet, (Vec<SegmentC1>, Vec<bool>)> = BTreeMap::new();
        for seed in seeds {
            let lift = lift_to_manifold(model, seed)?;
            let w = model.apply_l(&lift.phi)?;
            let flag = near_boundary(model, &w)?;
            let entry = grouped.entry(lift.stratum).or_default();
            entry.0.push(lift.phi);
            entry.1.push(flag);
        }
        let mut strata = BTreeMap::new();
        for (j, (witnesses, near)) in grouped {
            let chart = if j == model.all_delays() {
                Chart::AllDelays(ChartK::new(model.clone())?)
            } else {
                let bbox = boxes.get(&j).cloned().or_else(|| model.w_box().cloned());
                Chart::Positive(ChartJ::new(model, j, bbox)?)
            };
            strata.insert(
                j,
                StratumEntry {
                    chart,
                    witnesses,
                    near_boundary: near,
                },
            );
        }
        Ok(Self {
            model: model.clone(),
            strata,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn strata(&self) -> impl Iterator<Item = DelaySet> + '_ {
        self.strata.keys().copied()
    }

    pub fn entry(&self, j: DelaySet) -> Option<&StratumEntry> {
        self.strata.get(&j)
    }

    pub fn chart(&self, j: DelaySet) -> Result<&Chart> {
        self.strata
            .get(&j)
            .map(|e| &e.chart)
            .ok_or(Error::NoChartForStratum(j))
    }

    /// The chart of the stratum of `phi` and the chart image of `phi`.
    pub fn chart_for(&self, phi: &SegmentC1) -> Result<(&Chart, SegmentC1)> {
        let residual = self.model.on_manifold_residual(phi)?;
        if residual > CHART_SELECT_TOL {
            return Err(Error::Precondition(format!(
                "segment is not on the solution manifold (residual {residual:.3e})"
            )));
        }
        let j = match self.model.membership(phi) {
            Membership::InU(j) => j,
            Membership::OutsideU => {
                return Err(Error::OutsideW {
                    w: self.model.apply_l(phi)?,
                })
            }
        };
        let chart = self.chart(j)?;
        if !chart.covers(&self.model.apply_l(phi)?) {
            return Err(Error::NoChartForStratum(j));
        }
        let image = chart.project(phi)?;
        Ok((chart, image))
    }

    pub fn manifest(&self) -> Result<AtlasManifest> {
        let mut strata = Vec::new();
        for (&j, entry) in &self.strata {
            let mut max_residual = 0.0f64;
            let mut max_round_trip = 0.0f64;
            for phi in &entry.witnesses {
                max_residual = max_residual.max(self.model.on_manifold_residual(phi)?);
                let back = entry.chart.invert(&entry.chart.project(phi)?)?;
                max_round_trip = max_round_trip.max(back.phi.node_distance(phi)?);
            }
            let (z, frame) = match &entry.chart {
                Chart::AllDelays(c) => (Some(c.frame().z()), None),
                Chart::Positive(c) => (None, Some(c.frame().report())),
            };
            strata.push(StratumManifest {
                stratum: j,
                label: j.to_string(),
                chart: entry.chart.kind().to_string(),
                bump_cut: z,
                frame,
                witnesses: entry.witnesses.iter().map(SegmentC1::to_doc).collect(),
                near_boundary: entry.near_boundary.clone(),
                max_on_manifold_residual: max_residual,
                max_round_trip_residual: max_round_trip,
            });
        }
        Ok(AtlasManifest {
            model: self.model.name().to_string(),
            hypothesis: self.model.hypothesis(),
            zero_tol: self.model.zero_tol(),
            delay_count: self.model.k(),
            strata,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumManifest {
    pub stratum: DelaySet,
    pub label: String,
    pub chart: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump_cut: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameReport>,
    pub witnesses: Vec<SegmentDoc>,
    pub near_boundary: Vec<bool>,
    pub max_on_manifold_residual: f64,
    pub max_round_trip_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AtlasManifest {
    pub model: String,
    pub hypothesis: Hypothesis,
    pub zero_tol: f64,
    pub delay_count: usize,
    pub strata: Vec<StratumManifest>,
}

/// Maximum absolute difference between `L phi` values, for lift checks.
pub fn l_distance(model: &Model, a: &SegmentC1, b: &SegmentC1) -> Result<f64> {
    let la = model.apply_l(a)?;
    let lb = model.apply_l(b)?;
    Ok(max_abs(
        &la.iter().zip(&lb).map(|(x, y)| x - y).collect::<Vec<_>>(),
    ))
}
