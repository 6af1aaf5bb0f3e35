//! Registry of example systems and the model definition file.
//!
//! | id         | n | r   | delays                              | expected strata |
//! |------------|---|-----|-------------------------------------|-----------------|
//! | `ode`      | 2 | 1   | `d_1 = 0`                           | `{1}` (= K)     |
//! | `eq1`      | 1 | 2   | `d_1 = 0`, `d_2 = rho(phi(0)) > 0`   | `{1}`           |
//! | `mvw`      | 1 | 2   | `1 + c tanh(phi(0) + phi(-2))`       | `∅`             |
//! | `twodelay` | 2 | 1.5 | two positive state-dependent delays | `∅`             |
//!
//! Every built-in has the equilibrium `0`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::atlas::DelaySet;
use crate::error::{Error, Result};
use crate::funcspace::{Grid, SegmentC1, DEFAULT_NODES};
use crate::model::{BoxDomain, DelayFn, Domain, Hypothesis, LinearMapL, Model, RhsG};

pub const IDS: [&str; 4] = ["ode", "eq1", "mvw", "twodelay"];

/// Half-width of the sampling boxes of `W` and `V`.
pub const BOX_HALF_WIDTH: f64 = 3.0;

/// Grid size and named real parameters of a built-in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

impl Params {
    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Self {
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ..Self::default()
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = Some(nodes);
        self
    }

    fn check_known(&self, id: &str, known: &[&str]) -> Result<()> {
        for key in self.values.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown parameter {key:?} for model {id}; expected one of {known:?}"
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.values.get(key).copied().unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("parameter {key} must be finite")))
        }
    }

    fn grid(&self, r: f64) -> Result<std::sync::Arc<Grid>> {
        Grid::uniform(r, self.nodes.unwrap_or(DEFAULT_NODES))
    }

    fn zero_tol(&self) -> f64 {
        self.zero_tol.unwrap_or(crate::model::DEFAULT_ZERO_TOL)
    }
}

/// A registered example with the strata its atlas is expected to have.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub id: &'static str,
    pub model: Model,
    pub expected_strata: Vec<DelaySet>,
    pub description: &'static str,
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn eye(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
    }
    m
}

fn cube(dim: usize) -> BoxDomain {
    BoxDomain::cube(dim, BOX_HALF_WIDTH)
}

/// `x' = A x` with `A = [[-1, 0], [0.5, -2]]`, written with one zero delay and
/// `L phi = (phi_1(-1/2), int phi_2)`.
pub fn ode(p: &Params) -> Result<Builtin> {
    p.check_known("ode", &[])?;
    let r = 1.0;
    let grid = p.grid(r)?;
    let l = LinearMapL::new(2, 2)
        .point(-0.5, eye(2, 2, &[(0, 0, 1.0)]))
        .quadrature(&grid, |_| eye(2, 2, &[(1, 1, 1.0)]));
    let a = eye(2, 2, &[(0, 0, -1.0), (1, 0, 0.5), (1, 1, -2.0)]);
    let a2 = a.clone();
    let model = Model::builder("ode", grid.clone(), 2)
        .linear_map(l)
        .delay(DelayFn::constant(0.0, 2))
        .rhs(RhsG::new(
            move |v| {
                vec![
                    a[(0, 0)] * v[0] + a[(0, 1)] * v[1],
                    a[(1, 0)] * v[0] + a[(1, 1)] * v[1],
                ]
            },
            move |_| a2.clone(),
        ))
        .w_domain(Domain::with_box(cube(2)))
        .v_domain(Domain::with_box(cube(2)))
        .hypothesis(Hypothesis::ConstantStratum {
            stratum: DelaySet::full(1),
        })
        .zero_tol(p.zero_tol())
        .witness(SegmentC1::zeros(grid, 2))
        .build()?;
    Ok(Builtin {
        id: "ode",
        model,
        expected_strata: vec![DelaySet::full(1)],
        description: "linear ODE x' = Ax with a vanishing delay",
    })
}

/// `x'(t) = g(x(t), x(t - rho(x(t))))` with `rho(xi) = rho0 + rho_amp tanh(xi)`
/// and the right-hand side `g(v_1, v_2) = a v_1 + b sin(v_2)`.
pub fn eq1(p: &Params) -> Result<Builtin> {
    p.check_known("eq1", &["rho0", "rho_amp", "a", "b"])?;
    let a = p.get("a", -1.0)?;
    let b = p.get("b", 0.5)?;
    eq1_with(p, move |v1, v2| (a * v1 + b * v2.sin(), a, b * v2.cos()))
}

/// The `eq1` system with a custom scalar right-hand side returning
/// `(g, dg/dv_1, dg/dv_2)`.
pub fn eq1_with(
    p: &Params,
    g: impl Fn(f64, f64) -> (f64, f64, f64) + Send + Sync + 'static,
) -> Result<Builtin> {
    p.check_known("eq1", &["rho0", "rho_amp", "a", "b"])?;
    let r = 2.0;
    let rho0 = p.get("rho0", 1.0)?;
    let amp = p.get("rho_amp", 0.5)?;
    if rho0 - amp.abs() < 0.0 || rho0 + amp.abs() > r {
        return Err(Error::Config(format!(
            "eq1 needs 0 <= rho0 - |rho_amp| and rho0 + |rho_amp| <= {r}"
        )));
    }
    let grid = p.grid(r)?;
    let g = std::sync::Arc::new(g);
    let g2 = g.clone();
    let model = Model::builder("eq1", grid.clone(), 1)
        .linear_map(LinearMapL::new(1, 1).point(0.0, eye(1, 1, &[(0, 0, 1.0)])))
        .delay(DelayFn::constant(0.0, 1))
        .delay(DelayFn::new(
            move |w| rho0 + amp * w[0].tanh(),
            move |w| vec![amp * sech2(w[0])],
        ))
        .rhs(RhsG::new(
            move |v| vec![g(v[0], v[1]).0],
            move |v| {
                let (_, d1, d2) = g2(v[0], v[1]);
                eye(1, 2, &[(0, 0, d1), (0, 1, d2)])
            },
        ))
        .w_domain(Domain::with_box(cube(1)))
        .v_domain(Domain::with_box(cube(2)))
        .hypothesis(Hypothesis::ConstantStratum {
            stratum: DelaySet::from_indices([0]),
        })
        .zero_tol(p.zero_tol())
        .witness(SegmentC1::zeros(grid, 1))
        .build()?;
    Ok(Builtin {
        id: "eq1",
        model,
        expected_strata: vec![DelaySet::from_indices([0])],
        description: "x'(t) = g(x(t), x(t - rho(x(t)))) with rho > 0",
    })
}

/// `x'(t) = -tanh(2 x(t - 1 - c tanh(x(t) + x(t - 2))))`.
pub fn mvw(p: &Params) -> Result<Builtin> {
    p.check_known("mvw", &["delta_amp", "gain"])?;
    let r = 2.0;
    let c = p.get("delta_amp", 0.5)?;
    let gain = p.get("gain", 2.0)?;
    if c.abs() >= 1.0 {
        return Err(Error::Config("mvw needs |delta_amp| < 1".into()));
    }
    let grid = p.grid(r)?;
    let model = Model::builder("mvw", grid.clone(), 1)
        .linear_map(
            LinearMapL::new(1, 1)
                .point(0.0, eye(1, 1, &[(0, 0, 1.0)]))
                .point(-r, eye(1, 1, &[(0, 0, 1.0)])),
        )
        .delay(DelayFn::new(
            move |w| 1.0 + c * w[0].tanh(),
            move |w| vec![c * sech2(w[0])],
        ))
        .rhs(RhsG::new(
            move |v| vec![-(gain * v[0]).tanh()],
            move |v| eye(1, 1, &[(0, 0, -gain * sech2(gain * v[0]))]),
        ))
        .w_domain(Domain::with_box(cube(1)))
        .v_domain(Domain::with_box(cube(1)))
        .hypothesis(Hypothesis::BoundedG { bound: 1.0 })
        .zero_tol(p.zero_tol())
        .witness(SegmentC1::zeros(grid, 1))
        .build()?;
    Ok(Builtin {
        id: "mvw",
        model,
        expected_strata: vec![DelaySet::empty()],
        description: "x'(t) = g(x(t - 1 - delta(x(t) + x(t - 2)))) with bounded g",
    })
}

/// Two species with two positive state-dependent delays.
pub fn twodelay(p: &Params) -> Result<Builtin> {
    p.check_known("twodelay", &[])?;
    let r = 1.5;
    let grid = p.grid(r)?;
    let l = LinearMapL::new(2, 2)
        .point(0.0, eye(2, 2, &[(0, 0, 1.0)]))
        .quadrature(&grid, |_| eye(2, 2, &[(1, 1, 1.0)]));
    let model = Model::builder("twodelay", grid.clone(), 2)
        .linear_map(l)
        .delay(DelayFn::new(
            |w| 0.6 + 0.3 * w[0].tanh(),
            |w| vec![0.3 * sech2(w[0]), 0.0],
        ))
        .delay(DelayFn::new(
            |w| 0.9 + 0.4 * (w[1] - w[0]).tanh(),
            |w| {
                let s = 0.4 * sech2(w[1] - w[0]);
                vec![-s, s]
            },
        ))
        .rhs(RhsG::new(
            |v| {
                vec![
                    -v[0] + 0.8 * v[3].tanh(),
                    -v[1] - 0.6 * v[2].tanh() + 0.3 * v[0],
                ]
            },
            |v| {
                eye(
                    2,
                    4,
                    &[
                        (0, 0, -1.0),
                        (0, 3, 0.8 * sech2(v[3])),
                        (1, 1, -1.0),
                        (1, 2, -0.6 * sech2(v[2])),
                        (1, 0, 0.3),
                    ],
                )
            },
        ))
        .w_domain(Domain::with_box(cube(2)))
        .v_domain(Domain::with_box(cube(4)))
        .hypothesis(Hypothesis::ConstantStratum {
            stratum: DelaySet::empty(),
        })
        .zero_tol(p.zero_tol())
        .witness(SegmentC1::zeros(grid, 2))
        .build()?;
    Ok(Builtin {
        id: "twodelay",
        model,
        expected_strata: vec![DelaySet::empty()],
        description: "two-species system with two positive state-dependent delays",
    })
}

pub fn by_id(id: &str, p: &Params) -> Result<Builtin> {
    match id {
        "ode" => ode(p),
        "eq1" => eq1(p),
        "mvw" => mvw(p),
        "twodelay" => twodelay(p),
        other => Err(Error::Config(format!(
            "unknown model {other:?}; built-ins are {IDS:?}"
        ))),
    }
}

/// All built-ins with default parameters, on the grid size and zero
/// tolerance of `p`.
pub fn all(p: &Params) -> Result<Vec<Builtin>> {
    let shared = Params {
        values: BTreeMap::new(),
        ..p.clone()
    };
    IDS.iter().map(|id| by_id(id, &shared)).collect()
}

/// Model definition file. Only named built-ins are accepted, so a
/// definition file never carries code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub builtin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("model definition: {e}")))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("model definition: {e}")))
    }

    /// Reads a `.json` or `.toml` definition file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            _ => Err(Error::Config(format!(
                "model definition {} must end in .json or .toml",
                path.display()
            ))),
        }
    }

    pub fn params(&self) -> Params {
        Params {
            nodes: self.nodes,
            zero_tol: self.zero_tol,
            values: self.params.clone(),
        }
    }

    pub fn build(&self) -> Result<Builtin> {
        by_id(&self.builtin, &self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_registers() {
        let all = all(&Params::default()).unwrap();
        assert_eq!(all.len(), 4);
        for b in &all {
            assert_eq!(b.model.name(), b.id);
            assert_eq!(b.model.k(), b.model.all_delays().len());
        }
    }

    #[test]
    fn equilibrium_zero() {
        for b in all(&Params::default()).unwrap() {
            let z = SegmentC1::zeros(b.model.grid().clone(), b.model.n());
            assert_eq!(b.model.on_manifold_residual(&z).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_id_and_parameter() {
        assert!(matches!(
            by_id("lorenz", &Params::default()),
            Err(Error::Config(_))
        ));
        let p = Params::from_pairs(&[("nope", 1.0)]);
        assert!(matches!(mvw(&p), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(eq1(&Params::from_pairs(&[("rho0", 0.2), ("rho_amp", 0.5)])).is_err());
        assert!(mvw(&Params::from_pairs(&[("delta_amp", 1.5)])).is_err());
    }

    #[test]
    fn config_round_trip() {
        let toml_text = "builtin = \"mvw\"\nnodes = 33\n[params]\ndelta_amp = 0.25\n";
        let cfg = ModelConfig::from_toml(toml_text).unwrap();
        assert_eq!(cfg.nodes, Some(33));
        let b = cfg.build().unwrap();
        assert_eq!(b.model.grid().len(), 33);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ModelConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_code_and_unknown_fields() {
        let err = ModelConfig::from_json(r#"{"builtin":"ode","g":"x*x"}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn ode_linear_map_values() {
        let m = ode(&Params::default()).unwrap().model;
        let phi = SegmentC1::from_fn(m.grid().clone(), 2, |t| (vec![t, 1.0], vec![1.0, 0.0]));
        let w = m.apply_l(&phi).unwrap();
        assert!((w[0] + 0.5).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-14);
    }
}
