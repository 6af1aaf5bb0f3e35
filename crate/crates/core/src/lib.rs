//! Solution manifolds of delay differential systems `x'(t) = g(x(t - d_1(Lx_t)), ..., x(t - d_k(Lx_t)))`
//! with discrete state-dependent delays: C¹ segment spaces, prescribed-functional
//! bumps, the all-delays chart, positive-delay charts, atlas assembly, a
//! method-of-steps integrator and a verification harness.

pub mod atlas;
pub mod builtin;
pub mod bump;
pub mod chart_j;
pub mod chart_k;
pub mod cli;
pub mod error;
pub mod funcspace;
pub mod harness;
pub mod model;
pub mod sampling;
pub mod semiflow;
pub mod solve;

pub use atlas::{lift_to_manifold, Atlas, Chart, DelaySet, Lift};
pub use bump::{make_bump, Bump, BumpRequest, Certificate, Functional, RowFunctional};
pub use chart_j::{ChartJ, FrameJ};
pub use chart_k::{ChartK, FrameK};
pub use error::{Error, Result};
pub use funcspace::{Continuous, Grid, MatSegmentC1, SegmentC0, SegmentC1, Smooth};
pub use harness::{run_builtin, run_suite, SuiteConfig, VerificationReport};
pub use model::{Hypothesis, LinearMapL, Membership, Model};
pub use semiflow::{integrate, IntegrateConfig, Trajectory};
