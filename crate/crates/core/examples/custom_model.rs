//! Defining a model with the builder and running the suite on it.
//!
//! `x'(t) = -x(t - 1 - 0.4 tanh x(t))`, which has one positive delay.

use nalgebra::DMatrix;
use solman::atlas::DelaySet;
use solman::harness::{run_suite, Target};
use solman::model::{BoxDomain, DelayFn, Domain, RhsG};
use solman::{Grid, Hypothesis, LinearMapL, Model, SegmentC1, SuiteConfig};

fn main() -> solman::Result<()> {
    let grid = Grid::uniform(2.0, 65)?;
    let model = Model::builder("linear_feedback", grid.clone(), 1)
        .linear_map(LinearMapL::new(1, 1).point(0.0, DMatrix::identity(1, 1)))
        .delay(DelayFn::new(
            |w| 1.0 + 0.4 * w[0].tanh(),
            |w| vec![0.4 / w[0].cosh().powi(2)],
        ))
        .rhs(RhsG::new(|v| vec![-v[0]], |_| -DMatrix::identity(1, 1)))
        .w_domain(Domain::with_box(BoxDomain::cube(1, 3.0)))
        .v_domain(Domain::with_box(BoxDomain::cube(1, 3.0)))
        .hypothesis(Hypothesis::ConstantStratum {
            stratum: DelaySet::empty(),
        })
        .witness(SegmentC1::zeros(grid, 1))
        .build()?;
    let report = run_suite(&Target::from(model), &SuiteConfig::default());
    print!("{}", report.to_text());
    Ok(())
}
