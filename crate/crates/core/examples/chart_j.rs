//! The positive-delay chart on `eq1`: a frame that depends on L phi,
//! round trips, and tangent lifts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solman::builtin::{self, Params};
use solman::harness::sample_in_u;
use solman::sampling::random_x0;
use solman::{lift_to_manifold, ChartJ, DelaySet};

fn main() -> solman::Result<()> {
    let model = builtin::eq1(&Params::default())?.model;
    let j = DelaySet::from_indices([0]);
    let chart = ChartJ::new(&model, j, model.w_box().cloned())?;
    let report = chart.frame().report();
    println!(
        "stratum {}  coverage {:?}",
        report.stratum, report.coverage_box
    );
    println!(
        "smallest sampled positive delay {:.4}",
        report.min_sampled_dmin
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = lift_to_manifold(&model, &sample_in_u(&model, &mut rng)?)?.phi;
    let w = model.apply_l(&phi)?;
    let y = chart.frame().y(&w)?;
    println!(
        "frame at w = {w:?}: Y'(0) = {}",
        y.column(0).deriv_at_zero()[0]
    );

    let chi = chart.project(&phi)?;
    let back = chart.invert(&chi)?;
    println!(
        "round trip {:.2e} after {} iterations",
        back.phi.node_distance(&phi)?,
        back.solution.iterations
    );

    let eta = random_x0(&mut rng, model.grid(), model.n(), 0.5);
    let tangent = chart.tangent_lift(&phi, &eta)?;
    let image = chart.derivative(&phi, &tangent)?;
    println!(
        "tangent lift: residual {:.2e}, maps back to eta within {:.2e}",
        model.tangent_residual(&phi, &tangent)?,
        image.node_distance(&eta)?
    );
    Ok(())
}
