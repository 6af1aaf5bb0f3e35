//! The all-delays chart on the `ode` model, whose single delay vanishes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solman::builtin::{self, Params};
use solman::harness::sample_in_u;
use solman::{lift_to_manifold, ChartK};

fn main() -> solman::Result<()> {
    let model = builtin::ode(&Params::default())?.model;
    let chart = ChartK::new(model.clone())?;
    println!("frame built from bumps cut at z = {}", chart.frame().z());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = lift_to_manifold(&model, &sample_in_u(&model, &mut rng)?)?.phi;
    let chi = chart.project(&phi)?;
    println!("chart image has slope {:?} at 0", chi.deriv_at_zero());

    let inv = chart.invert(&chi)?;
    println!(
        "inverse: {} Newton iterations, round trip {:.2e}",
        inv.solution.iterations,
        inv.phi.node_distance(&phi)?
    );

    let psi = chart.almost_graph(&phi)?;
    let back = chart.almost_graph_inv(&psi)?;
    println!(
        "almost graph map flattens the slope to {:?}; inverse error {:.2e}",
        psi.deriv_at_zero(),
        back.node_distance(&phi)?
    );
    Ok(())
}
