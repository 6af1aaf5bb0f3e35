//! Atlases of the built-in models and lifting segments onto the manifold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solman::builtin::{self, Params};
use solman::harness::{sample_in_u, seeded_atlas};
use solman::lift_to_manifold;

fn main() -> solman::Result<()> {
    for b in builtin::all(&Params::default())? {
        let atlas = seeded_atlas(&b.model, 0)?;
        let strata: Vec<String> = atlas.strata().map(|j| j.to_string()).collect();
        println!("{:<9} charts on strata {{{}}}", b.id, strata.join(", "));
    }

    let model = builtin::twodelay(&Params::default())?.model;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = sample_in_u(&model, &mut rng)?;
    let lift = lift_to_manifold(&model, &phi)?;
    println!(
        "twodelay: defect {:?} removed, residual {:.2e}, L moved by {:.1e}",
        lift.defect,
        lift.residual,
        solman::atlas::l_distance(&model, &phi, &lift.phi)?
    );
    let atlas = seeded_atlas(&model, 0)?;
    let (chart, image) = atlas.chart_for(&lift.phi)?;
    println!(
        "chart {} maps it to slope {:?} at 0",
        chart.kind(),
        image.deriv_at_zero()
    );
    Ok(())
}
