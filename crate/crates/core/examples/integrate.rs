//! Integrating the semiflow of `mvw` and watching the on-manifold residual.

use solman::builtin::{self, Params};
use solman::{integrate, lift_to_manifold, SegmentC1};

fn main() -> solman::Result<()> {
    let model = builtin::mvw(&Params::default())?.model;
    let phi0 = lift_to_manifold(&model, &SegmentC1::constant(model.grid().clone(), &[0.8]))?.phi;
    for h in [0.05, 0.025, 0.0125] {
        let traj = integrate(&model, &phi0, h, 10.0)?;
        println!(
            "h = {h:<7} x(10) = {:+.10}  max midpoint residual {:.3e}",
            traj.x(10.0)?[0],
            traj.max_residual()
        );
    }
    let traj = integrate(&model, &phi0, 0.0125, 10.0)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, 80)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
