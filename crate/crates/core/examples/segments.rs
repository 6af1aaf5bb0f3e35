//! Hermite segments on a grid: evaluation, arithmetic, JSON round trip.

use solman::{Grid, SegmentC1};

fn main() -> solman::Result<()> {
    let grid = Grid::uniform(1.0, 17)?;
    // phi(t) = (sin 3t, t^2) with exact node slopes
    let phi = SegmentC1::from_fn(grid.clone(), 2, |t| {
        (
            vec![(3.0 * t).sin(), t * t],
            vec![3.0 * (3.0 * t).cos(), 2.0 * t],
        )
    });
    for t in [-1.0, -0.37, 0.0] {
        let v = phi.eval(t)?;
        println!(
            "phi({t:>5}) = ({:+.6}, {:+.6})   exact ({:+.6}, {:+.6})",
            v[0],
            v[1],
            (3.0 * t).sin(),
            t * t
        );
    }
    println!(
        "|phi|_C0 = {:.6}  |phi|_C1 = {:.6}",
        phi.norm_c0(),
        phi.norm_c1()
    );

    let psi = phi.lin_comb(2.0, -1.0, &SegmentC1::constant(grid, &[1.0, 1.0]))?;
    println!("(2 phi - 1)(0) = {:?}", psi.value_at_zero());

    let json = phi.to_json()?;
    let back = SegmentC1::from_json(&json)?;
    println!(
        "JSON round trip exact: {}  ({} bytes)",
        back == phi,
        json.len()
    );
    Ok(())
}
