//! Certified bump functions: prescribed slope at 0, annihilated by a
//! functional, supported in (z, 0].

use solman::{make_bump, BumpRequest, Functional, Grid, RowFunctional};

fn main() -> solman::Result<()> {
    let grid = Grid::uniform(2.0, 65)?;
    // kill the value at -1.5 and the mean of two off-node points
    let functional = Functional {
        rows: vec![
            RowFunctional::point(-1.5),
            RowFunctional {
                terms: vec![(-0.3, 0.5), (-0.1, 0.5)],
            },
        ],
    };
    for z in [-1.0, -0.5, -0.25] {
        let bump = make_bump(&BumpRequest::new(grid.clone(), functional.clone(), z))?;
        let c = &bump.certificate;
        println!(
            "z = {z:>5}: slope {:.1e}  functional {:.1e}  support {:.1e}  value at 0 {:.1e}  (support from {})",
            c.slope, c.functional, c.support, c.at_zero, bump.support_start
        );
    }
    Ok(())
}
