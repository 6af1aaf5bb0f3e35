//! Evaluating a built-in model: L, delays, hat evaluation, f and Df.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solman::builtin::{self, Params};
use solman::sampling::random_segment;

fn main() -> solman::Result<()> {
    let b = builtin::eq1(&Params::default())?;
    let m = &b.model;
    println!("{}: {}", b.id, b.description);
    println!(
        "n = {}, k = {}, r = {}, hypothesis {}",
        m.n(),
        m.k(),
        m.r(),
        m.hypothesis()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_segment(&mut rng, m.grid(), m.n(), 0.5);
    let chi = random_segment(&mut rng, m.grid(), m.n(), 1.0);
    let w = m.apply_l(&phi)?;
    println!("L phi      = {w:?}");
    println!("delays     = {:?}", m.delays_at(&w)?);
    println!("stratum    = {}", m.classify(&w)?);
    println!("hat(phi)   = {:?}", m.hat(&phi)?);
    println!("f(phi)     = {:?}", m.rhs_f(&phi)?);

    let df = m.df(&phi, &chi)?;
    println!("Df(phi)chi = {df:?}");
    println!(
        "relative gap to central differences: {:.2e}",
        solman::harness::df_fd_error(m, &phi, &chi)?
    );
    println!(
        "on-manifold residual of phi: {:.3e}",
        m.on_manifold_residual(&phi)?
    );
    Ok(())
}
