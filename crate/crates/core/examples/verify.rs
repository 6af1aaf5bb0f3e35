//! The verification suite on every built-in model.

use solman::builtin::{Params, IDS};
use solman::{run_builtin, SuiteConfig};

fn main() -> solman::Result<()> {
    let cfg = SuiteConfig::default();
    let mut all_passed = true;
    for id in IDS {
        let report = run_builtin(id, &Params::default(), &cfg)?;
        print!("{}", report.to_text());
        all_passed &= report.passed();
    }
    if !all_passed {
        std::process::exit(1);
    }
    Ok(())
}
