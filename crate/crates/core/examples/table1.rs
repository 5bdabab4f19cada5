//! Prints the four controller comparisons on both problem groups.

use rk_stepsize::control::{ControllerKind, ParamSet};
use rk_stepsize::workbench::{compare, default_targets, default_tau_grid, ControllerSpec};
use rk_stepsize::Registry;

fn main() -> rk_stepsize::Result<()> {
    let registry = Registry::new();
    let new = ControllerSpec::named(ControllerKind::New, ParamSet::NewOptimized);
    let std_opt = ControllerSpec::named(ControllerKind::Standard, ParamSet::StandardOptimized);
    let std_rec = ControllerSpec::named(ControllerKind::Standard, ParamSet::StandardRecommended);
    for group in ["group1", "group2"] {
        let (suite, dropped) = registry.resolve_suite(group)?;
        if !dropped.is_empty() {
            eprintln!("note: {group} without {}", dropped.join(", "));
        }
        for b in [&std_opt, &std_rec] {
            let table = compare(&registry, &suite, &new, b, &default_targets(), &default_tau_grid())?;
            println!("{}", table.to_text());
        }
    }
    Ok(())
}
