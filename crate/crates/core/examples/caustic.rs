//! A target on a fold: detection of the degenerate branch and refusal to synthesize.
//!
//! cargo run --release --example caustic

use sojourn::geometry::ManifoldModel;
use sojourn::poisson::*;
use sojourn::sojourn::*;

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::perturbed_scattering(2, -0.3, 0.4)?;
    let z = [1.5, -3.0];
    let fold = [-0.42770574326829225, 0.9039180256944307];

    let set = find_branches(&model, &z, &fold, &SearchOptions::default())?;
    for e in nondegeneracy_report(&set).entries {
        println!(
            "branch {}: J = {:.3e}, quadratic Newton {}, nondegenerate {}",
            e.index, e.jacobian, e.quadratic_newton, e.nondegenerate
        );
    }
    let conv = Convention::for_model(&model);
    match synthesize_from_branches(&set, &LambdaGrid::default(), &conv) {
        Ok(_) => println!("synthesis unexpectedly succeeded"),
        Err(e) => println!("synthesis refused: {e}"),
    }
    Ok(())
}
