//! Eisenstein asymptotics on hyperbolic 3-space: phase, power law and calibrated constant.
//!
//! cargo run --release --example eisenstein_h3

use sojourn::geometry::ManifoldModel;
use sojourn::poisson::*;
use sojourn::sojourn::{boundary_jacobian, SearchOptions};

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::hyperbolic(3);
    let z = [0.7, 0.1, -0.2];
    let y = [0.5, 0.3];
    let grid = LambdaGrid::default();

    let trace = synthesize_trace(&model, &z, &y, &grid, &Convention::for_model(&model), &SearchOptions::default())?;
    let oracle = h3_oracle_trace(&z, &y, &grid);
    let c = compare_traces(&trace, &oracle, None)?;
    let k = calibrate_constant(&trace, &oracle)?;
    let rel = compare_traces(&trace, &scale_trace(&oracle, k), None)?.rel_l2;
    println!("phase slope {:.12} vs {:.12}", c.phase_slope_a, c.phase_slope_b);
    println!("amplitude exponent {:.9} (expected 0)", c.amp_exponent_a);
    println!("calibrated constant {k:.9}, rel L2 after calibration {rel:.2e}");

    // Vertical geodesic from height x0 lands at y with Jacobian (x0/2)^2.
    let x0 = 0.7;
    let j = boundary_jacobian(&model, &[x0, 0.0, 0.0], &[-1.0 / x0, 0.0, 0.0])?;
    println!("vertical Jacobian {:.9} vs {:.9}", j.value, (x0 / 2.0f64).powi(2));
    Ok(())
}
