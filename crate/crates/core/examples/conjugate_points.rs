//! Jacobi fields along a sweep of rays through the focusing cap.
//!
//! cargo run --release --example conjugate_points

use sojourn::flow::CoFrame;
use sojourn::geometry::ManifoldModel;
use sojourn::sojourn::*;

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::perturbed_scattering(2, -0.3, 0.4)?;
    let z = [1.5, -3.0];
    let frame = CoFrame::at(&model, &z)?;
    let opts = SearchOptions::default();
    for k in 0..=10 {
        let a = 1.55 + 0.02 * k as f64;
        let dir = frame.covector(&[a.cos(), a.sin()]);
        let tr = jacobi_trace(&model, &z, &dir, &opts.conjugate, &opts.flow, opts.conjugate.max_step)?;
        let (_, signed) = variational_jacobian(&model, &z, &dir, &opts.flow)?;
        println!(
            "angle {a:.2}: zeros inside {} + beyond {}, signed det ∂y/∂u {signed:+.4}",
            tr.interior_zeros, tr.extrapolated_zeros
        );
    }
    Ok(())
}
