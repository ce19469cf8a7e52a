//! Radial wave in the compactified picture: radiation field, front and Fourier phase.
//!
//! cargo run --release --example radiation_field

use sojourn::flow::{sojourn_limit, unit_covector, FlowOptions};
use sojourn::geometry::ManifoldModel;
use sojourn::radiation::*;

fn main() -> sojourn::Result<()> {
    let grid = ReducedGrid::with_cfl(-8.0, 0.0, 1.0, 2.5e-3, 0)?;
    let cases = [
        (ManifoldModel::flat(3), PulseKind::Regular),
        (ManifoldModel::radial_scattering(3, 0.3)?, PulseKind::Outgoing),
    ];
    for (model, kind) in cases {
        let pulse = PulseSpec::new(5.0, 0.2, 3, kind)?;
        let field = solve_rescaled_wave(&model, &grid, &pulse)?;
        let trace = extract_radiation_field(&field);
        let front = front_location(&trace, 0.05)?;
        let z = [5.0, 0.0, 0.0];
        let s = sojourn_limit(&model, &z, &unit_covector(&model, &z, &[1.0, 0.0, 0.0])?, &FlowOptions::default())?.s;
        let slope = fourier_phase_slope(&trace, 5.0, 15.0, 64)?;
        println!(
            "{:<22} front {:+.5} (flow sojourn {s:+.5}, ds {:.1e}), Fourier slope {slope:+.4}",
            model.model_id.name(),
            front.s_front,
            grid.ds
        );
        if kind == PulseKind::Regular {
            let exact: Vec<f64> = trace.s.iter().map(|s| flat_mode_trace(&pulse, 0, *s)).collect();
            let peak = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = trace.values.iter().zip(&exact).map(|(v, e)| (v - e).abs()).fold(0.0, f64::max);
            println!("    max deviation from the closed form {:.2e} of the peak", err / peak);
        }
    }
    Ok(())
}
