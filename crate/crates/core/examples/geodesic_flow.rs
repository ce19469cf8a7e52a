//! Integrate one geodesic through the chart switch and read off its boundary limits.
//!
//! cargo run --example geodesic_flow

use sojourn::flow::*;
use sojourn::geometry::ManifoldModel;

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::perturbed_scattering(3, 0.3, 0.5)?;
    let z = [1.0, -2.0, 0.5];
    let zeta = unit_covector(&model, &z, &[0.6, 0.8, 0.0])?;
    let opts = FlowOptions::default();

    let path = integrate_geodesic(&model, &z, &zeta, &opts)?;
    println!("status {:?} after {} samples", path.status, path.samples.len());
    println!("p drift     {:.2e}", path.p_drift(&model));
    println!("sigma drift {:.2e}", path.sigma_drift());
    println!("speed drift {:.2e}", path.speed_drift());

    let lim = boundary_limits(&model, &path)?;
    println!("s = {:.12}  sigma = {:.12}", lim.s, lim.sigma);
    println!("y = {:?}", lim.y);
    println!("eta = {:?}  (consistency {:.1e})", lim.eta, lim.err);

    // Doubling the covector doubles (sigma, eta) and leaves (s, y) alone.
    let twice: Vec<f64> = zeta.iter().map(|v| 2.0 * v).collect();
    let lim2 = sojourn_limit(&model, &z, &twice, &opts)?;
    println!("2ζ: s = {:.12}  sigma = {:.12}", lim2.s, lim2.sigma);
    Ok(())
}
