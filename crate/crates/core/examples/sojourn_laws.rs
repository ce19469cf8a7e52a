//! Sojourn relation on the two exact models against their closed forms.
//!
//! cargo run --example sojourn_laws

use sojourn::flow::*;
use sojourn::geometry::ManifoldModel;
use sojourn::poisson::h3_oracle_phase;

fn main() -> sojourn::Result<()> {
    let opts = FlowOptions::default();

    let flat = ManifoldModel::flat(3);
    let mut worst: f64 = 0.0;
    for z in [[1.0, 0.0, 0.0], [0.5, -2.0, 1.0], [3.0, 1.0, -0.5]] {
        for theta in [[0.0, 1.0, 0.0], [0.6, 0.0, 0.8], [-1.0, 0.0, 0.0]] {
            let lim = sojourn_limit(&flat, &z, &unit_covector(&flat, &z, &theta)?, &opts)?;
            let exact = -(theta[0] * z[0] + theta[1] * z[1] + theta[2] * z[2]);
            worst = worst.max((lim.s - exact).abs());
        }
    }
    println!("flat: max |s + θ·z| = {worst:.2e}");

    let h3 = ManifoldModel::hyperbolic(3);
    let mut worst: f64 = 0.0;
    for z in [[0.7, 0.1, -0.2], [1.3, 0.0, 0.4], [0.3, -1.0, 1.0]] {
        for u in [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.7071067811865476]] {
            let lim = sojourn_limit(&h3, &z, &unit_covector(&h3, &z, &u)?, &opts)?;
            worst = worst.max((lim.s - h3_oracle_phase(&z, &lim.y)).abs());
        }
    }
    println!("H3: max |s - log((x² + |y-y'|²)/x)| = {worst:.2e}");
    Ok(())
}
