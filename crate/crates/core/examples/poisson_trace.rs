//! Euclidean Poisson trace from the branch sum, mollified, against the exact kernel.
//!
//! cargo run --release --example poisson_trace

use sojourn::geometry::ManifoldModel;
use sojourn::poisson::*;
use sojourn::sojourn::SearchOptions;

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::flat(3);
    let z = [0.5, -2.0, 1.0];
    let theta = [0.0, 0.6, 0.8];
    let grid = LambdaGrid::uniform(10.0, 100.0, 4096)?;
    let conv = Convention::for_model(&model);

    let trace = synthesize_trace(&model, &z, &theta, &grid, &conv, &SearchOptions::default())?;
    let exact = conjugate_trace(&euclidean_oracle_trace(&z, &theta, &grid));
    let c = compare_traces(&trace, &exact, None)?;
    println!("unmollified: rel L2 {:.2e}, phase slope {:.12}", c.rel_l2, c.phase_slope_a);

    let m = Mollifier::new(1.0)?;
    let c = compare_traces(&mollify(&trace, &m)?, &mollify(&exact, &m)?, None)?;
    println!("mollified:   rel L2 {:.2e}", c.rel_l2);
    println!("expected phase slope -θ·z = {:.12}", -(0.6 * -2.0 + 0.8 * 1.0));
    Ok(())
}
