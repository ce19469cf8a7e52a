//! All geodesics from an interior point to one boundary point of a focusing metric.
//!
//! cargo run --release --example branch_search

use sojourn::geometry::ManifoldModel;
use sojourn::sojourn::*;

fn main() -> sojourn::Result<()> {
    let model = ManifoldModel::perturbed_scattering(2, -0.3, 0.4)?;
    let z = [1.5, -3.0];
    let target = [1.9f64.cos(), 1.9f64.sin()];
    let set = find_branches(&model, &z, &target, &SearchOptions::default())?;
    println!("{:?}", set.meta);
    for b in &set.branches {
        println!(
            "dir {:+.6?}  s {:+.9}  J {:.6e} (±{:.0e})  k {}  newton steps {}",
            b.dir,
            b.limit.s,
            b.jacobian,
            b.jacobian_err,
            b.conj_count,
            b.newton_history.len()
        );
    }
    let report = nondegeneracy_report(&set);
    println!("degenerate branches: {:?}", report.failing);
    Ok(())
}
