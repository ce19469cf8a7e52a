//! Build catalog models and inspect metric, curvature and the chart switch.
//!
//! cargo run --example model_catalog

use sojourn::geometry::*;

fn main() -> sojourn::Result<()> {
    let models = [
        ManifoldModel::flat(3),
        ManifoldModel::hyperbolic(3),
        ManifoldModel::perturbed_scattering(3, 0.2, 0.7)?,
        make_model(&ModelSpec::new(ModelId::PerturbedAH, 2).param("a", -0.1).param("w", 1.5))?,
    ];
    for m in &models {
        let z: Vec<f64> = match m.kind {
            GeometryKind::Scattering => vec![4.0, 3.0, 0.0][..m.dim].to_vec(),
            GeometryKind::AsympHyperbolic => vec![0.15, 0.3, -0.2][..m.dim].to_vec(),
        };
        let g = interior_metric(m, &z)?;
        let r = curvature_operator(m, &z)?;
        let e = |i: usize| (0..m.dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        println!(
            "{:<22} n={} g11={:.6} K(e0,e1)={:+.6} symmetry defect {:.1e}",
            m.model_id.name(),
            m.dim,
            g.metric.components[0][0],
            r.sectional(&e(0), &e(1)),
            r.symmetry_defect()
        );

        let chart = BoundaryChart::default_for(m);
        let p = CotangentPoint {
            point: ChartPoint {
                chart: Chart::Interior,
                coords: z.clone(),
            },
            covector: e(1),
        };
        let collar = chart_transition(m, &p, &chart)?;
        let h = collar_metric_in(m, &chart, collar.point.coords[0], &collar.point.coords[1..])?;
        println!(
            "    collar coords {:?}, h11 = {:.6}",
            collar.point.coords, h.components[0][0]
        );
    }
    Ok(())
}
