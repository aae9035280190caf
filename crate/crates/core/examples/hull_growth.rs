//! How many uniformly sampled groups it takes for the hull to cover the grid.

use crm::affine_hull::{
    expected_subgrid_procedure_samples, simulate_hull_growth, spanning_sample_bound,
};
use crm::attribute_space::AttributeSpec;

fn main() -> crm::Result<()> {
    println!(
        "{:>4} {:>8} {:>8} {:>10} {:>10}",
        "d", "mean", "p90", "procedure", "bound c=2"
    );
    for d in [2, 5, 10, 20] {
        let spec = AttributeSpec::uniform(2, d)?;
        let bound = spanning_sample_bound(2, d, 2.0);
        let curve = simulate_hull_growth(&spec, 2_000, 0, 2 * bound.ceil() as usize)?;
        let s = curve.summary();
        println!(
            "{d:>4} {:>8.1} {:>8.1} {:>10.1} {:>10.1}",
            s.mean_samples_to_span,
            s.p90_samples_to_span,
            expected_subgrid_procedure_samples(d),
            bound
        );
    }
    Ok(())
}
