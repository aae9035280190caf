//! Accuracy as fewer groups are kept for training (pass `8 2` for eight binary attributes).

use crm::experiments::{run_group_complexity, ExperimentConfig};

fn main() -> crm::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let (m, d) = match args[..] {
        [m, d] => (m, d),
        _ => (2, 10),
    };
    let mut cfg = ExperimentConfig::group_complexity(m, d);
    cfg.out = std::env::temp_dir().join(format!("crm_group_complexity_m{m}_d{d}"));
    cfg.threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_group_complexity(&cfg)?;
    println!(
        "{:>8} {:>10} {:>10} {:>8}",
        "retained", "attr acc", "group acc", "drop"
    );
    for r in &out.rows {
        println!(
            "{:>8.2} {:>10.4} {:>10.4} {:>8}",
            r.fraction,
            r.attribute_acc.mean,
            r.group_acc.mean,
            r.drop_vs_full.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    if !out.infeasible_fractions.is_empty() {
        println!(
            "skipped (too few groups to cover every value): {:?}",
            out.infeasible_fractions
        );
    }
    Ok(())
}
