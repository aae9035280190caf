//! Drop one quadrant from training and compare CRM, ERM and the Bayes rule on all four.

use crm::experiments::{run_quadrant2d, ExperimentConfig};

fn main() -> crm::Result<()> {
    let mut cfg = ExperimentConfig::quadrant2d();
    cfg.out = std::env::temp_dir().join("crm_quadrant2d");
    let out = run_quadrant2d(&cfg)?;
    println!("Bayes worst-group ceiling {:.4}", out.worst_ceiling);
    for s in &out.seeds {
        println!(
            "seed {}: CRM wga {:.3}  ERM wga {:.3}  learned-bias wga {:.3}",
            s.seed, s.crm.worst_group_acc, s.erm.worst_group_acc, s.bhat_ablation.worst_group_acc
        );
    }
    for c in out.checks() {
        println!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!("outputs in {}", cfg.out.display());
    Ok(())
}
