//! Extrapolated vs learned bias, uniform vs empirical prior, for every dropped quadrant.

use crm::experiments::{run_ablation, ExperimentConfig};

fn main() -> crm::Result<()> {
    let mut cfg = ExperimentConfig::ablation();
    cfg.out = std::env::temp_dir().join("crm_ablation");
    let out = run_ablation(&cfg)?;
    print!("{}", std::fs::read_to_string(cfg.out.join("ablation.txt"))?);
    for c in out.checks() {
        println!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(())
}
