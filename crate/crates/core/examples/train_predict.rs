//! Library walk-through: sample data, fit, extrapolate the bias, predict and score.

use std::sync::Arc;

use crm::attribute_space::Group;
use crm::crm::{extrapolate_bias, fit_crm, TestPredictor, TrainConfig};
use crm::evaluation::{evaluate_groups, group_predictions, oracle_agreement};
use crm::synthetic::{bayes_posterior, drop_group, make_2d_quadrant_spec, sample_dataset, Side};
use crm::table::GroupTable;

fn main() -> crm::Result<()> {
    let aed = make_2d_quadrant_spec();
    let grid = aed.spec.full_grid();
    let scenario = drop_group(&grid, &Group::from([0, 0]), &aed.spec)?;
    let train = sample_dataset(&aed, Side::Train, &scenario, 20_000, 0)?;
    let test = sample_dataset(&aed, Side::Test, &scenario, 5_000, 0)?;

    let fit = fit_crm(&aed.spec, &train, &scenario, &TrainConfig::default())?;
    println!(
        "loss {:.4} -> {:.4}",
        fit.report.initial_loss, fit.report.final_train_loss
    );
    let model = Arc::new(fit.model);
    let b_star = extrapolate_bias(&model, &train, &grid)?;
    for (g, b) in b_star.table.iter() {
        println!("B*{g} = {b:.3}");
    }

    let predictor = TestPredictor::crm(model, &b_star, &grid)?;
    let post: Vec<GroupTable> = test
        .rows()
        .map(|x| predictor.predict(x))
        .collect::<crm::Result<_>>()?;
    let uniform = GroupTable::uniform(grid.clone());
    let bayes: Vec<GroupTable> = test
        .rows()
        .map(|x| bayes_posterior(x, &aed, &uniform))
        .collect::<crm::Result<_>>()?;
    let report = evaluate_groups(&group_predictions(&post), &test.labels, &grid)?
        .tagged("quadrant", "CRM", 0)
        .with_oracle(oracle_agreement(&post, &bayes)?);
    println!("{report}");

    let dir = std::env::temp_dir().join("crm_train_predict");
    predictor.save(&dir, Some(&b_star))?;
    let reloaded = TestPredictor::load(&dir)?;
    assert_eq!(reloaded.predict(test.row(0))?, post[0]);
    println!("predictor saved to {}", dir.display());
    Ok(())
}
