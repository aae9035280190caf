//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 a `--check` found a failing check.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::affine_hull::{connected_components, enumerate_hull, in_affine_hull};
use crate::attribute_space::{AttributeSpec, Group, GroupSet};
use crate::crm::{extrapolate_bias, fit_crm, TestPredictor};
use crate::error::Result;
use crate::evaluation::{attribute_predictions, evaluate, evaluate_groups, group_predictions};
use crate::experiments::{self, Check, ExperimentConfig, ExperimentKind};
use crate::io;
use crate::synthetic::{drop_groups, sample_dataset, Dataset, ShiftScenario, Side};
use crate::table::GroupTable;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "crm",
    version,
    about = "Compositional risk minimization on synthetic additive-energy data"
)]
pub struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with status 4 if any check fails.
    #[arg(long, global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Affine hull of a group set.
    Hull {
        /// Cardinalities, e.g. `2,2`.
        #[arg(long, value_delimiter = ',')]
        spec: Vec<usize>,
        /// Groups as JSON, 0-based, e.g. `[[0,0],[0,1],[1,0]]`.
        #[arg(long)]
        groups: String,
        /// Also test membership of this group (JSON).
        #[arg(long)]
        query: Option<String>,
    },
    /// Sample train and test datasets plus the scenario.
    Gen,
    /// Fit CRM on a generated directory and save the test predictor.
    Train {
        /// Directory written by `gen`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Write test-support posteriors for every row of a dataset.
    Predict {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a predictor on a dataset.
    Eval {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score this attribute instead of whole groups.
        #[arg(long)]
        attribute: Option<usize>,
    },
    /// Run an experiment recipe.
    Exp {
        /// quadrant2d, hull-growth, group-complexity, ablation or custom.
        kind: String,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(checks) => {
            let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if cli.check && !failed.is_empty() {
                EXIT_CHECK
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn load_config(cli: &Cli, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            // a kind on the command line selects that kind's defaults underneath the file
            if let (Some(k), Some(obj)) = (kind, value.as_object_mut()) {
                obj.insert("kind".into(), serde_json::to_value(k)?);
                let mut base = serde_json::to_value(ExperimentConfig::default_for(k))?;
                merge(&mut base, value);
                value = base;
            }
            serde_json::from_value(value)?
        }
        None => ExperimentConfig::default_for(kind.unwrap_or(ExperimentKind::Quadrant2d)),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn parse_groups(text: &str) -> Result<GroupSet> {
    let groups: Vec<Group> = serde_json::from_str(text)?;
    Ok(groups.into_iter().collect())
}

fn dispatch(cli: &Cli) -> Result<Vec<Check>> {
    match &cli.command {
        Command::Hull {
            spec,
            groups,
            query,
        } => hull(cli, spec, groups, query.as_deref()),
        Command::Gen => gen(&load_config(cli, None)?),
        Command::Train { data } => train(&load_config(cli, None)?, data),
        Command::Predict { predictor, data } => predict(cli, predictor, data),
        Command::Eval {
            predictor,
            data,
            attribute,
        } => eval(cli, predictor, data, *attribute),
        Command::Exp { kind } => {
            let cfg = load_config(cli, Some(kind.parse()?))?;
            experiments::run(&cfg)
        }
    }
}

#[derive(serde::Serialize)]
struct HullOutput {
    hull: GroupSet,
    components: Vec<GroupSet>,
    full_grid: bool,
    query: Option<crate::affine_hull::AffineMembershipResult>,
}

fn hull(cli: &Cli, spec: &[usize], groups: &str, query: Option<&str>) -> Result<Vec<Check>> {
    let spec = AttributeSpec::new(spec.to_vec())?;
    let train = parse_groups(groups)?;
    let hull = enumerate_hull(&train, &spec)?;
    let query = match query {
        Some(q) => Some(in_affine_hull(&serde_json::from_str(q)?, &train, &spec)?),
        None => None,
    };
    let out = HullOutput {
        full_grid: Some(hull.len()) == spec.total_groups(),
        components: if spec.num_attributes() == 2 {
            connected_components(&train)
        } else {
            Vec::new()
        },
        hull,
        query,
    };
    emit(cli.out.as_deref(), "hull.json", &out)?;
    Ok(Vec::new())
}

fn emit<T: serde::Serialize>(out: Option<&Path>, name: &str, value: &T) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            io::write_json(&dir.join(name), value)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn gen(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let seed = cfg.seeds[0];
    let aed = cfg.aed.build(&cfg.spec, seed)?;
    let grid = cfg.spec.full_grid();
    let scenario = drop_groups(
        &grid,
        &cfg.scenario.drop.iter().cloned().collect(),
        &cfg.spec,
    )?;
    std::fs::create_dir_all(&cfg.out)?;
    sample_dataset(&aed, Side::Train, &scenario, cfg.n_train, seed)?
        .save(&cfg.out.join("train"))?;
    sample_dataset(&aed, Side::Test, &scenario, cfg.n_test, seed)?.save(&cfg.out.join("test"))?;
    scenario.save(&cfg.out.join("scenario.json"))?;
    io::write_json(&cfg.out.join("aed.json"), &aed)?;
    io::write_json(&cfg.out.join("config.json"), &cfg.canonical())?;
    Ok(Vec::new())
}

fn train(cfg: &ExperimentConfig, data: &Path) -> Result<Vec<Check>> {
    let scenario = ShiftScenario::load(&data.join("scenario.json"), &cfg.spec)?;
    let train = Dataset::load(&data.join("train"))?;
    let fit = fit_crm(&cfg.spec, &train, &scenario, &cfg.train)?;
    let model = Arc::new(fit.model);
    let b_star = extrapolate_bias(&model, &train, scenario.test_support())?;
    let predictor = TestPredictor::new(
        "CRM",
        model,
        &scenario.test_prior,
        b_star.table.clone(),
        crate::crm::BiasSource::Extrapolated,
        crate::crm::PriorSource::Given,
    )?;
    predictor.save(&cfg.out.join("predictor"), Some(&b_star))?;
    io::write_json(&cfg.out.join("train_report.json"), &fit.report)?;
    Ok(vec![Check {
        name: "training loss decreased".into(),
        passed: fit.report.final_train_loss < fit.report.initial_loss,
        detail: format!(
            "{:.4} -> {:.4}",
            fit.report.initial_loss, fit.report.final_train_loss
        ),
    }])
}

fn posteriors(predictor: &TestPredictor, data: &Dataset) -> Result<Vec<GroupTable>> {
    data.rows().map(|x| predictor.predict(x)).collect()
}

fn predict(cli: &Cli, predictor: &Path, data: &Path) -> Result<Vec<Check>> {
    let p = TestPredictor::load(predictor)?;
    let data = Dataset::load(data)?;
    let post = posteriors(&p, &data)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let mut w = csv::Writer::from_path(out.join("posteriors.csv"))?;
    let mut header = vec!["row".to_string()];
    header.extend(p.test_support().iter().map(|g| g.to_string()));
    w.write_record(&header)?;
    for (i, t) in post.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(t.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(Vec::new())
}

fn eval(cli: &Cli, predictor: &Path, data: &Path, attribute: Option<usize>) -> Result<Vec<Check>> {
    let p = TestPredictor::load(predictor)?;
    let data = Dataset::load(data)?;
    let post = posteriors(&p, &data)?;
    let groups = data.label_support().sorted();
    let report = match attribute {
        Some(a) => evaluate(
            &attribute_predictions(&post, a, p.model.spec())?,
            &data.labels,
            a,
            &groups,
        )?,
        None => evaluate_groups(&group_predictions(&post), &data.labels, &groups)?,
    }
    .tagged("cli", p.name.clone(), cli.seed.unwrap_or(0));
    println!("{report}");
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        report.save_json(&out.join("report.json"))?;
        std::fs::write(out.join("report.txt"), format!("{report}\n"))?;
    }
    Ok(Vec::new())
}
