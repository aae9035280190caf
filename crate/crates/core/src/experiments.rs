//! Experiment recipes: quadrant extrapolation, hull growth, group complexity and the bias/prior ablation.
//!
//! Each runner computes everything first, then writes its files in a fixed
//! order and finishes with `manifest.json` listing the config hash and the
//! SHA-256 of every output. Nothing written depends on wall-clock time or
//! thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::affine_hull::{
    enumerate_hull, expected_samples_two_attributes, expected_subgrid_procedure_samples,
    hull_via_components, simulate_hull_growth_with, simulate_subgrid_procedure,
    spanning_sample_bound, GrowthOptions, GrowthSummary,
};
use crate::attribute_space::{AttributeSpec, Group, GroupSet};
use crate::crm::{
    ablation_variants, extrapolate_bias_bootstrap, fit_crm, fit_erm_group, ErmGroupClassifier,
    ExtrapolatedBias, TestPredictor, TrainConfig, TrainReport,
};
use crate::energy_model::EnergyModel;
use crate::error::{CrmError, Result};
use crate::evaluation::{
    attribute_predictions, evaluate, evaluate_groups, group_predictions, oracle_agreement,
    summarize, summary_text, write_aggregate_csv, EvalReport, MeanStderr,
};
use crate::io;
use crate::synthetic::{
    bayes_posterior, drop_groups, make_2d_quadrant_spec, make_orthogonal_means_scaled,
    random_covering_subset, sample_dataset, Dataset, GaussianAedSpec, ShiftScenario, Side,
};
use crate::table::GroupTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Quadrant2d,
    HullGrowth,
    GroupComplexity,
    Ablation,
    /// Train and evaluate CRM and ERM on the configured AED and drop list.
    Custom,
}

impl std::str::FromStr for ExperimentKind {
    type Err = CrmError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CrmError::InvalidConfig(format!("unknown experiment kind `{s}`")))
    }
}

/// Where the class-conditional densities come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AedSource {
    /// Unit Gaussians centred at `(+-1, +-1)`; requires a 2x2 spec.
    Quadrant,
    /// Orthogonal attribute means of the given norm, redrawn per seed.
    Orthogonal {
        ambient_dim: usize,
        #[serde(default = "one")]
        mean_norm: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl AedSource {
    pub fn build(&self, spec: &AttributeSpec, seed: u64) -> Result<GaussianAedSpec> {
        match self {
            AedSource::Quadrant => {
                let aed = make_2d_quadrant_spec();
                if &aed.spec != spec {
                    return Err(CrmError::InvalidConfig(
                        "the quadrant AED needs a 2x2 attribute spec".into(),
                    ));
                }
                Ok(aed)
            }
            AedSource::Orthogonal {
                ambient_dim,
                mean_norm,
            } => make_orthogonal_means_scaled(spec, *ambient_dim, seed, *mean_norm),
        }
    }
}

/// Named test prior over the full grid, in grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPriorSpec {
    pub name: String,
    /// Unnormalized weights; `None` means uniform.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl TestPriorSpec {
    pub fn uniform() -> Self {
        Self {
            name: "uniform".into(),
            weights: None,
        }
    }

    fn table(&self, grid: &GroupSet) -> Result<GroupTable> {
        match &self.weights {
            None => Ok(GroupTable::uniform(grid.clone())),
            Some(w) if w.len() == grid.len() && w.iter().all(|v| *v >= 0.0) => {
                GroupTable::normalized(grid.clone(), w.clone())
            }
            Some(w) => Err(CrmError::InvalidConfig(format!(
                "test prior `{}` has {} weights for {} groups",
                self.name,
                w.len(),
                grid.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Groups removed from training (0-based values).
    pub drop: Vec<Group>,
    /// For the ablation: each entry is one dropped-group scenario.
    pub drop_each: Vec<Group>,
    pub retained_fractions: Vec<f64>,
    pub test_priors: Vec<TestPriorSpec>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            drop: vec![Group::from([0, 0])],
            drop_each: vec![
                Group::from([0, 0]),
                Group::from([0, 1]),
                Group::from([1, 0]),
                Group::from([1, 1]),
            ],
            retained_fractions: vec![1.0, 0.5, 0.2, 0.1, 0.05],
            test_priors: vec![
                TestPriorSpec::uniform(),
                TestPriorSpec {
                    name: "imbalanced".into(),
                    weights: Some(vec![0.1, 0.2, 0.3, 0.4]),
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HullParams {
    pub num_attributes: usize,
    pub cardinalities: Vec<usize>,
    pub trials: usize,
    pub c_values: Vec<f64>,
    /// Trials stop after `factor * 2c(md + d ln d)` samples for the largest `c`.
    pub max_samples_factor: f64,
    /// Write every trial's rank sequence (large).
    pub full_trace: bool,
}

impl Default for HullParams {
    fn default() -> Self {
        Self {
            num_attributes: 2,
            cardinalities: vec![2, 5, 10, 20, 40],
            trials: 10_000,
            c_values: vec![2.0, 4.0],
            max_samples_factor: 4.0,
            full_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterParams {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for RasterParams {
    fn default() -> Self {
        Self {
            lo: -4.0,
            hi: 4.0,
            steps: 81,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub spec: AttributeSpec,
    pub aed: AedSource,
    pub scenario: ScenarioParams,
    pub train: TrainConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub threads: usize,
    /// Attribute scored by the attribute-level accuracy.
    pub target_attribute: usize,
    pub bootstrap: usize,
    pub raster: RasterParams,
    pub hull: HullParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::quadrant2d()
    }
}

impl ExperimentConfig {
    pub fn quadrant2d() -> Self {
        Self {
            kind: ExperimentKind::Quadrant2d,
            spec: AttributeSpec::uniform(2, 2).expect("2x2"),
            aed: AedSource::Quadrant,
            scenario: ScenarioParams::default(),
            train: TrainConfig::default(),
            n_train: 20_000,
            n_test: 10_000,
            seeds: vec![0, 1, 2],
            out: PathBuf::from("out"),
            threads: 1,
            target_attribute: 0,
            bootstrap: 0,
            raster: RasterParams::default(),
            hull: HullParams::default(),
        }
    }

    pub fn ablation() -> Self {
        Self {
            kind: ExperimentKind::Ablation,
            ..Self::quadrant2d()
        }
    }

    pub fn hull_growth() -> Self {
        Self {
            kind: ExperimentKind::HullGrowth,
            ..Self::quadrant2d()
        }
    }

    /// `m` attributes with `d` values each, orthogonal means in 100 dimensions.
    pub fn group_complexity(m: usize, d: usize) -> Self {
        Self {
            kind: ExperimentKind::GroupComplexity,
            spec: AttributeSpec::uniform(m, d).expect("valid spec"),
            aed: AedSource::Orthogonal {
                ambient_dim: 100,
                mean_norm: 1.0,
            },
            n_test: 5_000,
            scenario: ScenarioParams {
                retained_fractions: if m == 2 {
                    vec![1.0, 0.5, 0.3, 0.2, 0.1]
                } else {
                    vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02]
                },
                ..ScenarioParams::default()
            },
            ..Self::quadrant2d()
        }
    }

    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Quadrant2d => Self::quadrant2d(),
            ExperimentKind::HullGrowth => Self::hull_growth(),
            ExperimentKind::GroupComplexity => Self::group_complexity(2, 10),
            ExperimentKind::Ablation => Self::ablation(),
            ExperimentKind::Custom => Self {
                kind,
                ..Self::quadrant2d()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CrmError::InvalidConfig("seeds must be non-empty".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(CrmError::InvalidConfig(
                "sample counts must be positive".into(),
            ));
        }
        if self.target_attribute >= self.spec.num_attributes() {
            return Err(CrmError::InvalidConfig(format!(
                "target attribute {} out of range",
                self.target_attribute
            )));
        }
        self.train.validate()?;
        if let Some(f) = self
            .scenario
            .retained_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(CrmError::InvalidConfig(format!(
                "retained fraction {f} outside (0, 1]"
            )));
        }
        if self.raster.steps < 2 || !(self.raster.hi > self.raster.lo) {
            return Err(CrmError::InvalidConfig(
                "raster needs at least 2 steps and hi > lo".into(),
            ));
        }
        Ok(())
    }

    /// The config with run-location fields (`out`, `threads`) reset; these never change results.
    pub fn canonical(&self) -> Self {
        Self {
            out: PathBuf::new(),
            threads: 1,
            ..self.clone()
        }
    }

    /// Stable hash of the canonical config.
    pub fn hash(&self) -> Result<String> {
        io::value_id(&self.canonical())
    }
}

/// A named pass/fail outcome, used by `--check` and the acceptance suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ExperimentKind,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Output path (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Collects output files and their hashes.
struct Outputs {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.path(rel)?, bytes)?;
        self.hashes.insert(rel.to_string(), io::content_hash(bytes));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(rel, text.as_bytes())
    }

    fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        self.bytes(rel, text.as_bytes())
    }

    /// Registers a file written by someone else.
    fn adopt(&mut self, rel: &str) -> Result<()> {
        let bytes = std::fs::read(self.root.join(rel))?;
        self.hashes
            .insert(rel.to_string(), io::content_hash(&bytes));
        Ok(())
    }

    fn csv(
        &mut self,
        rel: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CrmError::Format(e.to_string()))?;
        self.bytes(rel, &bytes)
    }

    fn finish(mut self, config: &ExperimentConfig) -> Result<Manifest> {
        let manifest = Manifest {
            kind: config.kind,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash()?,
            config: config.canonical(),
            seeds: config.seeds.clone(),
            outputs: std::mem::take(&mut self.hashes),
        };
        io::write_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if threads <= 1 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CrmError::InvalidConfig(e.to_string()))?;
    Ok(pool.install(job))
}

/// Runs `f` for every seed, in parallel when `threads > 1`, returning results in seed order.
fn per_seed<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    in_pool(cfg.threads, || {
        if cfg.threads > 1 {
            cfg.seeds.par_iter().map(|&s| f(s)).collect()
        } else {
            cfg.seeds.iter().map(|&s| f(s)).collect()
        }
    })?
}

fn posteriors(data: &Dataset, f: impl Fn(&[f64]) -> Result<GroupTable>) -> Result<Vec<GroupTable>> {
    data.rows().map(f).collect()
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.train.clone()
    }
}

/// Per-group accuracy of the Bayes rule when each region is the orthant of its mean.
///
/// Exact for isotropic Gaussians whose means sit in distinct orthants of the plane.
pub fn quadrant_bayes_ceiling(aed: &GaussianAedSpec) -> Result<GroupTable> {
    let normal =
        Normal::new(0.0, aed.std_dev()).map_err(|e| CrmError::InvalidSpec(e.to_string()))?;
    let grid = aed.spec.full_grid();
    let values = grid
        .iter()
        .map(|g| {
            aed.group_mean(g)
                .iter()
                .map(|m| normal.cdf(m.abs()))
                .product()
        })
        .collect();
    GroupTable::new(grid, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterPoint {
    pub x1: f64,
    pub x2: f64,
    pub crm_train_prior: Group,
    pub crm_uniform: Group,
    pub erm: Group,
    pub bayes: Group,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub crm_train_prior: usize,
    pub crm_uniform: usize,
    pub erm: usize,
    pub bayes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantSeedResult {
    pub seed: u64,
    pub crm_fit: TrainReport,
    pub erm_fit: TrainReport,
    /// Group-level reports on the full-grid test set.
    pub crm: EvalReport,
    pub erm: EvalReport,
    pub bayes: EvalReport,
    pub bhat_ablation: EvalReport,
    /// Attribute-level reports for the target attribute.
    pub crm_attribute: EvalReport,
    pub erm_attribute: EvalReport,
    pub b_star: ExtrapolatedBias,
    pub b_hat: GroupTable,
    /// Mean total variation to the Bayes posterior on held-out training-distribution data.
    pub train_support_tv: f64,
    pub regions: RegionCounts,
    #[serde(skip)]
    pub raster: Vec<RasterPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantOutcome {
    pub ceiling: GroupTable,
    pub worst_ceiling: f64,
    pub seeds: Vec<QuadrantSeedResult>,
}

impl QuadrantOutcome {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.seeds {
            let agree = r.crm.oracle.map_or(0.0, |o| o.agreement);
            out.push(Check::new(
                format!("seed {} oracle agreement", r.seed),
                agree >= 0.95,
                format!("{agree:.4} >= 0.95"),
            ));
            out.push(Check::new(
                format!("seed {} worst-group accuracy", r.seed),
                r.crm.worst_group_acc >= self.worst_ceiling - 0.05,
                format!(
                    "{:.4} >= {:.4} - 0.05",
                    r.crm.worst_group_acc, self.worst_ceiling
                ),
            ));
            let erm_unseen = r
                .erm
                .groups
                .iter()
                .filter(|g| !r.b_hat.support.contains(&g.group))
                .filter_map(|g| g.accuracy)
                .fold(0.0, f64::max);
            out.push(Check::new(
                format!("seed {} erm on dropped groups", r.seed),
                erm_unseen == 0.0,
                format!("{erm_unseen:.4} == 0"),
            ));
        }
        out
    }
}

/// Train-prior extrapolation picture in two dimensions: CRM and ERM trained on the grid minus `scenario.drop`.
pub fn run_quadrant2d(cfg: &ExperimentConfig) -> Result<QuadrantOutcome> {
    cfg.validate()?;
    let outcome = quadrant_outcome(cfg)?;
    write_quadrant(cfg, &outcome)?;
    Ok(outcome)
}

fn quadrant_outcome(cfg: &ExperimentConfig) -> Result<QuadrantOutcome> {
    let probe = cfg.aed.build(&cfg.spec, cfg.seeds[0])?;
    let ceiling = quadrant_bayes_ceiling(&probe)?;
    let worst_ceiling = ceiling.values.iter().copied().fold(f64::INFINITY, f64::min);
    let seeds = per_seed(cfg, |seed| quadrant_seed(cfg, seed))?;
    Ok(QuadrantOutcome {
        ceiling,
        worst_ceiling,
        seeds,
    })
}

fn quadrant_seed(cfg: &ExperimentConfig, seed: u64) -> Result<QuadrantSeedResult> {
    let aed = cfg.aed.build(&cfg.spec, seed)?;
    let grid = cfg.spec.full_grid();
    let dropped: GroupSet = cfg.scenario.drop.iter().cloned().collect();
    let scenario = drop_groups(&grid, &dropped, &cfg.spec)?;
    let train = sample_dataset(&aed, Side::Train, &scenario, cfg.n_train, seed)?;
    let test = sample_dataset(&aed, Side::Test, &scenario, cfg.n_test, seed)?;
    let tcfg = train_config(cfg, seed);

    let crm = fit_crm(&cfg.spec, &train, &scenario, &tcfg)?;
    let erm = fit_erm_group(&train, &scenario, &tcfg)?;
    let model = Arc::new(crm.model);
    let b_star = extrapolate_bias_bootstrap(&model, &train, &grid, cfg.bootstrap, seed)?;
    let variants = ablation_variants(model.clone(), &b_star, &scenario, &test.labels)?;
    let (crm_pred, bhat_pred) = (&variants[0], &variants[2]);

    let uniform = GroupTable::uniform(grid.clone());
    let bayes_post = posteriors(&test, |x| bayes_posterior(x, &aed, &uniform))?;
    let crm_post = posteriors(&test, |x| crm_pred.predict(x))?;
    let bhat_post = posteriors(&test, |x| bhat_pred.predict(x))?;
    let erm_post = posteriors(&test, |x| erm.model.posterior_on(x, &grid))?;

    let group_report = |post: &[GroupTable], method: &str| -> Result<EvalReport> {
        Ok(
            evaluate_groups(&group_predictions(post), &test.labels, &grid)?
                .tagged("quadrant2d", method, seed)
                .with_oracle(oracle_agreement(post, &bayes_post)?),
        )
    };
    let attr_report = |post: &[GroupTable], method: &str| -> Result<EvalReport> {
        let preds = attribute_predictions(post, cfg.target_attribute, &cfg.spec)?;
        Ok(
            evaluate(&preds, &test.labels, cfg.target_attribute, &grid)?.tagged(
                "quadrant2d",
                method,
                seed,
            ),
        )
    };

    // held-out data from the training distribution, scored on the training support
    let heldout = sample_dataset(
        &aed,
        Side::Train,
        &scenario,
        cfg.n_test,
        seed.wrapping_add(1 << 32),
    )?;
    let mut tv = 0.0;
    for x in heldout.rows() {
        let fitted = model.log_posterior_train(x)?.map(f64::exp);
        let oracle = bayes_posterior(x, &aed, &scenario.train_prior)?;
        let aligned: Vec<f64> = fitted
            .support
            .iter()
            .map(|g| oracle.get(g).unwrap_or(0.0))
            .collect();
        tv += crate::numeric::total_variation(&fitted.values, &aligned);
    }

    let raster = quadrant_raster(cfg, &aed, &model, crm_pred, &erm.model, &grid)?;
    let distinct =
        |f: fn(&RasterPoint) -> &Group| raster.iter().map(f).cloned().collect::<GroupSet>().len();
    let regions = RegionCounts {
        crm_train_prior: distinct(|p| &p.crm_train_prior),
        crm_uniform: distinct(|p| &p.crm_uniform),
        erm: distinct(|p| &p.erm),
        bayes: distinct(|p| &p.bayes),
    };

    Ok(QuadrantSeedResult {
        seed,
        crm_fit: crm.report,
        erm_fit: erm.report,
        crm: group_report(&crm_post, "CRM")?,
        erm: group_report(&erm_post, "ERM")?,
        bayes: group_report(&bayes_post, "Bayes")?,
        bhat_ablation: group_report(&bhat_post, &bhat_pred.name)?,
        crm_attribute: attr_report(&crm_post, "CRM")?,
        erm_attribute: attr_report(&erm_post, "ERM")?,
        b_hat: model.bias_table(),
        b_star,
        train_support_tv: tv / heldout.len() as f64,
        regions,
        raster,
    })
}

fn quadrant_raster(
    cfg: &ExperimentConfig,
    aed: &GaussianAedSpec,
    model: &EnergyModel,
    crm: &TestPredictor,
    erm: &ErmGroupClassifier,
    grid: &GroupSet,
) -> Result<Vec<RasterPoint>> {
    let RasterParams { lo, hi, steps } = cfg.raster;
    let at = |i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
    let uniform = GroupTable::uniform(grid.clone());
    let mut out = Vec::with_capacity(steps * steps);
    for j in 0..steps {
        for i in 0..steps {
            let x = [at(i), at(j)];
            out.push(RasterPoint {
                x1: x[0],
                x2: x[1],
                crm_train_prior: model.log_posterior_train(&x)?.argmax_group().clone(),
                crm_uniform: crm.predict(&x)?.argmax_group().clone(),
                erm: erm.posterior(&x)?.argmax_group().clone(),
                bayes: bayes_posterior(&x, aed, &uniform)?.argmax_group().clone(),
            });
        }
    }
    Ok(out)
}

fn bias_rows(b_star: &ExtrapolatedBias, b_hat: &GroupTable) -> Vec<Vec<String>> {
    b_star
        .table
        .iter()
        .enumerate()
        .map(|(k, (g, v))| {
            vec![
                g.to_string(),
                v.to_string(),
                b_hat.get(g).map(|b| b.to_string()).unwrap_or_default(),
                b_star
                    .std_error
                    .as_ref()
                    .map(|s| s[k].to_string())
                    .unwrap_or_default(),
            ]
        })
        .collect()
}

fn write_quadrant(cfg: &ExperimentConfig, outcome: &QuadrantOutcome) -> Result<Manifest> {
    let mut out = Outputs::new(&cfg.out)?;
    let mut reports = Vec::new();
    for r in &outcome.seeds {
        let dir = format!("seed_{}", r.seed);
        for rep in [&r.crm, &r.erm, &r.bayes, &r.bhat_ablation] {
            let name = rep
                .method
                .replace(['+', ' ', '*', '\u{302}'], "_")
                .to_lowercase();
            out.json(&format!("{dir}/{name}.json"), rep)?;
            out.text(&format!("{dir}/{name}.txt"), &format!("{rep}\n"))?;
            reports.push(rep.clone());
        }
        out.json(&format!("{dir}/attribute_crm.json"), &r.crm_attribute)?;
        out.json(&format!("{dir}/attribute_erm.json"), &r.erm_attribute)?;
        out.json(&format!("{dir}/fit.json"), &(&r.crm_fit, &r.erm_fit))?;
        out.csv(
            &format!("{dir}/bias.csv"),
            &["group", "b_star", "b_hat_if_any", "b_star_stderr"],
            bias_rows(&r.b_star, &r.b_hat),
        )?;
        out.csv(
            &format!("{dir}/raster.csv"),
            &["x1", "x2", "crm_train_prior", "crm_uniform", "erm", "bayes"],
            r.raster.iter().map(|p| {
                vec![
                    p.x1.to_string(),
                    p.x2.to_string(),
                    p.crm_train_prior.to_string(),
                    p.crm_uniform.to_string(),
                    p.erm.to_string(),
                    p.bayes.to_string(),
                ]
            }),
        )?;
        out.json(&format!("{dir}/regions.json"), &r.regions)?;
    }
    aggregate_files(&mut out, &reports)?;
    out.json("ceiling.json", &outcome.ceiling)?;
    out.json("checks.json", &outcome.checks())?;
    out.finish(cfg)
}

fn aggregate_files(out: &mut Outputs, reports: &[EvalReport]) -> Result<()> {
    let path = out.path("aggregate.csv")?;
    write_aggregate_csv(&path, reports)?;
    out.adopt("aggregate.csv")?;
    out.text("summary.txt", &summary_text(&summarize(reports)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub c: f64,
    pub samples: usize,
    pub fraction_unspanned: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthResult {
    pub num_attributes: usize,
    pub cardinality: usize,
    pub summary: GrowthSummary,
    /// `8 d ln(d/2)` for two attributes.
    pub approx_mean: Option<f64>,
    /// The alternating subgrid procedure behind that approximation (two attributes only).
    pub subgrid_procedure: Option<ProcedureStats>,
    pub markov: Vec<MarkovCheck>,
    /// `(sample index, fraction of trials spanned)`.
    #[serde(skip)]
    pub spanned_curve: Vec<(usize, f64)>,
    #[serde(skip)]
    pub samples_to_span: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureStats {
    pub mean: f64,
    pub exact_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullGrowthOutcome {
    pub results: Vec<GrowthResult>,
}

impl HullGrowthOutcome {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.results {
            for m in &r.markov {
                out.push(Check::new(
                    format!("m={} d={} c={}", r.num_attributes, r.cardinality, m.c),
                    m.passed,
                    format!(
                        "unspanned {:.4} <= {:.4} at s={}",
                        m.fraction_unspanned, m.limit, m.samples
                    ),
                ));
            }
        }
        out
    }
}

/// Sample-complexity curves for the affine hull to cover the full grid under uniform group sampling.
pub fn run_hull_growth(cfg: &ExperimentConfig) -> Result<HullGrowthOutcome> {
    cfg.validate()?;
    let outcome = hull_growth_outcome(cfg)?;
    let mut out = Outputs::new(&cfg.out)?;
    for r in &outcome.results {
        let stem = format!("growth_m{}_d{}", r.num_attributes, r.cardinality);
        out.csv(
            &format!("{stem}_curve.csv"),
            &["sample_index", "fraction_spanned"],
            r.spanned_curve
                .iter()
                .map(|(s, f)| vec![s.to_string(), f.to_string()]),
        )?;
        out.csv(
            &format!("{stem}_trials.csv"),
            &["trial", "samples_to_span"],
            r.samples_to_span
                .iter()
                .enumerate()
                .map(|(t, s)| vec![t.to_string(), s.map(|v| v.to_string()).unwrap_or_default()]),
        )?;
    }
    if cfg.hull.full_trace {
        for &d in &cfg.hull.cardinalities {
            let (spec, curve_max) = growth_setup(cfg, d)?;
            let curve = simulate_hull_growth_with(
                &spec,
                cfg.hull.trials,
                cfg.seeds[0],
                curve_max,
                &growth_options(cfg),
            )?;
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            out.bytes(
                &format!("growth_m{}_d{d}_trace.csv", cfg.hull.num_attributes),
                &buf,
            )?;
        }
    }
    out.json("summary.json", &outcome)?;
    out.json("checks.json", &outcome.checks())?;
    out.finish(cfg)?;
    Ok(outcome)
}

fn growth_options(cfg: &ExperimentConfig) -> GrowthOptions {
    GrowthOptions {
        threads: cfg.threads,
        exact_checkpoints: false,
    }
}

fn growth_setup(cfg: &ExperimentConfig, d: usize) -> Result<(AttributeSpec, usize)> {
    let m = cfg.hull.num_attributes;
    let spec = AttributeSpec::uniform(m, d)?;
    let c_max = cfg.hull.c_values.iter().copied().fold(1.0, f64::max);
    let max = (cfg.hull.max_samples_factor * spanning_sample_bound(m, d, c_max)).ceil() as usize;
    Ok((spec, max.max(1)))
}

fn hull_growth_outcome(cfg: &ExperimentConfig) -> Result<HullGrowthOutcome> {
    let m = cfg.hull.num_attributes;
    let trials = cfg.hull.trials;
    let mut results = Vec::new();
    for &d in &cfg.hull.cardinalities {
        let (spec, max) = growth_setup(cfg, d)?;
        let curve =
            simulate_hull_growth_with(&spec, trials, cfg.seeds[0], max, &growth_options(cfg))?;
        let markov = cfg
            .hull
            .c_values
            .iter()
            .map(|&c| {
                let samples = spanning_sample_bound(m, d, c).floor() as usize;
                let p = 1.0 / c;
                let limit = p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
                let fraction_unspanned = curve.fraction_unspanned_at(samples);
                MarkovCheck {
                    c,
                    samples,
                    fraction_unspanned,
                    limit,
                    passed: fraction_unspanned <= limit,
                }
            })
            .collect();
        let mut spanned_at = vec![0usize; max + 1];
        for t in &curve.trials {
            if let Some(s) = t.samples_to_span {
                spanned_at[s] += 1;
            }
        }
        let mut cum = 0;
        let spanned_curve = (1..=max)
            .map(|s| {
                cum += spanned_at[s];
                (s, cum as f64 / trials as f64)
            })
            .collect();
        results.push(GrowthResult {
            num_attributes: m,
            cardinality: d,
            summary: curve.summary(),
            approx_mean: (m == 2 && d > 2).then(|| expected_samples_two_attributes(d)),
            subgrid_procedure: (m == 2).then(|| {
                let runs = simulate_subgrid_procedure(d, trials, cfg.seeds[0]);
                ProcedureStats {
                    mean: runs.iter().sum::<usize>() as f64 / trials as f64,
                    exact_mean: expected_subgrid_procedure_samples(d),
                }
            }),
            markov,
            spanned_curve,
            samples_to_span: curve.trials.iter().map(|t| t.samples_to_span).collect(),
        });
    }
    Ok(HullGrowthOutcome { results })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityPoint {
    pub fraction: f64,
    pub seed: u64,
    pub retained_groups: usize,
    /// Whether the affine hull of the retained groups is the full grid.
    pub hull_covers: bool,
    pub attribute_acc: f64,
    pub group_acc: f64,
    pub final_train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub fraction: f64,
    pub attribute_acc: MeanStderr,
    pub group_acc: MeanStderr,
    /// Mean attribute accuracy of the full-grid run minus this row's, in accuracy units.
    pub drop_vs_full: Option<f64>,
    pub all_hulls_cover: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityOutcome {
    pub spec: AttributeSpec,
    pub points: Vec<ComplexityPoint>,
    pub rows: Vec<ComplexityRow>,
    /// Fractions too small for any subset to contain every attribute value.
    pub infeasible_fractions: Vec<f64>,
}

impl ComplexityOutcome {
    pub fn row(&self, fraction: f64) -> Option<&ComplexityRow> {
        self.rows.iter().find(|r| r.fraction == fraction)
    }

    /// Accuracy drop at `fraction` no larger than `max_drop`.
    pub fn check_drop(&self, fraction: f64, max_drop: f64) -> Check {
        let name = format!("{} retained {fraction}", spec_label(&self.spec));
        match self.row(fraction).and_then(|r| r.drop_vs_full) {
            Some(drop) => Check::new(
                name,
                drop <= max_drop,
                format!("drop {drop:.4} <= {max_drop}"),
            ),
            None => Check::new(name, false, "missing run"),
        }
    }
}

fn spec_label(spec: &AttributeSpec) -> String {
    match spec.uniform_cardinality() {
        Some(d) => format!("m={} d={d}", spec.num_attributes()),
        None => format!("{:?}", spec.cardinalities()),
    }
}

fn hull_covers(retained: &GroupSet, spec: &AttributeSpec) -> Result<bool> {
    let hull = if spec.num_attributes() == 2 {
        hull_via_components(retained, spec)?
    } else {
        enumerate_hull(retained, spec)?
    };
    Ok(hull.len() == spec.total_groups().unwrap_or(usize::MAX))
}

/// Accuracy as training groups are discarded: one CRM fit per retained fraction and seed, tested on the full grid.
pub fn run_group_complexity(cfg: &ExperimentConfig) -> Result<ComplexityOutcome> {
    cfg.validate()?;
    let spec = &cfg.spec;
    let grid = spec.full_grid();
    let total = grid.len();
    let needed = spec.cardinalities().iter().copied().max().unwrap_or(1);
    let (fractions, infeasible_fractions): (Vec<f64>, Vec<f64>) = cfg
        .scenario
        .retained_fractions
        .iter()
        .partition(|&&f| ((f * total as f64).round() as usize).clamp(1, total) >= needed);
    let jobs: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let run = |&(fraction, seed): &(f64, u64)| -> Result<ComplexityPoint> {
        let aed = cfg.aed.build(spec, seed)?;
        let retained = if fraction >= 1.0 {
            grid.clone()
        } else {
            random_covering_subset(spec, fraction, seed)?
        };
        let scenario = ShiftScenario::uniform(retained.clone(), grid.clone(), spec)?;
        let train = sample_dataset(&aed, Side::Train, &scenario, cfg.n_train, seed)?;
        let test = sample_dataset(&aed, Side::Test, &scenario, cfg.n_test, seed)?;
        let fit = fit_crm(spec, &train, &scenario, &train_config(cfg, seed))?;
        let model = Arc::new(fit.model);
        let b_star = crate::crm::extrapolate_bias(&model, &train, &grid)?;
        let predictor = TestPredictor::crm(model, &b_star, &grid)?;
        let post = posteriors(&test, |x| predictor.predict(x))?;
        let attr = evaluate(
            &attribute_predictions(&post, cfg.target_attribute, spec)?,
            &test.labels,
            cfg.target_attribute,
            &grid,
        )?;
        let groups = evaluate_groups(&group_predictions(&post), &test.labels, &grid)?;
        Ok(ComplexityPoint {
            fraction,
            seed,
            retained_groups: retained.len(),
            hull_covers: hull_covers(&retained, spec)?,
            attribute_acc: attr.average_acc,
            group_acc: groups.average_acc,
            final_train_loss: fit.report.final_train_loss,
        })
    };
    let points: Vec<ComplexityPoint> = in_pool(cfg.threads, || {
        if cfg.threads > 1 {
            jobs.par_iter().map(run).collect::<Result<Vec<_>>>()
        } else {
            jobs.iter().map(run).collect()
        }
    })??;

    let full = points
        .iter()
        .filter(|p| p.fraction >= 1.0)
        .map(|p| p.attribute_acc)
        .collect::<Vec<_>>();
    let full_mean = (!full.is_empty()).then(|| MeanStderr::of(&full).mean);
    let rows = fractions
        .iter()
        .map(|&fraction| {
            let ps: Vec<&ComplexityPoint> =
                points.iter().filter(|p| p.fraction == fraction).collect();
            let attribute_acc =
                MeanStderr::of(&ps.iter().map(|p| p.attribute_acc).collect::<Vec<_>>());
            ComplexityRow {
                fraction,
                group_acc: MeanStderr::of(&ps.iter().map(|p| p.group_acc).collect::<Vec<_>>()),
                drop_vs_full: full_mean.map(|f| f - attribute_acc.mean),
                attribute_acc,
                all_hulls_cover: ps.iter().all(|p| p.hull_covers),
            }
        })
        .collect();
    let outcome = ComplexityOutcome {
        spec: spec.clone(),
        points,
        rows,
        infeasible_fractions,
    };

    let mut out = Outputs::new(&cfg.out)?;
    out.csv(
        "points.csv",
        &[
            "fraction",
            "seed",
            "retained_groups",
            "hull_covers",
            "attribute_acc",
            "group_acc",
            "final_train_loss",
        ],
        outcome.points.iter().map(|p| {
            vec![
                p.fraction.to_string(),
                p.seed.to_string(),
                p.retained_groups.to_string(),
                p.hull_covers.to_string(),
                p.attribute_acc.to_string(),
                p.group_acc.to_string(),
                p.final_train_loss.to_string(),
            ]
        }),
    )?;
    out.csv(
        "curve.csv",
        &[
            "fraction",
            "attribute_acc_mean",
            "attribute_acc_stderr",
            "group_acc_mean",
            "group_acc_stderr",
            "drop_vs_full",
            "all_hulls_cover",
        ],
        outcome.rows.iter().map(|r| {
            vec![
                r.fraction.to_string(),
                r.attribute_acc.mean.to_string(),
                r.attribute_acc.stderr.to_string(),
                r.group_acc.mean.to_string(),
                r.group_acc.stderr.to_string(),
                r.drop_vs_full.map(|d| d.to_string()).unwrap_or_default(),
                r.all_hulls_cover.to_string(),
            ]
        }),
    )?;
    out.json("summary.json", &outcome)?;
    out.finish(cfg)?;
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dropped: Group,
    pub test_prior: String,
    pub variant: String,
    pub reports: Vec<EvalReport>,
    pub average_acc: MeanStderr,
    pub worst_group_acc: MeanStderr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
}

impl AblationOutcome {
    pub fn row(&self, dropped: &Group, test_prior: &str, variant: &str) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| &r.dropped == dropped && r.test_prior == test_prior && r.variant == variant)
    }

    pub fn checks(&self) -> Vec<Check> {
        use crate::crm::{VARIANT_BHAT_UNF, VARIANT_BSTAR_EMP, VARIANT_CRM};
        let mut out = Vec::new();
        let mut keys: Vec<(&Group, &str)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(&r.dropped, r.test_prior.as_str())) {
                keys.push((&r.dropped, &r.test_prior));
            }
        }
        for (g, prior) in keys {
            let get = |v: &str| self.row(g, prior, v).expect("all variants present");
            let (crm, bhat, bemp) = (
                get(VARIANT_CRM),
                get(VARIANT_BHAT_UNF),
                get(VARIANT_BSTAR_EMP),
            );
            if prior == "uniform" {
                out.push(Check::new(
                    format!("drop {g} worst group CRM > learned bias"),
                    crm.worst_group_acc.mean > bhat.worst_group_acc.mean,
                    format!(
                        "{:.4} > {:.4}",
                        crm.worst_group_acc.mean, bhat.worst_group_acc.mean
                    ),
                ));
            } else {
                out.push(Check::new(
                    format!("drop {g} {prior} average empirical prior >= uniform"),
                    bemp.average_acc.mean >= crm.average_acc.mean,
                    format!(
                        "{:.4} >= {:.4}",
                        bemp.average_acc.mean, crm.average_acc.mean
                    ),
                ));
            }
        }
        out
    }
}

/// The four bias/prior variants on every single-group-dropped scenario and every configured test prior.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationOutcome> {
    cfg.validate()?;
    let grid = cfg.spec.full_grid();
    let priors = cfg
        .scenario
        .test_priors
        .iter()
        .map(|p| Ok((p.name.clone(), p.table(&grid)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for dropped in &cfg.scenario.drop_each {
        let base = drop_groups(&grid, &GroupSet::from(vec![dropped.clone()]), &cfg.spec)?;
        let per = per_seed(cfg, |seed| {
            let aed = cfg.aed.build(&cfg.spec, seed)?;
            let train = sample_dataset(&aed, Side::Train, &base, cfg.n_train, seed)?;
            let fit = fit_crm(&cfg.spec, &train, &base, &train_config(cfg, seed))?;
            let model = Arc::new(fit.model);
            let b_star = crate::crm::extrapolate_bias(&model, &train, &grid)?;
            let mut reports = Vec::new();
            for (name, prior) in &priors {
                let scenario =
                    ShiftScenario::new(base.train_prior.clone(), prior.clone(), &cfg.spec)?;
                let test = sample_dataset(&aed, Side::Test, &scenario, cfg.n_test, seed)?;
                for p in ablation_variants(model.clone(), &b_star, &scenario, &test.labels)? {
                    let post = posteriors(&test, |x| p.predict(x))?;
                    let r = evaluate_groups(&group_predictions(&post), &test.labels, &grid)?
                        .tagged(format!("drop{dropped}/{name}"), p.name.clone(), seed);
                    reports.push((name.clone(), r));
                }
            }
            Ok(reports)
        })?;
        for (name, _) in &priors {
            for variant in [
                crate::crm::VARIANT_CRM,
                crate::crm::VARIANT_BSTAR_EMP,
                crate::crm::VARIANT_BHAT_UNF,
                crate::crm::VARIANT_BHAT_EMP,
            ] {
                let reports: Vec<EvalReport> = per
                    .iter()
                    .flatten()
                    .filter(|(n, r)| n == name && r.method == variant)
                    .map(|(_, r)| r.clone())
                    .collect();
                rows.push(AblationRow {
                    dropped: dropped.clone(),
                    test_prior: name.clone(),
                    variant: variant.to_string(),
                    average_acc: MeanStderr::of(
                        &reports.iter().map(|r| r.average_acc).collect::<Vec<_>>(),
                    ),
                    worst_group_acc: MeanStderr::of(
                        &reports
                            .iter()
                            .map(|r| r.worst_group_acc)
                            .collect::<Vec<_>>(),
                    ),
                    reports,
                });
            }
        }
    }
    let outcome = AblationOutcome { rows };

    let mut out = Outputs::new(&cfg.out)?;
    let all: Vec<EvalReport> = outcome
        .rows
        .iter()
        .flat_map(|r| r.reports.clone())
        .collect();
    aggregate_files(&mut out, &all)?;
    let mut table = String::new();
    for r in &outcome.rows {
        let _ = writeln!(
            table,
            "drop {} | {:<10} | {:<18} | avg {:.4} ± {:.4} | wga {:.4} ± {:.4}",
            r.dropped,
            r.test_prior,
            r.variant,
            r.average_acc.mean,
            r.average_acc.stderr,
            r.worst_group_acc.mean,
            r.worst_group_acc.stderr
        );
    }
    out.text("ablation.txt", &table)?;
    out.json("checks.json", &outcome.checks())?;
    out.finish(cfg)?;
    Ok(outcome)
}

/// CRM and ERM on an arbitrary AED with `scenario.drop` removed from training.
pub fn run_custom(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let grid = cfg.spec.full_grid();
    let dropped: GroupSet = cfg.scenario.drop.iter().cloned().collect();
    let scenario = drop_groups(&grid, &dropped, &cfg.spec)?;
    let per = per_seed(cfg, |seed| {
        let aed = cfg.aed.build(&cfg.spec, seed)?;
        let train = sample_dataset(&aed, Side::Train, &scenario, cfg.n_train, seed)?;
        let test = sample_dataset(&aed, Side::Test, &scenario, cfg.n_test, seed)?;
        let tcfg = train_config(cfg, seed);
        let model = Arc::new(fit_crm(&cfg.spec, &train, &scenario, &tcfg)?.model);
        let erm = fit_erm_group(&train, &scenario, &tcfg)?.model;
        let b_star = crate::crm::extrapolate_bias(&model, &train, &grid)?;
        let crm = TestPredictor::crm(model, &b_star, &grid)?;
        let uniform = GroupTable::uniform(grid.clone());
        let bayes = posteriors(&test, |x| bayes_posterior(x, &aed, &uniform))?;
        let mut reports = Vec::new();
        for (name, post) in [
            ("CRM", posteriors(&test, |x| crm.predict(x))?),
            ("ERM", posteriors(&test, |x| erm.posterior_on(x, &grid))?),
        ] {
            reports.push(
                evaluate_groups(&group_predictions(&post), &test.labels, &grid)?
                    .tagged("custom", name, seed)
                    .with_oracle(oracle_agreement(&post, &bayes)?),
            );
        }
        Ok(reports)
    })?;
    let reports: Vec<EvalReport> = per.into_iter().flatten().collect();
    let mut out = Outputs::new(&cfg.out)?;
    for r in &reports {
        out.json(
            &format!("seed_{}/{}.json", r.seed, r.method.to_lowercase()),
            r,
        )?;
    }
    aggregate_files(&mut out, &reports)?;
    out.finish(cfg)?;
    Ok(reports)
}

/// Runs the configured experiment and returns its checks.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    Ok(match cfg.kind {
        ExperimentKind::Quadrant2d => run_quadrant2d(cfg)?.checks(),
        ExperimentKind::HullGrowth => run_hull_growth(cfg)?.checks(),
        ExperimentKind::GroupComplexity => {
            let o = run_group_complexity(cfg)?;
            let max_drop = 0.10;
            let at = if cfg.spec.num_attributes() > 2 {
                0.1
            } else {
                0.2
            };
            vec![o.check_drop(at, max_drop)]
        }
        ExperimentKind::Ablation => run_ablation(cfg)?.checks(),
        ExperimentKind::Custom => run_custom(cfg)?
            .iter()
            .filter(|r| r.method == "CRM")
            .map(|r| {
                let a = r.oracle.map_or(0.0, |o| o.agreement);
                Check::new(
                    format!("seed {} oracle agreement", r.seed),
                    a >= 0.95,
                    format!("{a:.4} >= 0.95"),
                )
            })
            .collect(),
    })
}
