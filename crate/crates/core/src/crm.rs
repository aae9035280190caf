//! Compositional risk minimization.
//!
//! Step one fits an [`EnergyModel`] by maximum likelihood on the training
//! groups. Step two computes, from training inputs alone, the extrapolated
//! bias
//!
//! ```text
//! B*(z) = log mean_x exp(-<sigma(z), E(x)> - logsumexp_{z' in train}[-<sigma(z'), E(x)> + log p(z') - B(z')])
//! ```
//!
//! for any group whose attribute values were seen. The test predictor is
//! then a softmax over the test support with `log q(z) - B*(z)` in place of
//! the training prior and bias.

use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::attribute_space::{AttributeSpec, Group, GroupSet};
use crate::energy_model::{EnergyModel, FeatureMap, FeatureNet, LossAndGrad, INIT_SCALE};
use crate::error::{CrmError, Result};
use crate::io;
use crate::numeric::{self, StreamingLogSumExp};
use crate::rng::{self, Purpose};
use crate::synthetic::{Dataset, ShiftScenario};
use crate::table::GroupTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub regularize_bias: bool,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub feature_map: FeatureMap,
    /// Fraction of each training group held out for model selection.
    pub validation_fraction: Option<f64>,
    pub eval_every: usize,
    /// Stop after this many evaluations without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            regularize_bias: false,
            batch_size: 128,
            steps: 3000,
            seed: 0,
            feature_map: FeatureMap::default(),
            validation_fraction: None,
            eval_every: 100,
            patience: None,
        }
    }
}

impl TrainConfig {
    /// Defaults for the one-hidden-layer feature map.
    pub fn hidden(width: usize) -> Self {
        Self {
            learning_rate: 1e-4,
            feature_map: FeatureMap::Hidden { width },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(CrmError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(CrmError::InvalidConfig(
                "batch size must be at least 1".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(CrmError::InvalidConfig(
                "eval_every must be at least 1".into(),
            ));
        }
        if let Some(f) = self.validation_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(CrmError::InvalidConfig(format!(
                    "validation fraction {f} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Anything the shared training loop can optimize.
pub trait Trainable: Clone {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Parameters that receive weight decay when bias regularization is off.
    fn decayed_params(&self) -> Range<usize>;
    fn loss_and_grad(&self, data: &Dataset, indices: &[usize]) -> Result<LossAndGrad>;
}

impl Trainable for EnergyModel {
    fn params(&self) -> &[f64] {
        EnergyModel::params(self)
    }

    fn params_mut(&mut self) -> &mut [f64] {
        EnergyModel::params_mut(self)
    }

    fn decayed_params(&self) -> Range<usize> {
        0..self.layout().bias.start
    }

    fn loss_and_grad(&self, data: &Dataset, indices: &[usize]) -> Result<LossAndGrad> {
        self.nll_loss(data, Some(indices))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub best_validation_loss: Option<f64>,
    pub best_step: usize,
    pub steps_run: usize,
    /// `(step, validation loss)` at every evaluation.
    pub validation_curve: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct Fitted<M> {
    pub model: M,
    pub report: TrainReport,
}

/// Group-stratified split: returns `(train indices, validation indices)`.
pub fn stratified_split(data: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let support = data.label_support();
    let mut rng = rng::stream(seed, Purpose::ValidationSplit);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut idx in data.indices_by_group(&support) {
        idx.shuffle(&mut rng);
        let k = ((fraction * idx.len() as f64).round() as usize).min(idx.len() - 1);
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn check_labels(data: &Dataset, support: &GroupSet) -> Result<()> {
    if data.is_empty() {
        return Err(CrmError::EmptyData);
    }
    match data.labels.iter().find(|g| !support.contains(g)) {
        Some(g) => Err(CrmError::NotInSupport(g.to_string())),
        None => Ok(()),
    }
}

/// Minibatch Adam on `model` over `train_idx`, selecting on `val_idx` when non-empty.
pub fn train_loop<M: Trainable>(
    mut model: M,
    data: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
) -> Result<Fitted<M>> {
    config.validate()?;
    let mut adam = Adam::new(model.params().len(), config);
    let decayed = if config.regularize_bias {
        0..model.params().len()
    } else {
        model.decayed_params()
    };
    let mut rng = rng::stream(config.seed, Purpose::Minibatch);
    let mut order = train_idx.to_vec();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let batch = config.batch_size.min(order.len());

    let initial_loss = model.loss_and_grad(data, train_idx)?.loss;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut steps_run = 0;

    for step in 1..=config.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let LossAndGrad { loss, mut grad } = model.loss_and_grad(data, idx)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CrmError::Diverged { step, loss });
        }
        if config.weight_decay > 0.0 {
            let params = model.params();
            for i in decayed.clone() {
                grad[i] += config.weight_decay * params[i];
            }
        }
        adam.step(model.params_mut(), &grad);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(CrmError::Diverged { step, loss });
        }
        steps_run = step;

        if !val_idx.is_empty() && (step % config.eval_every == 0 || step == config.steps) {
            let val = model.loss_and_grad(data, val_idx)?.loss;
            if !val.is_finite() {
                return Err(CrmError::Diverged { step, loss: val });
            }
            curve.push((step, val));
            if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
                best = Some((val, step, model.params().to_vec()));
                since_best = 0;
            } else {
                since_best += 1;
                if config.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        }
    }

    let (best_validation_loss, best_step) = match best {
        Some((loss, step, params)) => {
            model.params_mut().copy_from_slice(&params);
            (Some(loss), step)
        }
        None => (None, steps_run),
    };
    let final_train_loss = model.loss_and_grad(data, train_idx)?.loss;
    Ok(Fitted {
        model,
        report: TrainReport {
            initial_loss,
            final_train_loss,
            best_validation_loss,
            best_step,
            steps_run,
            validation_curve: curve,
        },
    })
}

fn split_for(data: &Dataset, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    match config.validation_fraction {
        Some(f) if f > 0.0 => stratified_split(data, f, config.seed),
        _ => ((0..data.len()).collect(), Vec::new()),
    }
}

/// CRM step one: maximum likelihood for the additive energy classifier.
///
/// The training prior is the empirical group frequency of the rows used for fitting.
pub fn fit_crm(
    spec: &AttributeSpec,
    train: &Dataset,
    scenario: &ShiftScenario,
    config: &TrainConfig,
) -> Result<Fitted<EnergyModel>> {
    config.validate()?;
    scenario.validate(spec)?;
    check_labels(train, scenario.train_support())?;
    let (train_idx, val_idx) = split_for(train, config);
    let fit_rows = train.subset(&train_idx);
    let model = EnergyModel::for_dataset(
        spec.clone(),
        &fit_rows,
        config.feature_map.clone(),
        config.seed,
    )?;
    train_loop(model, train, &train_idx, &val_idx, config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedBias {
    pub table: GroupTable,
    pub n_samples: usize,
    /// Bootstrap standard error per group, when requested.
    pub std_error: Option<Vec<f64>>,
}

fn per_sample_terms(
    model: &EnergyModel,
    x: &[f64],
    target: &GroupSet,
    out: &mut Vec<f64>,
) -> Result<()> {
    let e = model.energies(x)?;
    let train_logits = model.train_logits(x)?;
    let lse = numeric::logsumexp(&train_logits.values);
    out.clear();
    out.extend(target.iter().map(|g| -model.group_energy(&e, g) - lse));
    Ok(())
}

/// CRM step two: `B*(z)` for every group of `target`, in one streaming pass over `train`.
pub fn extrapolate_bias(
    model: &EnergyModel,
    train: &Dataset,
    target: &GroupSet,
) -> Result<ExtrapolatedBias> {
    if train.is_empty() {
        return Err(CrmError::EmptyData);
    }
    target.validate(model.spec())?;
    let mut acc = vec![StreamingLogSumExp::new(); target.len()];
    let mut terms = Vec::with_capacity(target.len());
    for x in train.rows() {
        per_sample_terms(model, x, target, &mut terms)?;
        acc.iter_mut().zip(&terms).for_each(|(a, &t)| a.push(t));
    }
    let log_n = (train.len() as f64).ln();
    Ok(ExtrapolatedBias {
        table: GroupTable::new(
            target.clone(),
            acc.iter().map(|a| a.value() - log_n).collect(),
        )?,
        n_samples: train.len(),
        std_error: None,
    })
}

/// [`extrapolate_bias`] plus a bootstrap standard error over `reps` resamples of the training rows.
pub fn extrapolate_bias_bootstrap(
    model: &EnergyModel,
    train: &Dataset,
    target: &GroupSet,
    reps: usize,
    seed: u64,
) -> Result<ExtrapolatedBias> {
    let mut bias = extrapolate_bias(model, train, target)?;
    if reps < 2 {
        return Ok(bias);
    }
    let n = train.len();
    let t = target.len();
    let mut all = Vec::with_capacity(n * t);
    let mut terms = Vec::with_capacity(t);
    for x in train.rows() {
        per_sample_terms(model, x, target, &mut terms)?;
        all.extend_from_slice(&terms);
    }
    let mut rng = rng::stream(seed, Purpose::Bootstrap);
    let log_n = (n as f64).ln();
    let mut sum = vec![0.0; t];
    let mut sum_sq = vec![0.0; t];
    for _ in 0..reps {
        let mut acc = vec![StreamingLogSumExp::new(); t];
        for _ in 0..n {
            let i = rng.random_range(0..n);
            acc.iter_mut()
                .zip(&all[i * t..(i + 1) * t])
                .for_each(|(a, &v)| a.push(v));
        }
        for (k, a) in acc.iter().enumerate() {
            let b = a.value() - log_n;
            sum[k] += b;
            sum_sq[k] += b * b;
        }
    }
    let r = reps as f64;
    bias.std_error = Some(
        sum.iter()
            .zip(&sum_sq)
            .map(|(s, s2)| ((s2 - s * s / r) / (r - 1.0)).max(0.0).sqrt())
            .collect(),
    );
    Ok(bias)
}

/// How a predictor's bias was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSource {
    Extrapolated,
    /// Learned `B` on the training support, 0 elsewhere.
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    Uniform,
    Empirical,
    Given,
}

/// Softmax over the test support with test log-prior and a per-group bias.
#[derive(Clone, Debug)]
pub struct TestPredictor {
    pub name: String,
    pub model: Arc<EnergyModel>,
    pub log_prior: GroupTable,
    pub bias: GroupTable,
    pub bias_source: BiasSource,
    pub prior_source: PriorSource,
}

impl TestPredictor {
    pub fn new(
        name: impl Into<String>,
        model: Arc<EnergyModel>,
        test_prior: &GroupTable,
        bias: GroupTable,
        bias_source: BiasSource,
        prior_source: PriorSource,
    ) -> Result<Self> {
        test_prior.check_distribution(1e-9)?;
        if !test_prior.support.same_members(&bias.support) {
            return Err(CrmError::SupportMismatch(
                "bias and test prior cover different groups".into(),
            ));
        }
        test_prior.support.validate(model.spec())?;
        // align the bias with the prior's order
        let bias_values = test_prior
            .support
            .iter()
            .map(|g| bias.get(g).expect("same members"))
            .collect::<Vec<_>>();
        if let Some((g, _)) = test_prior
            .support
            .iter()
            .zip(&bias_values)
            .find(|(_, b)| !b.is_finite())
        {
            return Err(CrmError::SupportMismatch(format!(
                "bias for {g} is not finite"
            )));
        }
        Ok(Self {
            name: name.into(),
            model,
            log_prior: test_prior.map(f64::ln),
            bias: GroupTable::new(test_prior.support.clone(), bias_values)?,
            bias_source,
            prior_source,
        })
    }

    /// The canonical predictor: extrapolated bias, uniform prior over `test_support`.
    pub fn crm(
        model: Arc<EnergyModel>,
        b_star: &ExtrapolatedBias,
        test_support: &GroupSet,
    ) -> Result<Self> {
        let prior = GroupTable::uniform(test_support.clone());
        let bias = restrict(&b_star.table, test_support)?;
        Self::new(
            "CRM",
            model,
            &prior,
            bias,
            BiasSource::Extrapolated,
            PriorSource::Uniform,
        )
    }

    pub fn test_support(&self) -> &GroupSet {
        &self.log_prior.support
    }

    /// Pre-softmax scores `-<sigma(z), E(x)> + log q(z) - b(z)`.
    pub fn logits(&self, x: &[f64]) -> Result<GroupTable> {
        let e = self.model.energies(x)?;
        let values = self
            .log_prior
            .iter()
            .zip(&self.bias.values)
            .map(|((g, lq), b)| -self.model.group_energy(&e, g) + lq - b)
            .collect();
        GroupTable::new(self.test_support().clone(), values)
    }

    pub fn predict(&self, x: &[f64]) -> Result<GroupTable> {
        Ok(self.logits(x)?.map_values(numeric::softmax))
    }

    /// Writes `predictor.json`, `bias.csv` (`group,b_star,b_hat_if_any`) and the model checkpoint under `model/`.
    pub fn save(&self, dir: &Path, b_star: Option<&ExtrapolatedBias>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.model.save(&dir.join("model"))?;
        let bundle = PredictorBundle {
            name: self.name.clone(),
            bias_source: self.bias_source,
            prior_source: self.prior_source,
            test_support: self.test_support().clone(),
            test_prior: self.log_prior.values.iter().map(|v| v.exp()).collect(),
            bias: self.bias.values.clone(),
            unseen_learned_bias: "0 (initialization value) for groups outside the training support"
                .into(),
            b_star_samples: b_star.map(|b| b.n_samples),
        };
        io::write_json(&dir.join("predictor.json"), &bundle)?;
        let learned = self.model.bias_table();
        let mut w = csv::Writer::from_path(dir.join("bias.csv"))?;
        w.write_record(["group", "b_star", "b_hat_if_any"])?;
        for (g, b) in self.bias.iter() {
            let star = match (self.bias_source, b_star) {
                (BiasSource::Extrapolated, _) => format!("{b}"),
                (_, Some(bs)) => bs.table.get(g).map(|v| v.to_string()).unwrap_or_default(),
                _ => String::new(),
            };
            let hat = learned.get(g).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([serde_json::to_string(g)?, star, hat])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let model = Arc::new(EnergyModel::load(&dir.join("model"))?);
        let bundle: PredictorBundle = io::read_json(&dir.join("predictor.json"))?;
        let prior = GroupTable::new(bundle.test_support.clone(), bundle.test_prior)?;
        let bias = GroupTable::new(bundle.test_support, bundle.bias)?;
        Self::new(
            bundle.name,
            model,
            &prior,
            bias,
            bundle.bias_source,
            bundle.prior_source,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PredictorBundle {
    name: String,
    bias_source: BiasSource,
    prior_source: PriorSource,
    test_support: GroupSet,
    test_prior: Vec<f64>,
    bias: Vec<f64>,
    unseen_learned_bias: String,
    b_star_samples: Option<usize>,
}

fn restrict(table: &GroupTable, support: &GroupSet) -> Result<GroupTable> {
    let values = support
        .iter()
        .map(|g| {
            table
                .get(g)
                .ok_or_else(|| CrmError::NotInSupport(g.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    GroupTable::new(support.clone(), values)
}

/// `q(z_i = k | x)` for every value `k` of `attribute`.
pub fn marginalize(
    posterior: &GroupTable,
    attribute: usize,
    spec: &AttributeSpec,
) -> Result<Vec<f64>> {
    if attribute >= spec.num_attributes() {
        return Err(CrmError::InvalidConfig(format!(
            "attribute {attribute} out of range for {} attributes",
            spec.num_attributes()
        )));
    }
    let mut out = vec![0.0; spec.cardinality(attribute)];
    for (g, p) in posterior.iter() {
        out[g.value(attribute)] += p;
    }
    Ok(out)
}

/// Empirical distribution of `labels` over `support`; groups absent from the labels get 0.
pub fn empirical_prior_over(support: &GroupSet, labels: &[Group]) -> Result<GroupTable> {
    let mut counts = vec![0.0; support.len()];
    for g in labels {
        if let Some(k) = support.position(g) {
            counts[k] += 1.0;
        }
    }
    GroupTable::normalized(support.clone(), counts)
}

pub const VARIANT_CRM: &str = "CRM";
pub const VARIANT_BSTAR_EMP: &str = "Bias B*+Emp Prior";
pub const VARIANT_BHAT_UNF: &str = "Bias B\u{302}+Unf Prior";
pub const VARIANT_BHAT_EMP: &str = "Bias B\u{302}+Emp Prior";

/// The four predictors crossing {extrapolated, learned} bias with {uniform, empirical} test prior.
///
/// The empirical prior is computed from `test_labels`. Order: CRM, B*+Emp, B-hat+Unf, B-hat+Emp.
pub fn ablation_variants(
    model: Arc<EnergyModel>,
    b_star: &ExtrapolatedBias,
    scenario: &ShiftScenario,
    test_labels: &[Group],
) -> Result<Vec<TestPredictor>> {
    let support = scenario.test_support();
    let uniform = GroupTable::uniform(support.clone());
    let empirical = empirical_prior_over(support, test_labels)?;
    let star = restrict(&b_star.table, support)?;
    let learned = model.bias_table();
    let hat = GroupTable::new(
        support.clone(),
        support
            .iter()
            .map(|g| learned.get(g).unwrap_or(0.0))
            .collect(),
    )?;
    use BiasSource::{Extrapolated, Learned};
    use PriorSource::{Empirical, Uniform};
    Ok(vec![
        TestPredictor::new(
            VARIANT_CRM,
            model.clone(),
            &uniform,
            star.clone(),
            Extrapolated,
            Uniform,
        )?,
        TestPredictor::new(
            VARIANT_BSTAR_EMP,
            model.clone(),
            &empirical,
            star,
            Extrapolated,
            Empirical,
        )?,
        TestPredictor::new(
            VARIANT_BHAT_UNF,
            model.clone(),
            &uniform,
            hat.clone(),
            Learned,
            Uniform,
        )?,
        TestPredictor::new(VARIANT_BHAT_EMP, model, &empirical, hat, Learned, Empirical)?,
    ])
}

/// Plain softmax classifier over the training groups: dense logits `V phi(x) + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErmGroupClassifier {
    net: FeatureNet,
    support: GroupSet,
    params: Vec<f64>,
}

impl ErmGroupClassifier {
    pub fn new(
        input_dim: usize,
        feature_map: FeatureMap,
        support: GroupSet,
        seed: u64,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(CrmError::EmptySupport);
        }
        let net = FeatureNet {
            map: feature_map,
            input_dim,
        };
        let k = support.len();
        let total = net.num_params() + k * net.output_dim() + k;
        let mut rng = rng::stream(seed, Purpose::ParamInit);
        let normal = rand_distr::Normal::new(0.0, INIT_SCALE).expect("finite scale");
        let params = (0..total)
            .map(|i| {
                if i < total - k {
                    rand_distr::Distribution::sample(&normal, &mut rng)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            net,
            support,
            params,
        })
    }

    pub fn support(&self) -> &GroupSet {
        &self.support
    }

    fn head_range(&self) -> Range<usize> {
        let f = self.net.num_params();
        f..f + self.support.len() * self.net.output_dim()
    }

    fn logits_into(&self, x: &[f64], phi: &mut Vec<f64>, out: &mut Vec<f64>) {
        self.net
            .forward(&self.params[..self.net.num_params()], x, phi);
        let h = phi.len();
        let head = &self.params[self.head_range()];
        let bias = &self.params[self.head_range().end..];
        out.clear();
        out.extend(
            head.chunks_exact(h)
                .zip(bias)
                .map(|(row, c)| row.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<f64>() + c),
        );
    }

    /// Posterior over the training groups.
    pub fn posterior(&self, x: &[f64]) -> Result<GroupTable> {
        if x.len() != self.net.input_dim {
            return Err(CrmError::DimensionMismatch {
                expected: self.net.input_dim,
                got: x.len(),
            });
        }
        let (mut phi, mut logits) = (Vec::new(), Vec::new());
        self.logits_into(x, &mut phi, &mut logits);
        GroupTable::new(self.support.clone(), numeric::softmax(&logits))
    }

    /// Posterior laid out over `support`; groups it never saw get probability 0.
    pub fn posterior_on(&self, x: &[f64], support: &GroupSet) -> Result<GroupTable> {
        let p = self.posterior(x)?;
        GroupTable::new(
            support.clone(),
            support.iter().map(|g| p.get(g).unwrap_or(0.0)).collect(),
        )
    }
}

impl Trainable for ErmGroupClassifier {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn decayed_params(&self) -> Range<usize> {
        0..self.head_range().end
    }

    fn loss_and_grad(&self, data: &Dataset, indices: &[usize]) -> Result<LossAndGrad> {
        if indices.is_empty() {
            return Err(CrmError::EmptyData);
        }
        let head = self.head_range();
        let h = self.net.output_dim();
        let k = self.support.len();
        let mut grad = vec![0.0; self.params.len()];
        let (mut phi, mut logits) = (Vec::new(), Vec::new());
        let mut g_phi = vec![0.0; h];
        let scale = 1.0 / indices.len() as f64;
        let mut loss = 0.0;
        for &i in indices {
            let x = data.row(i);
            let label = self
                .support
                .position(&data.labels[i])
                .ok_or_else(|| CrmError::NotInSupport(data.labels[i].to_string()))?;
            self.logits_into(x, &mut phi, &mut logits);
            let lse = numeric::logsumexp(&logits);
            loss += lse - logits[label];
            g_phi.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..k {
                let g = ((logits[c] - lse).exp() - if c == label { 1.0 } else { 0.0 }) * scale;
                grad[head.end + c] += g;
                let row = head.start + c * h;
                for j in 0..h {
                    grad[row + j] += g * phi[j];
                    g_phi[j] += g * self.params[row + j];
                }
            }
            let f = self.net.num_params();
            self.net.backward(x, &phi, &g_phi, &mut grad[..f]);
        }
        Ok(LossAndGrad {
            loss: loss * scale,
            grad,
        })
    }
}

/// ERM baseline: the same feature map with an unconstrained group head.
pub fn fit_erm_group(
    train: &Dataset,
    scenario: &ShiftScenario,
    config: &TrainConfig,
) -> Result<Fitted<ErmGroupClassifier>> {
    config.validate()?;
    check_labels(train, scenario.train_support())?;
    let (train_idx, val_idx) = split_for(train, config);
    let support = train.subset(&train_idx).label_support().sorted();
    let model =
        ErmGroupClassifier::new(train.dim, config.feature_map.clone(), support, config.seed)?;
    train_loop(model, train, &train_idx, &val_idx, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_model::relative_error;
    use crate::synthetic::{drop_group, make_2d_quadrant_spec, sample_dataset, Side};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadrant_scenario() -> (crate::synthetic::GaussianAedSpec, ShiftScenario) {
        let aed = make_2d_quadrant_spec();
        let s = drop_group(&aed.spec.full_grid(), &Group::from([0, 0]), &aed.spec).unwrap();
        (aed, s)
    }

    fn zero_model(support: &GroupSet) -> EnergyModel {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let mut m = EnergyModel::new(
            spec,
            2,
            FeatureMap::default(),
            &GroupTable::uniform(support.clone()),
            0,
        )
        .unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m
    }

    #[test]
    fn zero_model_extrapolates_zero_bias() {
        let (aed, s) = quadrant_scenario();
        let train = sample_dataset(&aed, Side::Train, &s, 50, 1).unwrap();
        let m = zero_model(s.train_support());
        // integrand is 1 / sum_z' (1/3) = 1
        let b = extrapolate_bias(&m, &train, s.test_support()).unwrap();
        for &v in &b.table.values {
            assert!(v.abs() < 1e-12);
        }
        assert_eq!(b.n_samples, 50);
        let empty = Dataset::new(2, vec![], vec![]).unwrap();
        assert!(matches!(
            extrapolate_bias(&m, &empty, s.test_support()),
            Err(CrmError::EmptyData)
        ));
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let (_, s) = quadrant_scenario();
        let m = Arc::new(zero_model(s.train_support()));
        let b = ExtrapolatedBias {
            table: GroupTable::constant(s.test_support().clone(), 0.0),
            n_samples: 1,
            std_error: None,
        };
        let p = TestPredictor::crm(m, &b, s.test_support()).unwrap();
        for &v in &p.predict(&[0.4, -3.0]).unwrap().values {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn marginalize_examples() {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let uniform = GroupTable::uniform(spec.full_grid());
        assert_eq!(marginalize(&uniform, 0, &spec).unwrap(), vec![0.5, 0.5]);
        let point = GroupTable::new(spec.full_grid(), vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(marginalize(&point, 0, &spec).unwrap(), vec![0.0, 1.0]);
        assert_eq!(marginalize(&point, 1, &spec).unwrap(), vec![1.0, 0.0]);
        assert!(marginalize(&point, 2, &spec).is_err());
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let cfg = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let mut adam = Adam::new(2, &cfg);
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn erm_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (aed, s) = quadrant_scenario();
        let data = sample_dataset(&aed, Side::Train, &s, 5, 3).unwrap();
        for map in [FeatureMap::default(), FeatureMap::Hidden { width: 4 }] {
            let mut m = ErmGroupClassifier::new(2, map, s.train_support().clone(), 1).unwrap();
            m.params_mut()
                .iter_mut()
                .for_each(|p| *p = rng.random_range(-0.7..0.7));
            let idx: Vec<usize> = (0..5).collect();
            let analytic = m.loss_and_grad(&data, &idx).unwrap().grad;
            let mut probe = m.clone();
            let numeric: Vec<f64> = (0..m.params.len())
                .map(|i| {
                    let o = probe.params[i];
                    probe.params[i] = o + 1e-4;
                    let up = probe.loss_and_grad(&data, &idx).unwrap().loss;
                    probe.params[i] = o - 1e-4;
                    let dn = probe.loss_and_grad(&data, &idx).unwrap().loss;
                    probe.params[i] = o;
                    (up - dn) / 2e-4
                })
                .collect();
            assert!(relative_error(&analytic, &numeric) < 1e-5);
        }
    }

    #[test]
    fn stratified_split_keeps_every_group() {
        let (aed, s) = quadrant_scenario();
        let data = sample_dataset(&aed, Side::Train, &s, 1000, 2).unwrap();
        let (tr, va) = stratified_split(&data, 0.2, 5);
        assert_eq!(tr.len() + va.len(), 1000);
        assert!((va.len() as f64 - 200.0).abs() <= 3.0);
        assert_eq!(data.subset(&va).label_support().len(), 3);
        assert_eq!(data.subset(&tr).label_support().len(), 3);
    }

    #[test]
    fn rejects_bad_config_and_labels() {
        let (aed, s) = quadrant_scenario();
        let data = sample_dataset(&aed, Side::Test, &s, 200, 2).unwrap();
        // test side includes the dropped group
        assert!(matches!(
            fit_crm(&aed.spec, &data, &s, &TrainConfig::default()),
            Err(CrmError::NotInSupport(_))
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (aed, s) = quadrant_scenario();
        let data = sample_dataset(&aed, Side::Train, &s, 300, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            steps: 50,
            ..TrainConfig::default()
        };
        let err = fit_crm(&aed.spec, &data, &s, &cfg).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }
}
