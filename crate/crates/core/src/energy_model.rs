//! Additive energy group classifier.
//!
//! A feature map `phi` feeds a linear head `W` whose output `E(x)` has one
//! entry per (attribute, value) slot. The logit of group `z` is
//!
//! ```text
//! logit(z) = -<sigma(z), E(x)> + log p_train(z) - B(z)
//! ```
//!
//! over the training support only. All parameters live in one flat vector
//! laid out as `[hidden weights | hidden bias | head | group bias]` so that
//! optimizers and checkpoints treat them uniformly.

use std::ops::Range;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attribute_space::{AttributeSpec, Group, GroupSet};
use crate::error::{CrmError, Result};
use crate::io;
use crate::numeric;
use crate::rng::{self, Purpose};
use crate::synthetic::Dataset;
use crate::table::GroupTable;

pub type LogitTable = GroupTable;

pub const INIT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// `phi(x) = x`, optionally followed by `||x||^2`.
    Identity { append_sq_norm: bool },
    /// `phi(x) = tanh(A x + a)` with `width` hidden units.
    Hidden { width: usize },
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap::Identity {
            append_sq_norm: true,
        }
    }
}

impl FeatureMap {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match *self {
            FeatureMap::Identity { append_sq_norm } => input_dim + usize::from(append_sq_norm),
            FeatureMap::Hidden { width } => width,
        }
    }

    pub fn num_params(&self, input_dim: usize) -> usize {
        match *self {
            FeatureMap::Identity { .. } => 0,
            FeatureMap::Hidden { width } => width * input_dim + width,
        }
    }
}

/// Feature map plus its slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FeatureNet {
    pub map: FeatureMap,
    pub input_dim: usize,
}

impl FeatureNet {
    pub fn output_dim(&self) -> usize {
        self.map.output_dim(self.input_dim)
    }

    pub fn num_params(&self) -> usize {
        self.map.num_params(self.input_dim)
    }

    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self.map {
            FeatureMap::Identity { append_sq_norm } => {
                out.extend_from_slice(x);
                if append_sq_norm {
                    out.push(x.iter().map(|v| v * v).sum());
                }
            }
            FeatureMap::Hidden { width } => {
                let n = self.input_dim;
                let (w, b) = params.split_at(width * n);
                for j in 0..width {
                    let row = &w[j * n..(j + 1) * n];
                    let a: f64 = row.iter().zip(x).map(|(p, v)| p * v).sum::<f64>() + b[j];
                    out.push(a.tanh());
                }
            }
        }
    }

    /// Accumulates `d loss / d params` given `d loss / d phi` at the forward point.
    pub fn backward(&self, x: &[f64], phi: &[f64], grad_phi: &[f64], grad: &mut [f64]) {
        if let FeatureMap::Hidden { width } = self.map {
            let n = self.input_dim;
            let (gw, gb) = grad.split_at_mut(width * n);
            for j in 0..width {
                let ga = grad_phi[j] * (1.0 - phi[j] * phi[j]);
                gb[j] += ga;
                for (g, v) in gw[j * n..(j + 1) * n].iter_mut().zip(x) {
                    *g += ga * v;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub feature: Range<usize>,
    pub head: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct EnergyModel {
    spec: AttributeSpec,
    net: FeatureNet,
    train_support: GroupSet,
    log_prior: Vec<f64>,
    params: Vec<f64>,
    slots: Vec<Vec<usize>>,
}

impl PartialEq for EnergyModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.net == other.net
            && self.train_support == other.train_support
            && self.log_prior == other.log_prior
            && self.params == other.params
    }
}

/// Mean loss over a batch together with its gradient in flat-parameter layout.
#[derive(Clone, Debug)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn support_slots(spec: &AttributeSpec, support: &GroupSet) -> Vec<Vec<usize>> {
    support
        .iter()
        .map(|g| {
            g.values()
                .iter()
                .zip(spec.offsets())
                .map(|(&v, &o)| o + v)
                .collect()
        })
        .collect()
}

impl EnergyModel {
    /// Fresh model with small Gaussian weights, zero bias and the given training prior.
    pub fn new(
        spec: AttributeSpec,
        input_dim: usize,
        feature_map: FeatureMap,
        train_prior: &GroupTable,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(CrmError::InvalidConfig(
                "input dimension must be positive".into(),
            ));
        }
        if let FeatureMap::Hidden { width: 0 } = feature_map {
            return Err(CrmError::InvalidConfig(
                "hidden width must be positive".into(),
            ));
        }
        train_prior.check_distribution(1e-9)?;
        train_prior.support.validate(&spec)?;
        if train_prior.values.iter().any(|&p| p <= 0.0) {
            return Err(CrmError::InvalidPrior(
                "training support must only list groups with positive mass".into(),
            ));
        }
        let net = FeatureNet {
            map: feature_map,
            input_dim,
        };
        let total = net.num_params() + spec.onehot_len() * net.output_dim() + train_prior.len();
        let mut rng = rng::stream(seed, Purpose::ParamInit);
        let normal = Normal::new(0.0, INIT_SCALE).expect("finite scale");
        let bias_start = total - train_prior.len();
        let params = (0..total)
            .map(|i| {
                if i < bias_start {
                    normal.sample(&mut rng)
                } else {
                    0.0
                }
            })
            .collect();
        let log_prior = train_prior.values.iter().map(|p| p.ln()).collect();
        let slots = support_slots(&spec, &train_prior.support);
        Ok(Self {
            spec,
            net,
            train_support: train_prior.support.clone(),
            log_prior,
            params,
            slots,
        })
    }

    /// Model whose training support and prior are the empirical group counts of `data`.
    pub fn for_dataset(
        spec: AttributeSpec,
        data: &Dataset,
        feature_map: FeatureMap,
        seed: u64,
    ) -> Result<Self> {
        let prior = data.empirical_prior()?;
        Self::new(spec, data.dim, feature_map, &prior, seed)
    }

    pub fn spec(&self) -> &AttributeSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.net.map
    }

    pub fn train_support(&self) -> &GroupSet {
        &self.train_support
    }

    pub fn log_prior(&self) -> GroupTable {
        GroupTable {
            support: self.train_support.clone(),
            values: self.log_prior.clone(),
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> ParamLayout {
        let f = self.net.num_params();
        let h = f + self.spec.onehot_len() * self.net.output_dim();
        ParamLayout {
            feature: 0..f,
            head: f..h,
            bias: h..self.params.len(),
        }
    }

    /// Learned bias `B(z)` over the training support.
    pub fn bias_table(&self) -> GroupTable {
        GroupTable {
            support: self.train_support.clone(),
            values: self.params[self.layout().bias].to_vec(),
        }
    }

    pub fn set_bias(&mut self, group: &Group, value: f64) -> Result<()> {
        let k = self
            .train_support
            .position(group)
            .ok_or_else(|| CrmError::NotInSupport(group.to_string()))?;
        let start = self.layout().bias.start;
        self.params[start + k] = value;
        Ok(())
    }

    /// Head matrix `W`, row-major `(sum d_i) x h`.
    pub fn head_mut(&mut self) -> &mut [f64] {
        let r = self.layout().head;
        &mut self.params[r]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.net.input_dim {
            return Err(CrmError::DimensionMismatch {
                expected: self.net.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn energies_into(&self, x: &[f64], phi: &mut Vec<f64>, e: &mut Vec<f64>) {
        let layout = self.layout();
        self.net.forward(&self.params[layout.feature], x, phi);
        let h = phi.len();
        let w = &self.params[layout.head];
        e.clear();
        e.extend(
            w.chunks_exact(h)
                .map(|row| row.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<f64>()),
        );
    }

    /// `E(x)`: one energy per (attribute, value) slot.
    pub fn energies(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let (mut phi, mut e) = (Vec::new(), Vec::new());
        self.energies_into(x, &mut phi, &mut e);
        Ok(e)
    }

    /// `<sigma(z), E>` for an arbitrary group.
    pub fn group_energy(&self, energies: &[f64], group: &Group) -> f64 {
        group
            .values()
            .iter()
            .zip(self.spec.offsets())
            .map(|(&v, &o)| energies[o + v])
            .sum()
    }

    fn logits_from_energies(&self, e: &[f64], out: &mut Vec<f64>) {
        let bias = &self.params[self.layout().bias];
        out.clear();
        out.extend(
            self.slots
                .iter()
                .zip(&self.log_prior)
                .zip(bias)
                .map(|((slots, lp), b)| -slots.iter().map(|&j| e[j]).sum::<f64>() + lp - b),
        );
    }

    pub fn train_logits(&self, x: &[f64]) -> Result<LogitTable> {
        let e = self.energies(x)?;
        let mut logits = Vec::new();
        self.logits_from_energies(&e, &mut logits);
        Ok(GroupTable {
            support: self.train_support.clone(),
            values: logits,
        })
    }

    /// Log-softmax of the training logits.
    pub fn log_posterior_train(&self, x: &[f64]) -> Result<GroupTable> {
        let logits = self.train_logits(x)?;
        Ok(logits.map_values(numeric::log_softmax))
    }

    /// Mean negative log posterior over `indices` of `data` (all rows when `None`) and its gradient.
    pub fn nll_loss(&self, data: &Dataset, indices: Option<&[usize]>) -> Result<LossAndGrad> {
        if data.dim != self.net.input_dim {
            return Err(CrmError::DimensionMismatch {
                expected: self.net.input_dim,
                got: data.dim,
            });
        }
        let all: Vec<usize>;
        let indices = match indices {
            Some(i) => i,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        if indices.is_empty() {
            return Err(CrmError::EmptyData);
        }
        let layout = self.layout();
        let h = self.net.output_dim();
        let l = self.spec.onehot_len();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let (mut phi, mut e, mut logits) = (Vec::new(), Vec::new(), Vec::new());
        let mut g_e = vec![0.0; l];
        let mut g_phi = vec![0.0; h];
        let scale = 1.0 / indices.len() as f64;

        for &i in indices {
            let x = data.row(i);
            let label = self
                .train_support
                .position(&data.labels[i])
                .ok_or_else(|| CrmError::NotInSupport(data.labels[i].to_string()))?;
            self.energies_into(x, &mut phi, &mut e);
            self.logits_from_energies(&e, &mut logits);
            let lse = numeric::logsumexp(&logits);
            loss += lse - logits[label];

            g_e.iter_mut().for_each(|v| *v = 0.0);
            for (k, slots) in self.slots.iter().enumerate() {
                let g_logit =
                    ((logits[k] - lse).exp() - if k == label { 1.0 } else { 0.0 }) * scale;
                grad[layout.bias.start + k] -= g_logit;
                for &j in slots {
                    g_e[j] -= g_logit;
                }
            }
            let w = &self.params[layout.head.clone()];
            g_phi.iter_mut().for_each(|v| *v = 0.0);
            for (j, &ge) in g_e.iter().enumerate().take(l) {
                if ge == 0.0 {
                    continue;
                }
                let row = j * h;
                for c in 0..h {
                    grad[layout.head.start + row + c] += ge * phi[c];
                    g_phi[c] += ge * w[row + c];
                }
            }
            self.net
                .backward(x, &phi, &g_phi, &mut grad[layout.feature.clone()]);
        }
        Ok(LossAndGrad {
            loss: loss * scale,
            grad,
        })
    }

    /// Group energies of every grid cell built by broadcasting per-attribute blocks.
    ///
    /// Entry `spec.flat_index(z)` holds `<sigma(z), E>`.
    pub fn broadcast_group_energies(spec: &AttributeSpec, energies: &[f64]) -> Vec<f64> {
        let mut grid = vec![0.0];
        for (&offset, &d) in spec.offsets().iter().zip(spec.cardinalities()) {
            let block = &energies[offset..offset + d];
            grid = grid
                .iter()
                .flat_map(|&acc| block.iter().map(move |&b| acc + b))
                .collect();
        }
        grid
    }

    /// Writes `model.json` (architecture, spec, support) and `params.bin`
    /// (parameters followed by the training log-prior, little-endian f64).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = CheckpointHeader {
            spec: self.spec.clone(),
            input_dim: self.net.input_dim,
            feature_map: self.net.map.clone(),
            train_support: self.train_support.clone(),
            num_params: self.params.len(),
        };
        io::write_json(&dir.join("model.json"), &header)?;
        let mut flat = self.params.clone();
        flat.extend_from_slice(&self.log_prior);
        io::write_f64_le(&dir.join("params.bin"), &flat)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: CheckpointHeader = io::read_json(&dir.join("model.json"))?;
        let net = FeatureNet {
            map: header.feature_map,
            input_dim: header.input_dim,
        };
        let k = header.train_support.len();
        let expected = net.num_params() + header.spec.onehot_len() * net.output_dim() + k;
        let mut flat = io::read_f64_le(&dir.join("params.bin"))?;
        if header.num_params != expected || flat.len() != expected + k {
            return Err(CrmError::Format(format!(
                "checkpoint holds {} values, architecture needs {}",
                flat.len(),
                expected + k
            )));
        }
        header.train_support.validate(&header.spec)?;
        let log_prior = flat.split_off(expected);
        let slots = support_slots(&header.spec, &header.train_support);
        Ok(Self {
            spec: header.spec,
            net,
            train_support: header.train_support,
            log_prior,
            params: flat,
            slots,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: AttributeSpec,
    input_dim: usize,
    feature_map: FeatureMap,
    train_support: GroupSet,
    num_params: usize,
}

/// Norm-based relative error `||a - b|| / max(||a||, ||b||)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute_space::one_hot_encode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadrant_model(map: FeatureMap) -> EnergyModel {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let support: GroupSet = vec![
            Group::from([1, 1]),
            Group::from([0, 1]),
            Group::from([1, 0]),
        ]
        .into();
        EnergyModel::new(spec, 2, map, &GroupTable::uniform(support), 0).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, model: &EnergyModel, n: usize) -> Dataset {
        let dim = model.input_dim();
        let features = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n)
            .map(|_| {
                model
                    .train_support()
                    .get(rng.random_range(0..model.train_support().len()))
                    .clone()
            })
            .collect();
        Dataset::new(dim, features, labels).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_energies() {
        let mut m = quadrant_model(FeatureMap::default());
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(m.energies(&[3.0, -1.0]).unwrap(), vec![0.0; 4]);
        let logits = m.train_logits(&[3.0, -1.0]).unwrap();
        for &v in &logits.values {
            assert!((v + 3f64.ln()).abs() < 1e-15);
        }
        assert!(m.energies(&[1.0]).is_err());
    }

    #[test]
    fn selector_head_returns_coordinates() {
        let mut m = quadrant_model(FeatureMap::Identity {
            append_sq_norm: false,
        });
        let head = m.head_mut();
        head.iter_mut().for_each(|p| *p = 0.0);
        // slot 0 <- x0, slot 3 <- x1
        head[0] = 1.0;
        head[3 * 2 + 1] = 1.0;
        assert_eq!(m.energies(&[0.7, -0.2]).unwrap(), vec![0.7, 0.0, 0.0, -0.2]);
    }

    #[test]
    fn log_posterior_normalizes() {
        let m = quadrant_model(FeatureMap::Hidden { width: 5 });
        let lp = m.log_posterior_train(&[0.3, 0.9]).unwrap();
        let total: f64 = lp.values.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let single = GroupTable::uniform(vec![Group::from([0, 1])].into());
        let m1 = EnergyModel::new(spec, 2, FeatureMap::default(), &single, 1).unwrap();
        assert_eq!(
            m1.log_posterior_train(&[1.0, 1.0]).unwrap().values,
            vec![0.0]
        );
    }

    #[test]
    fn uniform_model_loss_is_log_k() {
        let mut m = quadrant_model(FeatureMap::default());
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, &m, 7);
        let r = m.nll_loss(&batch, None).unwrap();
        assert!((r.loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_model_loss_is_near_zero() {
        let mut m = quadrant_model(FeatureMap::default());
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m.set_bias(&Group::from([0, 1]), -800.0).unwrap();
        let batch = Dataset::new(2, vec![0.0, 0.0], vec![Group::from([0, 1])]).unwrap();
        assert!(m.nll_loss(&batch, None).unwrap().loss.abs() < 1e-12);
    }

    #[test]
    fn label_outside_support_is_an_error() {
        let m = quadrant_model(FeatureMap::default());
        let batch = Dataset::new(2, vec![0.0, 0.0], vec![Group::from([0, 0])]).unwrap();
        assert!(matches!(
            m.nll_loss(&batch, None),
            Err(CrmError::NotInSupport(_))
        ));
    }

    fn finite_difference(model: &EnergyModel, batch: &Dataset, step: f64) -> Vec<f64> {
        let mut probe = model.clone();
        (0..model.params().len())
            .map(|i| {
                let orig = probe.params()[i];
                probe.params_mut()[i] = orig + step;
                let up = probe.nll_loss(batch, None).unwrap().loss;
                probe.params_mut()[i] = orig - step;
                let down = probe.nll_loss(batch, None).unwrap().loss;
                probe.params_mut()[i] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for map in [FeatureMap::default(), FeatureMap::Hidden { width: 6 }] {
            let mut m = quadrant_model(map);
            m.params_mut()
                .iter_mut()
                .for_each(|p| *p = rng.random_range(-0.8..0.8));
            let batch = random_batch(&mut rng, &m, 5);
            let analytic = m.nll_loss(&batch, None).unwrap().grad;
            let numeric = finite_difference(&m, &batch, 1e-4);
            assert!(relative_error(&analytic, &numeric) < 1e-5);
        }
    }

    #[test]
    fn broadcast_matches_dot_products() {
        let spec = AttributeSpec::new(vec![2, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e: Vec<f64> = (0..spec.onehot_len())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let grid = EnergyModel::broadcast_group_energies(&spec, &e);
        for g in spec.groups() {
            let direct = one_hot_encode(&g, &spec).unwrap().dot(&e);
            assert!((grid[spec.flat_index(&g)] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn single_attribute_change_only_sees_its_slots() {
        let m = quadrant_model(FeatureMap::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // (1,1) vs (0,1) differ in attribute 0: only slots 0 and 1 matter
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut logits = Vec::new();
        m.logits_from_energies(&e, &mut logits);
        let base = logits[0] - logits[1];
        let mut e2 = e.clone();
        e2[2] += 5.0;
        e2[3] -= 2.0;
        m.logits_from_energies(&e2, &mut logits);
        assert!((logits[0] - logits[1] - base).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = quadrant_model(FeatureMap::Hidden { width: 3 });
        m.params_mut()
            .iter_mut()
            .for_each(|p| *p = rng.random::<f64>() - 0.5);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = EnergyModel::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back
            .params()
            .iter()
            .zip(m.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
