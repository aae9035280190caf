//! Gaussian additive-energy data, compositional-shift scenarios and the
//! Bayes posterior oracle.
//!
//! The energy of group `z` at `x` is `s * sum_i ||x - mu(z_i)||^2` for a
//! scale `s`. Completing the square gives an isotropic Gaussian with mean
//! `(1/m) sum_i mu(z_i)` and precision `2 m s`, which is what sampling and the
//! oracle use. With `s = 1` this is the orthogonal-means generator; with
//! `s = 1/4` and means `(2 z_1, 0)`, `(0, 2 z_2)` it is the unit-covariance
//! quadrant mixture.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attribute_space::{cartesian_product_of_marginals, AttributeSpec, Group, GroupSet};
use crate::error::{CrmError, Result};
use crate::io;
use crate::numeric;
use crate::rng::{self, Purpose};
use crate::table::GroupTable;

const PRIOR_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianAedSpec {
    pub spec: AttributeSpec,
    pub ambient_dim: usize,
    /// One mean per one-hot slot, i.e. per (attribute, value).
    pub means: Vec<Vec<f64>>,
    pub energy_scale: f64,
    /// Norm the orthogonal means were scaled to, when generated that way.
    pub mean_norm: Option<f64>,
}

impl GaussianAedSpec {
    pub fn new(spec: AttributeSpec, means: Vec<Vec<f64>>, energy_scale: f64) -> Result<Self> {
        if means.len() != spec.onehot_len() {
            return Err(CrmError::DimensionMismatch {
                expected: spec.onehot_len(),
                got: means.len(),
            });
        }
        let ambient_dim = means.first().map_or(0, Vec::len);
        if ambient_dim == 0 {
            return Err(CrmError::InvalidConfig(
                "ambient dimension must be positive".into(),
            ));
        }
        if let Some(bad) = means.iter().find(|m| m.len() != ambient_dim) {
            return Err(CrmError::DimensionMismatch {
                expected: ambient_dim,
                got: bad.len(),
            });
        }
        if !(energy_scale > 0.0) || !energy_scale.is_finite() {
            return Err(CrmError::InvalidConfig(format!(
                "energy scale {energy_scale} does not give a proper Gaussian"
            )));
        }
        Ok(Self {
            spec,
            ambient_dim,
            means,
            energy_scale,
            mean_norm: None,
        })
    }

    pub fn id(&self) -> String {
        io::value_id(self).expect("spec serializes")
    }

    pub fn attribute_mean(&self, attribute: usize, value: usize) -> &[f64] {
        &self.means[self.spec.offsets()[attribute] + value]
    }

    pub fn group_mean(&self, group: &Group) -> Vec<f64> {
        let m = self.spec.num_attributes() as f64;
        let mut mean = vec![0.0; self.ambient_dim];
        for (i, &v) in group.values().iter().enumerate() {
            for (acc, x) in mean.iter_mut().zip(self.attribute_mean(i, v)) {
                *acc += x / m;
            }
        }
        mean
    }

    /// Inverse variance of every coordinate, `2 m s`.
    pub fn precision(&self) -> f64 {
        2.0 * self.spec.num_attributes() as f64 * self.energy_scale
    }

    pub fn std_dev(&self) -> f64 {
        self.precision().recip().sqrt()
    }

    /// Normalized Gaussian log density `log p(x | z)`.
    pub fn log_density(&self, x: &[f64], group: &Group) -> f64 {
        let prec = self.precision();
        let mean = self.group_mean(group);
        let sq: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.ambient_dim as f64 * (prec / (2.0 * std::f64::consts::PI)).ln() - 0.5 * prec * sq
    }

    /// Per-slot energies `s ||x - mu(i, k)||^2`, laid out like a one-hot vector.
    pub fn attribute_energies(&self, x: &[f64]) -> Vec<f64> {
        self.means
            .iter()
            .map(|mu| {
                self.energy_scale
                    * x.iter()
                        .zip(mu)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Unnormalized group energy `<sigma(z), E(x)>`.
    pub fn energy(&self, x: &[f64], group: &Group) -> f64 {
        let e = self.attribute_energies(x);
        group
            .values()
            .iter()
            .zip(self.spec.offsets())
            .map(|(&v, &o)| e[o + v])
            .sum()
    }
}

/// `sum d_i` mutually orthogonal means of unit norm in `R^n`.
pub fn make_orthogonal_means(spec: &AttributeSpec, n: usize, seed: u64) -> Result<GaussianAedSpec> {
    make_orthogonal_means_scaled(spec, n, seed, 1.0)
}

/// Orthogonal means from the thin QR factor of a seeded Gaussian matrix, scaled to `norm`.
pub fn make_orthogonal_means_scaled(
    spec: &AttributeSpec,
    n: usize,
    seed: u64,
    norm: f64,
) -> Result<GaussianAedSpec> {
    let k = spec.onehot_len();
    if n < k {
        return Err(CrmError::DimensionTooSmall { n, required: k });
    }
    let mut rng = rng::stream(seed, Purpose::OrthogonalMeans);
    let g = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let means = (0..k)
        .map(|j| q.column(j).iter().map(|x| x * norm).collect())
        .collect();
    let mut aed = GaussianAedSpec::new(spec.clone(), means, 1.0)?;
    aed.mean_norm = Some(norm);
    Ok(aed)
}

/// Attribute value index for a sign in `{-1, +1}`: `-1 -> 0`, `+1 -> 1`.
pub fn quadrant_index(sign: i8) -> usize {
    usize::from(sign > 0)
}

pub fn quadrant_sign(index: usize) -> f64 {
    if index == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Two binary attributes in the plane; group `(z1, z2)` is a unit Gaussian at `(z1, z2)`.
pub fn make_2d_quadrant_spec() -> GaussianAedSpec {
    let spec = AttributeSpec::uniform(2, 2).expect("valid spec");
    let means = vec![
        vec![-2.0, 0.0],
        vec![2.0, 0.0],
        vec![0.0, -2.0],
        vec![0.0, 2.0],
    ];
    GaussianAedSpec::new(spec, means, 0.25).expect("valid quadrant spec")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

impl Side {
    fn sub_stream(self) -> u64 {
        match self {
            Side::Train => 0,
            Side::Test => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub aed_id: String,
    pub seed: u64,
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    /// Row-major `len x dim`.
    pub features: Vec<f64>,
    pub labels: Vec<Group>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<Group>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(CrmError::DimensionMismatch {
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        Ok(Self {
            dim,
            features,
            labels,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            features,
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Distinct labels in order of first appearance.
    pub fn label_support(&self) -> GroupSet {
        self.labels.iter().cloned().collect()
    }

    /// Empirical group frequencies over the labels present.
    pub fn empirical_prior(&self) -> Result<GroupTable> {
        if self.is_empty() {
            return Err(CrmError::EmptyData);
        }
        let support = self.label_support();
        let mut counts = vec![0.0; support.len()];
        for g in &self.labels {
            counts[support.position(g).expect("label in own support")] += 1.0;
        }
        GroupTable::normalized(support, counts)
    }

    /// Indices of the samples carrying each group of `support`.
    pub fn indices_by_group(&self, support: &GroupSet) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); support.len()];
        for (i, g) in self.labels.iter().enumerate() {
            if let Some(k) = support.position(g) {
                out[k].push(i);
            }
        }
        out
    }

    /// Writes `header.json`, `features.bin` (little-endian f64) and `labels.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let m = self.labels.first().map_or(0, Group::len);
        let header = DatasetHeader {
            n_samples: self.len(),
            n: self.dim,
            dtype: "float64-le".into(),
            num_attributes: m,
            seed: self.provenance.as_ref().map(|p| p.seed),
            aed_id: self.provenance.as_ref().map(|p| p.aed_id.clone()),
            side: self.provenance.as_ref().map(|p| p.side),
        };
        io::write_json(&dir.join("header.json"), &header)?;
        io::write_f64_le(&dir.join("features.bin"), &self.features)?;
        let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
        w.write_record((1..=m).map(|i| format!("z{i}")))?;
        for g in &self.labels {
            w.write_record(g.values().iter().map(usize::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let header: DatasetHeader = io::read_json(&dir.join("header.json"))?;
        if header.dtype != "float64-le" {
            return Err(CrmError::Format(format!(
                "unsupported dtype {}",
                header.dtype
            )));
        }
        let features = io::read_f64_le(&dir.join("features.bin"))?;
        let mut r = csv::Reader::from_path(dir.join("labels.csv"))?;
        let mut labels = Vec::with_capacity(header.n_samples);
        for rec in r.records() {
            let rec = rec?;
            let values = rec
                .iter()
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CrmError::Format(format!("labels.csv: {e}")))?;
            labels.push(Group::new(values));
        }
        if labels.len() != header.n_samples {
            return Err(CrmError::Format(format!(
                "header declares {} samples, labels.csv has {}",
                header.n_samples,
                labels.len()
            )));
        }
        let mut ds = Dataset::new(header.n, features, labels)?;
        if let (Some(seed), Some(aed_id), Some(side)) = (header.seed, header.aed_id, header.side) {
            ds.provenance = Some(Provenance { aed_id, seed, side });
        }
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    n_samples: usize,
    n: usize,
    dtype: String,
    num_attributes: usize,
    seed: Option<u64>,
    aed_id: Option<String>,
    side: Option<Side>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftScenario {
    pub train_prior: GroupTable,
    pub test_prior: GroupTable,
}

impl ShiftScenario {
    pub fn new(
        train_prior: GroupTable,
        test_prior: GroupTable,
        spec: &AttributeSpec,
    ) -> Result<Self> {
        let scenario = Self {
            train_prior,
            test_prior,
        };
        scenario.validate(spec)?;
        Ok(scenario)
    }

    /// Uniform priors over both supports.
    pub fn uniform(train: GroupSet, test: GroupSet, spec: &AttributeSpec) -> Result<Self> {
        Self::new(GroupTable::uniform(train), GroupTable::uniform(test), spec)
    }

    pub fn train_support(&self) -> &GroupSet {
        &self.train_prior.support
    }

    pub fn test_support(&self) -> &GroupSet {
        &self.test_prior.support
    }

    pub fn prior(&self, side: Side) -> &GroupTable {
        match side {
            Side::Train => &self.train_prior,
            Side::Test => &self.test_prior,
        }
    }

    /// Test groups never seen in training.
    pub fn unseen_groups(&self) -> GroupSet {
        self.test_support().difference(self.train_support())
    }

    pub fn validate(&self, spec: &AttributeSpec) -> Result<()> {
        self.train_support().validate(spec)?;
        self.test_support().validate(spec)?;
        self.train_prior.check_distribution(PRIOR_TOL)?;
        self.test_prior.check_distribution(PRIOR_TOL)?;
        let product = cartesian_product_of_marginals(self.train_support(), spec)?;
        if let Some(g) = self.test_support().iter().find(|g| !product.contains(g)) {
            return Err(CrmError::SupportMismatch(format!(
                "test group {g} uses an attribute value never seen in training"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path, spec: &AttributeSpec) -> Result<Self> {
        let s: ShiftScenario = io::read_json(path)?;
        s.validate(spec)?;
        Ok(s)
    }
}

pub fn drop_group(
    full_support: &GroupSet,
    dropped: &Group,
    spec: &AttributeSpec,
) -> Result<ShiftScenario> {
    drop_groups(full_support, &GroupSet::from(vec![dropped.clone()]), spec)
}

/// Removes `dropped` from training only; the test side keeps the full support.
pub fn drop_groups(
    full_support: &GroupSet,
    dropped: &GroupSet,
    spec: &AttributeSpec,
) -> Result<ShiftScenario> {
    if let Some(g) = dropped.iter().find(|g| !full_support.contains(g)) {
        return Err(CrmError::NotInSupport(g.to_string()));
    }
    let train = full_support.difference(dropped);
    if train.is_empty() {
        return Err(CrmError::EmptySupport);
    }
    ShiftScenario::uniform(train, full_support.clone(), spec)
}

/// `round(fraction * |grid|)` groups drawn without replacement (at least one), in flat-index order.
pub fn random_group_subset(spec: &AttributeSpec, fraction: f64, seed: u64) -> Result<GroupSet> {
    let total = spec.total_groups().ok_or(CrmError::EnumerationTooLarge {
        size: spec.total_groups_u128(),
        cap: usize::MAX,
    })?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CrmError::InvalidConfig(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let k = ((fraction * total as f64).round() as usize).clamp(1, total);
    let mut rng = rng::stream(seed, Purpose::GroupSubset);
    let mut picked = rand::seq::index::sample(&mut rng, total, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| spec.group_at(i)).collect())
}

/// `round(fraction * |grid|)` groups containing every value of every attribute.
///
/// A core of `max_i d_i` groups is built by pairing independent random
/// permutations of each attribute's values (cycled for smaller cardinalities);
/// the rest are drawn uniformly from the remaining groups. Errors when the
/// requested size is smaller than the core.
pub fn random_covering_subset(spec: &AttributeSpec, fraction: f64, seed: u64) -> Result<GroupSet> {
    let total = spec.total_groups().ok_or(CrmError::EnumerationTooLarge {
        size: spec.total_groups_u128(),
        cap: usize::MAX,
    })?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CrmError::InvalidConfig(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let k = ((fraction * total as f64).round() as usize).clamp(1, total);
    let core_len = spec.cardinalities().iter().copied().max().unwrap_or(1);
    if k < core_len {
        return Err(CrmError::InvalidConfig(format!(
            "{k} groups cannot cover {core_len} values of one attribute"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::GroupSubset);
    let perms: Vec<Vec<usize>> = spec
        .cardinalities()
        .iter()
        .map(|&d| {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut picked = vec![false; total];
    for j in 0..core_len {
        let g = Group::from(perms.iter().map(|p| p[j % p.len()]).collect::<Vec<_>>());
        picked[spec.flat_index(&g)] = true;
    }
    let rest: Vec<usize> = (0..total).filter(|&i| !picked[i]).collect();
    let have = picked.iter().filter(|&&b| b).count();
    for i in rand::seq::index::sample(&mut rng, rest.len(), k - have) {
        picked[rest[i]] = true;
    }
    Ok((0..total)
        .filter(|&i| picked[i])
        .map(|i| spec.group_at(i))
        .collect())
}

pub fn sample_dataset(
    aed: &GaussianAedSpec,
    side: Side,
    scenario: &ShiftScenario,
    n_samples: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(CrmError::EmptyData);
    }
    let prior = scenario.prior(side);
    prior.check_distribution(PRIOR_TOL)?;
    prior.support.validate(&aed.spec)?;

    let mut label_rng = rng::stream(seed, Purpose::GroupLabels);
    label_rng.set_stream(Purpose::GroupLabels.tag() ^ (side.sub_stream() << 32));
    let mut feature_rng = rng::stream(seed, Purpose::Features);
    feature_rng.set_stream(Purpose::Features.tag() ^ (side.sub_stream() << 32));

    let cumulative: Vec<f64> = prior
        .values
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("non-empty prior");
    let last_positive = prior
        .values
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("prior has mass");
    let means: Vec<Vec<f64>> = prior.support.iter().map(|g| aed.group_mean(g)).collect();
    let sd = aed.std_dev();

    let mut features = Vec::with_capacity(n_samples * aed.ambient_dim);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        // zero-mass groups have no interval of their own, so they are never hit
        let u: f64 = label_rng.random::<f64>() * total;
        let k = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last_positive);
        labels.push(prior.support.get(k).clone());
        for &mu in &means[k] {
            let eps: f64 = StandardNormal.sample(&mut feature_rng);
            features.push(mu + sd * eps);
        }
    }
    let mut ds = Dataset::new(aed.ambient_dim, features, labels)?;
    ds.provenance = Some(Provenance {
        aed_id: aed.id(),
        seed,
        side,
    });
    Ok(ds)
}

/// Exact posterior `p(z | x)` over `prior.support` under the generative model.
pub fn bayes_posterior(x: &[f64], aed: &GaussianAedSpec, prior: &GroupTable) -> Result<GroupTable> {
    if x.len() != aed.ambient_dim {
        return Err(CrmError::DimensionMismatch {
            expected: aed.ambient_dim,
            got: x.len(),
        });
    }
    prior.check_distribution(PRIOR_TOL)?;
    let prec = aed.precision();
    let logits: Vec<f64> = prior
        .iter()
        .map(|(g, p)| {
            let mean = aed.group_mean(g);
            let sq: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
            p.ln() - 0.5 * prec * sq
        })
        .collect();
    GroupTable::new(prior.support.clone(), numeric::softmax(&logits))
}

/// `<sigma(z), e>` for a slot-indexed vector `e`.
pub fn group_dot(group: &Group, spec: &AttributeSpec, e: &[f64]) -> f64 {
    group
        .values()
        .iter()
        .zip(spec.offsets())
        .map(|(&v, &o)| e[o + v])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute_space::one_hot_encode;

    fn quadrant_groups() -> GroupSet {
        AttributeSpec::uniform(2, 2).unwrap().full_grid()
    }

    #[test]
    fn quadrant_means_and_covariance() {
        let aed = make_2d_quadrant_spec();
        assert_eq!(aed.group_mean(&Group::from([1, 1])), vec![1.0, 1.0]);
        assert_eq!(aed.group_mean(&Group::from([0, 0])), vec![-1.0, -1.0]);
        assert_eq!(aed.group_mean(&Group::from([1, 0])), vec![1.0, -1.0]);
        assert!((aed.precision() - 1.0).abs() < 1e-15);
        for g in &quadrant_groups() {
            let own = aed.group_mean(g);
            let opposite: Vec<f64> = own.iter().map(|v| -v).collect();
            assert!(aed.log_density(&own, g) > aed.log_density(&opposite, g));
        }
    }

    #[test]
    fn orthogonal_means_are_orthonormal() {
        let spec = AttributeSpec::uniform(2, 10).unwrap();
        let aed = make_orthogonal_means(&spec, 100, 4).unwrap();
        assert_eq!(aed.means.len(), 20);
        for (i, a) in aed.means.iter().enumerate() {
            let norm: f64 = a.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10);
            for b in &aed.means[i + 1..] {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!(dot.abs() <= 1e-10);
            }
        }
        let tiny = make_orthogonal_means(&AttributeSpec::uniform(1, 1).unwrap(), 1, 0).unwrap();
        assert!((tiny.means[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(matches!(
            make_orthogonal_means(&spec, 19, 0),
            Err(CrmError::DimensionTooSmall {
                n: 19,
                required: 20
            })
        ));
    }

    #[test]
    fn drop_group_examples() {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let full = quadrant_groups();
        let dropped = Group::from([quadrant_index(-1), quadrant_index(-1)]);
        let s = drop_group(&full, &dropped, &spec).unwrap();
        assert_eq!(s.train_support().len(), 3);
        assert_eq!(s.test_support().len(), 4);
        assert_eq!(s.unseen_groups(), GroupSet::from(vec![dropped]));
        assert!(matches!(
            drop_group(&s.train_support().clone(), &Group::from([0, 0]), &spec),
            Err(CrmError::NotInSupport(_))
        ));

        let spec10 = AttributeSpec::uniform(2, 10).unwrap();
        assert_eq!(random_group_subset(&spec10, 0.2, 3).unwrap().len(), 20);
        let kept = random_covering_subset(&spec10, 0.2, 3).unwrap();
        assert_eq!(kept.len(), 20);
        let grid = spec10.full_grid();
        let s = drop_groups(&grid, &grid.difference(&kept), &spec10).unwrap();
        assert_eq!(s.train_support().len(), 20);
    }

    #[test]
    fn scenario_rejects_unseen_attribute_values() {
        let spec = AttributeSpec::uniform(2, 3).unwrap();
        let train: GroupSet = vec![Group::from([0, 0]), Group::from([1, 1])].into();
        let test = spec.full_grid();
        assert!(ShiftScenario::uniform(train, test, &spec).is_err());
    }

    #[test]
    fn zero_mass_group_never_sampled() {
        let aed = make_2d_quadrant_spec();
        let support = quadrant_groups();
        let prior = GroupTable::new(support.clone(), vec![0.0, 0.5, 0.25, 0.25]).unwrap();
        let scenario = ShiftScenario::new(prior.clone(), prior, &aed.spec).unwrap();
        let ds = sample_dataset(&aed, Side::Train, &scenario, 5000, 1).unwrap();
        assert!(ds.labels.iter().all(|g| g != support.get(0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let aed = make_2d_quadrant_spec();
        let s = ShiftScenario::uniform(quadrant_groups(), quadrant_groups(), &aed.spec).unwrap();
        let a = sample_dataset(&aed, Side::Train, &s, 100, 9).unwrap();
        let b = sample_dataset(&aed, Side::Train, &s, 100, 9).unwrap();
        let c = sample_dataset(&aed, Side::Test, &s, 100, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let aed = make_2d_quadrant_spec();
        let s = ShiftScenario::uniform(quadrant_groups(), quadrant_groups(), &aed.spec).unwrap();
        let ds = sample_dataset(&aed, Side::Test, &s, 57, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
    }

    #[test]
    fn bayes_posterior_examples() {
        let aed = make_2d_quadrant_spec();
        let uniform = GroupTable::uniform(quadrant_groups());
        let post = bayes_posterior(&[2.0, 2.0], &aed, &uniform).unwrap();
        assert_eq!(post.argmax_group(), &Group::from([1, 1]));

        let centre = bayes_posterior(&[0.0, 0.0], &aed, &uniform).unwrap();
        for &p in &centre.values {
            assert!((p - 0.25).abs() < 1e-15);
        }

        let three: GroupSet = vec![
            Group::from([1, 1]),
            Group::from([0, 1]),
            Group::from([1, 0]),
        ]
        .into();
        let post = bayes_posterior(&[0.5, 0.5], &aed, &GroupTable::uniform(three)).unwrap();
        // logits are -(x - mu)^2 / 2 summed: (1,1) -> -0.25, (-1,1) -> -1.25, (1,-1) -> -1.25
        let expected = numeric::softmax(&[-0.25, -1.25, -1.25]);
        for (p, e) in post.values.iter().zip(&expected) {
            assert!((p - e).abs() < 1e-12);
        }
        assert_eq!(post.argmax_group(), &Group::from([1, 1]));
    }

    #[test]
    fn additive_energy_factorization() {
        use rand::SeedableRng;
        let aed = make_2d_quadrant_spec();
        let spec = &aed.spec;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let groups = quadrant_groups();
        let gap = |x: &[f64], z: &Group, zp: &Group| {
            let e = aed.attribute_energies(x);
            let sz = one_hot_encode(z, spec).unwrap();
            let szp = one_hot_encode(zp, spec).unwrap();
            (aed.log_density(x, z) - aed.log_density(x, zp)) - (szp.dot(&e) - sz.dot(&e))
        };
        for z in &groups {
            for zp in &groups {
                let at_zero = gap(&[0.0, 0.0], z, zp);
                for _ in 0..100 {
                    let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
                    assert!((gap(&x, z, zp) - at_zero).abs() < 1e-9);
                }
            }
        }
    }
}
