//! Discrete affine hulls of group sets.
//!
//! `DAff(S)` is the set of grid groups whose one-hot encoding is an affine
//! combination (coefficients summing to one) of the encodings of `S`.
//! Membership of a single candidate is decided by a least-squares solve on
//! the encoding matrix augmented with a row of ones. Bulk enumeration and
//! the growth simulation instead keep an orthonormal basis of the affine
//! span and test each candidate by its projection residual.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute_space::{one_hot_encode, product, AttributeSpec, Group, GroupSet};
use crate::error::{CrmError, Result};
use crate::rng::{self, Purpose};

/// Residual below which a candidate counts as a member.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

/// Largest grid `enumerate_hull` will walk.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Exact hull sizes are only computed inside growth trials for grids up to this size.
pub const CHECKPOINT_GRID_CAP: usize = 10_000;

const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMembershipResult {
    pub is_member: bool,
    /// Affine coefficients over the training groups, in their set order.
    pub coefficients: Option<Vec<f64>>,
    pub residual_norm: f64,
}

pub fn in_affine_hull(
    candidate: &Group,
    train: &GroupSet,
    spec: &AttributeSpec,
) -> Result<AffineMembershipResult> {
    if train.is_empty() {
        return Err(CrmError::EmptySupport);
    }
    train.validate(spec)?;
    let target = one_hot_encode(candidate, spec)?;

    let rows = spec.onehot_len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, train.len());
    for (j, g) in train.iter().enumerate() {
        for (&offset, &v) in spec.offsets().iter().zip(g.values()) {
            a[(offset + v, j)] = 1.0;
        }
        a[(rows - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(rows);
    for (i, &x) in target.as_slice().iter().enumerate() {
        b[i] = x;
    }
    b[rows - 1] = 1.0;

    let svd = a.clone().svd(true, true);
    let alpha = svd
        .solve(&b, 1e-10)
        .map_err(|e| CrmError::Format(format!("least-squares solve failed: {e}")))?;
    let residual_norm = (&a * &alpha - &b).norm();
    let is_member = residual_norm <= MEMBERSHIP_TOL;
    Ok(AffineMembershipResult {
        is_member,
        coefficients: is_member.then(|| alpha.iter().copied().collect()),
        residual_norm,
    })
}

/// Incrementally maintained affine span of a point set.
#[derive(Clone, Debug)]
pub struct AffineSpan {
    origin: Option<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

impl AffineSpan {
    pub fn new() -> Self {
        Self {
            origin: None,
            basis: Vec::new(),
        }
    }

    /// Number of affinely independent points seen, i.e. linear dimension + 1.
    pub fn affine_rank(&self) -> usize {
        match self.origin {
            None => 0,
            Some(_) => self.basis.len() + 1,
        }
    }

    fn reduce(&self, point: &[f64]) -> Option<Vec<f64>> {
        let origin = self.origin.as_ref()?;
        let mut r: Vec<f64> = point.iter().zip(origin).map(|(p, o)| p - o).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &self.basis {
                let c: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        Some(r)
    }

    /// Distance from `point` to the span; infinite when empty.
    pub fn residual(&self, point: &[f64]) -> f64 {
        self.reduce(point).map_or(f64::INFINITY, |r| {
            r.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
    }

    /// Adds a point; returns true when the span grew.
    pub fn add(&mut self, point: &[f64]) -> bool {
        match self.reduce(point) {
            None => {
                self.origin = Some(point.to_vec());
                true
            }
            Some(mut r) => {
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm <= RANK_TOL {
                    return false;
                }
                r.iter_mut().for_each(|x| *x /= norm);
                self.basis.push(r);
                true
            }
        }
    }
}

impl Default for AffineSpan {
    fn default() -> Self {
        Self::new()
    }
}

fn span_of(train: &GroupSet, spec: &AttributeSpec) -> Result<AffineSpan> {
    let mut span = AffineSpan::new();
    for g in train {
        span.add(one_hot_encode(g, spec)?.as_slice());
    }
    Ok(span)
}

pub fn enumerate_hull(train: &GroupSet, spec: &AttributeSpec) -> Result<GroupSet> {
    enumerate_hull_with_cap(train, spec, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_hull_with_cap(
    train: &GroupSet,
    spec: &AttributeSpec,
    cap: usize,
) -> Result<GroupSet> {
    if train.is_empty() {
        return Err(CrmError::EmptySupport);
    }
    let size = spec.total_groups_u128();
    if size > cap as u128 {
        return Err(CrmError::EnumerationTooLarge { size, cap });
    }
    let span = span_of(train, spec)?;
    let mut hull = GroupSet::new();
    let mut enc = vec![0.0; spec.onehot_len()];
    for g in spec.groups() {
        enc.iter_mut().for_each(|x| *x = 0.0);
        for (&offset, &v) in spec.offsets().iter().zip(g.values()) {
            enc[offset + v] = 1.0;
        }
        if span.residual(&enc) <= MEMBERSHIP_TOL {
            hull.insert(g);
        }
    }
    Ok(hull)
}

/// Components of the graph joining groups at Hamming distance one.
pub fn connected_components(train: &GroupSet) -> Vec<GroupSet> {
    let n = train.len();
    let mut component = vec![usize::MAX; n];
    let mut parts = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = parts.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        component[start] = id;
        while let Some(i) = queue.pop_front() {
            members.push(i);
            #[allow(clippy::needless_range_loop)]
            for j in 0..n {
                if component[j] == usize::MAX && train.get(i).hamming(train.get(j)) == 1 {
                    component[j] = id;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        parts.push(members.into_iter().map(|i| train.get(i).clone()).collect());
    }
    parts
}

/// Two-attribute hull as the union of each component's Cartesian product.
pub fn hull_via_components(train: &GroupSet, spec: &AttributeSpec) -> Result<GroupSet> {
    if spec.num_attributes() != 2 {
        return Err(CrmError::UnsupportedArity(spec.num_attributes()));
    }
    if train.is_empty() {
        return Err(CrmError::EmptySupport);
    }
    train.validate(spec)?;
    let mut hull = GroupSet::new();
    for part in connected_components(train) {
        let marginals = [part.marginal_values(0), part.marginal_values(1)];
        for g in &product(&marginals) {
            hull.insert(g.clone());
        }
    }
    Ok(hull)
}

/// `2d - 1` groups whose hull is the whole `d x d` grid: an L-shaped corner.
pub fn deterministic_spanning_set(spec: &AttributeSpec) -> Result<GroupSet> {
    if spec.num_attributes() != 2 {
        return Err(CrmError::UnsupportedArity(spec.num_attributes()));
    }
    let d = spec
        .uniform_cardinality()
        .ok_or(CrmError::NonUniformCardinality)?;
    let mut set = GroupSet::new();
    set.insert(Group::from([0, 0]));
    if d == 1 {
        return Ok(set);
    }
    set.insert(Group::from([0, 1]));
    set.insert(Group::from([1, 0]));
    for i in 1..d - 1 {
        set.insert(Group::from([0, i + 1]));
        set.insert(Group::from([i + 1, 0]));
    }
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthTrial {
    pub trial: usize,
    /// Affine rank of the sampled encodings after each sample (index 0 = after the first).
    pub ranks: Vec<usize>,
    /// Sample count at which the hull first covered the grid.
    pub samples_to_span: Option<usize>,
    /// `(sample count, exact hull size)` at every rank increase, for small grids only.
    pub checkpoints: Vec<(usize, usize)>,
}

impl GrowthTrial {
    pub fn completed(&self) -> bool {
        self.samples_to_span.is_some()
    }

    pub fn spanned_by(&self, samples: usize) -> bool {
        self.samples_to_span.is_some_and(|s| s <= samples)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullGrowthCurve {
    pub spec: AttributeSpec,
    pub seed: u64,
    pub max_samples: usize,
    /// Affine rank of the full grid.
    pub full_rank: usize,
    pub trials: Vec<GrowthTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub trials: usize,
    pub completed: usize,
    pub mean_samples_to_span: f64,
    pub median_samples_to_span: f64,
    pub p90_samples_to_span: f64,
}

impl HullGrowthCurve {
    pub fn fraction_unspanned_at(&self, samples: usize) -> f64 {
        let missed = self
            .trials
            .iter()
            .filter(|t| !t.spanned_by(samples))
            .count();
        missed as f64 / self.trials.len() as f64
    }

    pub fn summary(&self) -> GrowthSummary {
        let mut spans: Vec<usize> = self
            .trials
            .iter()
            .filter_map(|t| t.samples_to_span)
            .collect();
        spans.sort_unstable();
        let quantile = |q: f64| -> f64 {
            if spans.is_empty() {
                return f64::NAN;
            }
            let idx = ((q * spans.len() as f64).ceil() as usize).clamp(1, spans.len()) - 1;
            spans[idx] as f64
        };
        let median = if spans.is_empty() {
            f64::NAN
        } else if spans.len() % 2 == 1 {
            spans[spans.len() / 2] as f64
        } else {
            (spans[spans.len() / 2 - 1] + spans[spans.len() / 2]) as f64 / 2.0
        };
        GrowthSummary {
            trials: self.trials.len(),
            completed: spans.len(),
            mean_samples_to_span: if spans.is_empty() {
                f64::NAN
            } else {
                spans.iter().sum::<usize>() as f64 / spans.len() as f64
            },
            median_samples_to_span: median,
            p90_samples_to_span: quantile(0.9),
        }
    }

    /// Rows `trial,sample_index,hull_rank,spanned`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "sample_index", "hull_rank", "spanned"])?;
        for t in &self.trials {
            for (i, &rank) in t.ranks.iter().enumerate() {
                w.write_record([
                    t.trial.to_string(),
                    (i + 1).to_string(),
                    rank.to_string(),
                    (rank == self.full_rank).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GrowthOptions {
    pub threads: usize,
    /// Enumerate the exact hull at rank increases (grids up to [`CHECKPOINT_GRID_CAP`]).
    pub exact_checkpoints: bool,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            exact_checkpoints: false,
        }
    }
}

pub fn simulate_hull_growth(
    spec: &AttributeSpec,
    trials: usize,
    seed: u64,
    max_samples: usize,
) -> Result<HullGrowthCurve> {
    simulate_hull_growth_with(spec, trials, seed, max_samples, &GrowthOptions::default())
}

pub fn simulate_hull_growth_with(
    spec: &AttributeSpec,
    trials: usize,
    seed: u64,
    max_samples: usize,
    options: &GrowthOptions,
) -> Result<HullGrowthCurve> {
    let total = spec
        .total_groups()
        .filter(|&t| t <= DEFAULT_ENUMERATION_CAP)
        .ok_or(CrmError::EnumerationTooLarge {
            size: spec.total_groups_u128(),
            cap: DEFAULT_ENUMERATION_CAP,
        })?;
    let checkpoints = options.exact_checkpoints && total <= CHECKPOINT_GRID_CAP;
    let full_rank = spec.affine_dimension() + 1;
    let run = |trial: usize| {
        run_trial(
            spec,
            trial,
            seed,
            max_samples,
            total,
            full_rank,
            checkpoints,
        )
    };

    let results: Vec<Result<GrowthTrial>> = if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| CrmError::InvalidConfig(e.to_string()))?;
        pool.install(|| (0..trials).into_par_iter().map(run).collect())
    } else {
        (0..trials).map(run).collect()
    };
    Ok(HullGrowthCurve {
        spec: spec.clone(),
        seed,
        max_samples,
        full_rank,
        trials: results.into_iter().collect::<Result<_>>()?,
    })
}

fn run_trial(
    spec: &AttributeSpec,
    trial: usize,
    seed: u64,
    max_samples: usize,
    total: usize,
    full_rank: usize,
    checkpoints: bool,
) -> Result<GrowthTrial> {
    let mut rng = rng::stream(seed.wrapping_add(trial as u64), Purpose::HullGrowth);
    let mut span = AffineSpan::new();
    let mut seen = GroupSet::new();
    let mut record = GrowthTrial {
        trial,
        ranks: Vec::new(),
        samples_to_span: None,
        checkpoints: Vec::new(),
    };
    let mut enc = vec![0.0; spec.onehot_len()];
    for s in 1..=max_samples {
        let g = spec.group_at(rng.random_range(0..total));
        if seen.insert(g.clone()) {
            enc.iter_mut().for_each(|x| *x = 0.0);
            for (&offset, &v) in spec.offsets().iter().zip(g.values()) {
                enc[offset + v] = 1.0;
            }
            if span.add(&enc) && checkpoints {
                record
                    .checkpoints
                    .push((s, enumerate_hull(&seen, spec)?.len()));
            }
        }
        let rank = span.affine_rank();
        record.ranks.push(rank);
        if rank == full_rank {
            record.samples_to_span = Some(s);
            break;
        }
    }
    Ok(record)
}

/// Sample count `2c(md + d ln d)` at which the hull covers the grid with probability above `1 - 1/c`.
pub fn spanning_sample_bound(m: usize, d: usize, c: f64) -> f64 {
    let d = d as f64;
    2.0 * c * (m as f64 * d + d * d.ln())
}

/// Large-`d` approximation `8 d ln(d/2)` of the mean samples-to-span for two attributes.
pub fn expected_samples_two_attributes(d: usize) -> f64 {
    let d = d as f64;
    8.0 * d * (d / 2.0).ln()
}

/// Samples used by the alternating square-subgrid procedure on a `d x d` grid.
///
/// The procedure keeps a rectangle `S_x x S_y` inside the hull and only accepts
/// a sample that extends it along the current direction; directions alternate.
/// Its length upper-bounds the first time the hull covers the grid.
pub fn simulate_subgrid_procedure(d: usize, trials: usize, seed: u64) -> Vec<usize> {
    (0..trials)
        .map(|trial| {
            let mut rng = rng::stream(seed.wrapping_add(trial as u64), Purpose::SubgridProcedure);
            let (mut in_x, mut in_y) = (vec![false; d], vec![false; d]);
            let (gx, gy) = (rng.random_range(0..d), rng.random_range(0..d));
            in_x[gx] = true;
            in_y[gy] = true;
            let (mut kx, mut ky) = (1, 1);
            let mut samples = 1;
            let mut grow_y = true;
            while kx < d || ky < d {
                let (gx, gy) = (rng.random_range(0..d), rng.random_range(0..d));
                samples += 1;
                if grow_y && in_x[gx] && !in_y[gy] {
                    in_y[gy] = true;
                    ky += 1;
                    grow_y = false;
                } else if !grow_y && in_y[gy] && !in_x[gx] {
                    in_x[gx] = true;
                    kx += 1;
                    grow_y = true;
                }
            }
            samples
        })
        .collect()
}

/// Exact mean of [`simulate_subgrid_procedure`]: `1 + sum_k d^2/(k(d-k)) + d^2/((k+1)(d-k))`.
pub fn expected_subgrid_procedure_samples(d: usize) -> f64 {
    let dd = (d * d) as f64;
    1.0 + (1..d)
        .map(|k| {
            let (k, r) = (k as f64, (d - k) as f64);
            dd / (k * r) + dd / ((k + 1.0) * r)
        })
        .sum::<f64>()
}
