use serde::{Deserialize, Serialize};

use crate::attribute_space::{Group, GroupSet};
use crate::error::{CrmError, Result};

/// Real values keyed by the groups of a support, in support order.
///
/// Used for priors, posteriors, logits and bias tables alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub support: GroupSet,
    pub values: Vec<f64>,
}

impl GroupTable {
    pub fn new(support: GroupSet, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(CrmError::SupportMismatch(format!(
                "{} groups but {} values",
                support.len(),
                values.len()
            )));
        }
        Ok(Self { support, values })
    }

    pub fn constant(support: GroupSet, value: f64) -> Self {
        let values = vec![value; support.len()];
        Self { support, values }
    }

    /// Uniform probabilities over `support`.
    pub fn uniform(support: GroupSet) -> Self {
        let p = 1.0 / support.len() as f64;
        Self::constant(support, p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, group: &Group) -> Option<f64> {
        self.support.position(group).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Group, f64)> {
        self.support.iter().zip(self.values.iter().copied())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GroupTable {
        GroupTable {
            support: self.support.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Checks the table is a probability distribution to within `tol`.
    pub fn check_distribution(&self, tol: f64) -> Result<()> {
        if self.is_empty() {
            return Err(CrmError::EmptySupport);
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(CrmError::InvalidPrior(format!(
                "entry {v} is not a probability"
            )));
        }
        let total: f64 = self.values.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(CrmError::InvalidPrior(format!("sums to {total}")));
        }
        Ok(())
    }

    /// Normalized table from nonnegative weights, e.g. group counts.
    pub fn normalized(support: GroupSet, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(CrmError::InvalidPrior("weights sum to zero".into()));
        }
        Self::new(support, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn argmax_group(&self) -> &Group {
        self.support.get(crate::numeric::argmax(&self.values))
    }

    /// Applies a whole-vector transform such as `log_softmax`.
    pub fn map_values(self, f: impl Fn(&[f64]) -> Vec<f64>) -> GroupTable {
        let values = f(&self.values);
        GroupTable {
            support: self.support,
            values,
        }
    }
}
