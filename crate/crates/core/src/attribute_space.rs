//! Categorical product space of attributes.
//!
//! A group is one combination `z = (z_1, ..., z_m)` of attribute values. Its
//! encoding is the concatenation of one one-hot block per attribute, so a
//! spec with cardinalities `d_1, ..., d_m` produces vectors of length
//! `d_1 + ... + d_m` holding exactly `m` ones. Indices are 0-based everywhere
//! except in `Display` output.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CrmError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct AttributeSpec {
    cardinalities: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    cardinalities: Vec<usize>,
}

impl TryFrom<RawSpec> for AttributeSpec {
    type Error = CrmError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        AttributeSpec::new(raw.cardinalities)
    }
}

impl From<AttributeSpec> for RawSpec {
    fn from(spec: AttributeSpec) -> Self {
        RawSpec {
            cardinalities: spec.cardinalities,
        }
    }
}

impl AttributeSpec {
    pub fn new(cardinalities: Vec<usize>) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(CrmError::InvalidSpec(
                "at least one attribute is required".into(),
            ));
        }
        if let Some(i) = cardinalities.iter().position(|&d| d == 0) {
            return Err(CrmError::InvalidSpec(format!(
                "attribute {i} has cardinality 0"
            )));
        }
        let offsets = cardinalities
            .iter()
            .scan(0, |acc, &d| {
                let start = *acc;
                *acc += d;
                Some(start)
            })
            .collect();
        Ok(Self {
            cardinalities,
            offsets,
        })
    }

    /// `m` attributes that all take `d` values.
    pub fn uniform(m: usize, d: usize) -> Result<Self> {
        Self::new(vec![d; m])
    }

    pub fn num_attributes(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, attribute: usize) -> usize {
        self.cardinalities[attribute]
    }

    /// Start of each attribute's block inside a one-hot encoding.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn onehot_len(&self) -> usize {
        self.cardinalities.iter().sum()
    }

    /// The common cardinality, if every attribute has the same one.
    pub fn uniform_cardinality(&self) -> Option<usize> {
        let d = self.cardinalities[0];
        self.cardinalities.iter().all(|&c| c == d).then_some(d)
    }

    /// Number of groups in the full grid, exact even when it does not fit in `usize`.
    pub fn total_groups_u128(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, &d| acc.saturating_mul(d as u128))
    }

    pub fn total_groups(&self) -> Option<usize> {
        usize::try_from(self.total_groups_u128()).ok()
    }

    /// Dimension of the affine span of all encodings, `sum_i (d_i - 1)`.
    pub fn affine_dimension(&self) -> usize {
        self.cardinalities.iter().map(|d| d - 1).sum()
    }

    pub fn validate(&self, group: &Group) -> Result<()> {
        if group.len() != self.num_attributes() {
            return Err(CrmError::InvalidGroup(format!(
                "{group} has {} attributes, spec has {}",
                group.len(),
                self.num_attributes()
            )));
        }
        for (i, (&v, &d)) in group.values().iter().zip(&self.cardinalities).enumerate() {
            if v >= d {
                return Err(CrmError::InvalidGroup(format!(
                    "attribute {i} value {v} out of range for cardinality {d}"
                )));
            }
        }
        Ok(())
    }

    /// Mixed-radix index of a group in the full grid; the last attribute varies fastest.
    pub fn flat_index(&self, group: &Group) -> usize {
        group
            .values()
            .iter()
            .zip(&self.cardinalities)
            .fold(0, |acc, (&v, &d)| acc * d + v)
    }

    pub fn group_at(&self, mut index: usize) -> Group {
        let mut values = vec![0; self.num_attributes()];
        for (slot, &d) in values.iter_mut().zip(&self.cardinalities).rev() {
            *slot = index % d;
            index /= d;
        }
        Group::new(values)
    }

    /// Every group of the grid in flat-index order.
    pub fn groups(&self) -> impl Iterator<Item = Group> + '_ {
        let total = self.total_groups().unwrap_or(usize::MAX);
        (0..total).map(move |i| self.group_at(i))
    }

    pub fn full_grid(&self) -> GroupSet {
        self.groups().collect()
    }
}

/// One attribute combination.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Group(Vec<usize>);

impl Group {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn value(&self, attribute: usize) -> usize {
        self.0[attribute]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &Group) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<usize>> for Group {
    fn from(values: Vec<usize>) -> Self {
        Self(values)
    }
}

impl<const N: usize> From<[usize; N]> for Group {
    fn from(values: [usize; N]) -> Self {
        Self(values.to_vec())
    }
}

impl fmt::Display for Group {
    // 1-based for people
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, ")")
    }
}

/// Concatenated one-hot encoding `sigma(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotVector(Vec<f64>);

impl OneHotVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

pub fn one_hot_encode(group: &Group, spec: &AttributeSpec) -> Result<OneHotVector> {
    spec.validate(group)?;
    let mut entries = vec![0.0; spec.onehot_len()];
    for (&offset, &v) in spec.offsets().iter().zip(group.values()) {
        entries[offset + v] = 1.0;
    }
    Ok(OneHotVector(entries))
}

/// Inverse of [`one_hot_encode`]; each block must hold a single exact 1 and zeros elsewhere.
pub fn decode(vector: &[f64], spec: &AttributeSpec) -> Result<Group> {
    if vector.len() != spec.onehot_len() {
        return Err(CrmError::Decode(format!(
            "length {} does not match one-hot length {}",
            vector.len(),
            spec.onehot_len()
        )));
    }
    let mut values = Vec::with_capacity(spec.num_attributes());
    for (i, (&offset, &d)) in spec.offsets().iter().zip(spec.cardinalities()).enumerate() {
        let block = &vector[offset..offset + d];
        let mut hot = None;
        for (k, &x) in block.iter().enumerate() {
            if x == 1.0 {
                if hot.replace(k).is_some() {
                    return Err(CrmError::Decode(format!("block {i} has more than one 1")));
                }
            } else if x != 0.0 {
                return Err(CrmError::Decode(format!(
                    "block {i} holds non-binary entry {x}"
                )));
            }
        }
        values.push(hot.ok_or_else(|| CrmError::Decode(format!("block {i} has no 1")))?);
    }
    Ok(Group::new(values))
}

/// Ordered, duplicate-free set of groups with O(1) membership.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Group>", into = "Vec<Group>")]
pub struct GroupSet {
    groups: Vec<Group>,
    index: HashMap<Group, usize>,
}

impl GroupSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `group` if absent; returns whether it was new.
    pub fn insert(&mut self, group: Group) -> bool {
        if self.index.contains_key(&group) {
            return false;
        }
        self.index.insert(group.clone(), self.groups.len());
        self.groups.push(group);
        true
    }

    pub fn contains(&self, group: &Group) -> bool {
        self.index.contains_key(group)
    }

    pub fn position(&self, group: &Group) -> Option<usize> {
        self.index.get(group).copied()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Group> {
        self.groups.iter()
    }

    pub fn as_slice(&self) -> &[Group] {
        &self.groups
    }

    pub fn get(&self, i: usize) -> &Group {
        &self.groups[i]
    }

    pub fn is_subset(&self, other: &GroupSet) -> bool {
        self.iter().all(|g| other.contains(g))
    }

    pub fn validate(&self, spec: &AttributeSpec) -> Result<()> {
        self.iter().try_for_each(|g| spec.validate(g))
    }

    /// Same members in flat-index order.
    pub fn sorted(&self) -> GroupSet {
        let mut groups = self.groups.clone();
        groups.sort();
        groups.into_iter().collect()
    }

    /// Members of `self` not in `other`, in `self`'s order.
    pub fn difference(&self, other: &GroupSet) -> GroupSet {
        self.iter()
            .filter(|g| !other.contains(g))
            .cloned()
            .collect()
    }

    /// Set equality, ignoring order.
    pub fn same_members(&self, other: &GroupSet) -> bool {
        self.len() == other.len() && self.is_subset(other)
    }

    /// Values attribute `i` takes somewhere in the set, ascending.
    pub fn marginal_values(&self, attribute: usize) -> Vec<usize> {
        self.iter()
            .map(|g| g.value(attribute))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

impl PartialEq for GroupSet {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

impl FromIterator<Group> for GroupSet {
    fn from_iter<I: IntoIterator<Item = Group>>(iter: I) -> Self {
        let mut set = GroupSet::new();
        for g in iter {
            set.insert(g);
        }
        set
    }
}

impl From<Vec<Group>> for GroupSet {
    fn from(groups: Vec<Group>) -> Self {
        groups.into_iter().collect()
    }
}

impl From<GroupSet> for Vec<Group> {
    fn from(set: GroupSet) -> Self {
        set.groups
    }
}

impl<'a> IntoIterator for &'a GroupSet {
    type Item = &'a Group;
    type IntoIter = std::slice::Iter<'a, Group>;

    fn into_iter(self) -> Self::IntoIter {
        self.groups.iter()
    }
}

/// `Z_1^train x ... x Z_m^train`, enumerated with the last attribute varying fastest.
pub fn cartesian_product_of_marginals(set: &GroupSet, spec: &AttributeSpec) -> Result<GroupSet> {
    if set.is_empty() {
        return Err(CrmError::EmptySupport);
    }
    set.validate(spec)?;
    let marginals: Vec<Vec<usize>> = (0..spec.num_attributes())
        .map(|i| set.marginal_values(i))
        .collect();
    Ok(product(&marginals))
}

pub(crate) fn product(marginals: &[Vec<usize>]) -> GroupSet {
    let mut out = vec![Vec::with_capacity(marginals.len())];
    for values in marginals {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    out.into_iter().map(Group::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(groups: &[&[usize]]) -> GroupSet {
        groups.iter().map(|g| Group::new(g.to_vec())).collect()
    }

    #[test]
    fn encodes_waterbird_on_land() {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        let v = one_hot_encode(&Group::from([0, 1]), &spec).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn encodes_degenerate_and_heterogeneous_specs() {
        let one = AttributeSpec::uniform(1, 1).unwrap();
        assert_eq!(
            one_hot_encode(&Group::from([0]), &one).unwrap().as_slice(),
            &[1.0]
        );

        let spec = AttributeSpec::new(vec![2, 3, 2]).unwrap();
        let z = Group::from([1, 2, 0]);
        let v = one_hot_encode(&z, &spec).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(decode(v.as_slice(), &spec).unwrap(), z);
    }

    #[test]
    fn rejects_out_of_range_group() {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        assert!(matches!(
            one_hot_encode(&Group::from([0, 2]), &spec),
            Err(CrmError::InvalidGroup(_))
        ));
        assert!(one_hot_encode(&Group::from([0]), &spec).is_err());
    }

    #[test]
    fn decode_examples() {
        let spec = AttributeSpec::uniform(2, 2).unwrap();
        assert_eq!(
            decode(&[1.0, 0.0, 0.0, 1.0], &spec).unwrap(),
            Group::from([0, 1])
        );
        assert_eq!(
            decode(&[0.0, 1.0, 1.0, 0.0], &spec).unwrap(),
            Group::from([1, 0])
        );
        assert!(matches!(
            decode(&[0.5, 0.5, 1.0, 0.0], &spec),
            Err(CrmError::Decode(_))
        ));
        assert!(decode(&[1.0, 1.0, 1.0, 0.0], &spec).is_err());
        assert!(decode(&[0.0, 0.0, 1.0, 0.0], &spec).is_err());
        assert!(decode(&[1.0, 0.0, 1.0], &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(AttributeSpec::new(vec![]).is_err());
        assert!(AttributeSpec::new(vec![2, 0]).is_err());
        let spec = AttributeSpec::new(vec![2, 8]).unwrap();
        assert_eq!(spec.onehot_len(), 10);
        assert_eq!(spec.total_groups(), Some(16));
        assert_eq!(spec.offsets(), &[0, 2]);
        assert_eq!(spec.uniform_cardinality(), None);
        assert_eq!(spec.affine_dimension(), 8);
    }

    #[test]
    fn flat_index_round_trip() {
        let spec = AttributeSpec::new(vec![3, 1, 4]).unwrap();
        let all: Vec<Group> = spec.groups().collect();
        assert_eq!(all.len(), 12);
        for (i, g) in all.iter().enumerate() {
            assert_eq!(spec.flat_index(g), i);
        }
    }

    #[test]
    fn cartesian_product_examples() {
        let spec2 = AttributeSpec::uniform(2, 2).unwrap();
        let full = cartesian_product_of_marginals(&set(&[&[0, 0], &[1, 1]]), &spec2).unwrap();
        assert!(full.same_members(&set(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]])));

        let single = cartesian_product_of_marginals(&set(&[&[0, 0]]), &spec2).unwrap();
        assert_eq!(single, set(&[&[0, 0]]));

        let spec3 = AttributeSpec::uniform(2, 3).unwrap();
        let l = cartesian_product_of_marginals(&set(&[&[0, 0], &[0, 1], &[1, 0]]), &spec3).unwrap();
        assert!(l.same_members(&set(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]])));

        assert!(matches!(
            cartesian_product_of_marginals(&GroupSet::new(), &spec2),
            Err(CrmError::EmptySupport)
        ));
    }

    #[test]
    fn group_set_ignores_duplicates() {
        let mut s = GroupSet::new();
        assert!(s.insert(Group::from([1, 0])));
        assert!(!s.insert(Group::from([1, 0])));
        assert_eq!(s.len(), 1);
        assert_eq!(s.position(&Group::from([1, 0])), Some(0));
    }

    #[test]
    fn json_shapes() {
        let spec = AttributeSpec::new(vec![2, 3]).unwrap();
        assert_eq!(
            serde_json::to_string(&spec).unwrap(),
            r#"{"cardinalities":[2,3]}"#
        );
        assert!(serde_json::from_str::<AttributeSpec>(r#"{"cardinalities":[0]}"#).is_err());
        assert_eq!(
            serde_json::to_string(&Group::from([1, 2])).unwrap(),
            "[1,2]"
        );
        let s: GroupSet = serde_json::from_str("[[0,1],[1,1]]").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn display_is_one_based() {
        assert_eq!(Group::from([0, 2]).to_string(), "(1,3)");
    }
}
