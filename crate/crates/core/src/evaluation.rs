//! Accuracy metrics, oracle agreement and result aggregation.

use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribute_space::{AttributeSpec, Group, GroupSet};
use crate::crm::marginalize;
use crate::error::{CrmError, Result};
use crate::numeric;
use crate::table::GroupTable;

/// What a prediction is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Target {
    Attribute(usize),
    Group,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: Group,
    pub count: usize,
    pub correct: usize,
    /// `None` when the group has no samples.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAgreement {
    pub agreement: f64,
    pub mean_tv: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub target: Target,
    pub groups: Vec<GroupAccuracy>,
    pub average_acc: f64,
    pub worst_group_acc: f64,
    pub balanced_acc: f64,
    /// Groups listed in the report but absent from the labels; excluded from the aggregates.
    pub empty_groups: Vec<Group>,
    pub oracle: Option<OracleAgreement>,
}

impl EvalReport {
    pub fn tagged(
        mut self,
        scenario: impl Into<String>,
        method: impl Into<String>,
        seed: u64,
    ) -> Self {
        self.scenario = scenario.into();
        self.method = method.into();
        self.seed = seed;
        self
    }

    pub fn with_oracle(mut self, oracle: OracleAgreement) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn accuracy_of(&self, group: &Group) -> Option<f64> {
        self.groups
            .iter()
            .find(|g| &g.group == group)
            .and_then(|g| g.accuracy)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {}  method {}  seed {}",
            self.scenario, self.method, self.seed
        )?;
        let width = self
            .groups
            .iter()
            .map(|g| g.group.to_string().len())
            .max()
            .unwrap_or(0)
            .max("balanced".len());
        writeln!(f, "{:<width$}  {:>8}  {:>8}", "group", "count", "acc")?;
        for g in &self.groups {
            let acc = g.accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
            writeln!(
                f,
                "{:<width$}  {:>8}  {:>8}",
                g.group.to_string(),
                g.count,
                acc
            )?;
        }
        writeln!(
            f,
            "{:<width$}  {:>8}  {:>8.4}",
            "average", "", self.average_acc
        )?;
        writeln!(
            f,
            "{:<width$}  {:>8}  {:>8.4}",
            "worst", "", self.worst_group_acc
        )?;
        write!(
            f,
            "{:<width$}  {:>8}  {:>8.4}",
            "balanced", "", self.balanced_acc
        )?;
        if let Some(o) = &self.oracle {
            write!(
                f,
                "\noracle agreement {:.4}  mean tv {:.4}",
                o.agreement, o.mean_tv
            )?;
        }
        Ok(())
    }
}

fn report_from_outcomes(
    labels: &[Group],
    correct: impl Iterator<Item = bool>,
    groups: &GroupSet,
    target: Target,
) -> Result<EvalReport> {
    let mut count = vec![0usize; groups.len()];
    let mut hits = vec![0usize; groups.len()];
    let mut n = 0;
    for (label, ok) in labels.iter().zip(correct) {
        let k = groups
            .position(label)
            .ok_or_else(|| CrmError::NotInSupport(label.to_string()))?;
        count[k] += 1;
        hits[k] += ok as usize;
        n += 1;
    }
    if n == 0 {
        return Err(CrmError::EmptyData);
    }
    let per_group: Vec<GroupAccuracy> = groups
        .iter()
        .zip(count.iter().zip(&hits))
        .map(|(g, (&c, &h))| GroupAccuracy {
            group: g.clone(),
            count: c,
            correct: h,
            accuracy: (c > 0).then(|| h as f64 / c as f64),
        })
        .collect();
    let accs: Vec<f64> = per_group.iter().filter_map(|g| g.accuracy).collect();
    Ok(EvalReport {
        scenario: String::new(),
        method: String::new(),
        seed: 0,
        target,
        average_acc: hits.iter().sum::<usize>() as f64 / n as f64,
        worst_group_acc: accs.iter().copied().fold(f64::INFINITY, f64::min),
        balanced_acc: accs.iter().sum::<f64>() / accs.len() as f64,
        empty_groups: per_group
            .iter()
            .filter(|g| g.count == 0)
            .map(|g| g.group.clone())
            .collect(),
        groups: per_group,
        oracle: None,
    })
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CrmError::DimensionMismatch {
            expected: b,
            got: a,
        });
    }
    Ok(())
}

/// Scores attribute-value predictions against `labels`, accumulating accuracy per label group.
///
/// Every label must lie in `groups`; groups without labels are reported and flagged.
pub fn evaluate(
    predictions: &[usize],
    labels: &[Group],
    attribute: usize,
    groups: &GroupSet,
) -> Result<EvalReport> {
    check_lengths(predictions.len(), labels.len())?;
    if let Some(g) = labels.iter().find(|g| attribute >= g.len()) {
        return Err(CrmError::InvalidGroup(format!(
            "{g} has no attribute {}",
            attribute + 1
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .map(|(&p, g)| p == g.value(attribute));
    report_from_outcomes(labels, correct, groups, Target::Attribute(attribute))
}

/// Scores whole-group predictions.
pub fn evaluate_groups(
    predictions: &[Group],
    labels: &[Group],
    groups: &GroupSet,
) -> Result<EvalReport> {
    check_lengths(predictions.len(), labels.len())?;
    let correct = predictions.iter().zip(labels).map(|(p, g)| p == g);
    report_from_outcomes(labels, correct, groups, Target::Group)
}

/// Argmax of the marginal over `attribute` for each posterior.
pub fn attribute_predictions(
    posteriors: &[GroupTable],
    attribute: usize,
    spec: &AttributeSpec,
) -> Result<Vec<usize>> {
    posteriors
        .iter()
        .map(|p| Ok(numeric::argmax(&marginalize(p, attribute, spec)?)))
        .collect()
}

pub fn group_predictions(posteriors: &[GroupTable]) -> Vec<Group> {
    posteriors
        .iter()
        .map(|p| p.argmax_group().clone())
        .collect()
}

/// Argmax agreement and mean total variation between paired posterior tables.
pub fn oracle_agreement(predicted: &[GroupTable], bayes: &[GroupTable]) -> Result<OracleAgreement> {
    check_lengths(predicted.len(), bayes.len())?;
    if predicted.is_empty() {
        return Err(CrmError::EmptyData);
    }
    let mut agree = 0usize;
    let mut tv = 0.0;
    let mut aligned = Vec::new();
    for (p, b) in predicted.iter().zip(bayes) {
        if !p.support.same_members(&b.support) {
            return Err(CrmError::SupportMismatch(
                "predicted and oracle posteriors differ in support".into(),
            ));
        }
        aligned.clear();
        aligned.extend(p.support.iter().map(|g| b.get(g).expect("same members")));
        agree += (numeric::argmax(&p.values) == numeric::argmax(&aligned)) as usize;
        tv += numeric::total_variation(&p.values, &aligned);
    }
    let n = predicted.len() as f64;
    Ok(OracleAgreement {
        agreement: agree as f64 / n,
        mean_tv: tv / n,
        samples: predicted.len(),
    })
}

/// One CSV row per report, keyed by `(scenario, method, seed)`.
pub fn write_aggregate_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| (&a.scenario, &a.method, a.seed).cmp(&(&b.scenario, &b.method, b.seed)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "method",
        "seed",
        "average_acc",
        "worst_group_acc",
        "balanced_acc",
        "oracle_agreement",
        "mean_tv",
    ])?;
    for r in sorted {
        let (agree, tv) = r.oracle.map_or((String::new(), String::new()), |o| {
            (o.agreement.to_string(), o.mean_tv.to_string())
        });
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.seed.to_string(),
            r.average_acc.to_string(),
            r.worst_group_acc.to_string(),
            r.balanced_acc.to_string(),
            agree,
            tv,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub average_acc: MeanStderr,
    pub worst_group_acc: MeanStderr,
    pub balanced_acc: MeanStderr,
}

/// Collapses seeds: one row per `(scenario, method)`, in first-seen order.
pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in reports {
        let k = (r.scenario.as_str(), r.method.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(s, m)| {
            let rs: Vec<&EvalReport> = reports
                .iter()
                .filter(|r| r.scenario == s && r.method == m)
                .collect();
            let stat = |f: fn(&EvalReport) -> f64| {
                MeanStderr::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                scenario: s.to_string(),
                method: m.to_string(),
                average_acc: stat(|r| r.average_acc),
                worst_group_acc: stat(|r| r.worst_group_acc),
                balanced_acc: stat(|r| r.balanced_acc),
            }
        })
        .collect()
}

/// Aligned text table of summary rows.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let sw = rows
        .iter()
        .map(|r| r.scenario.chars().count())
        .max()
        .unwrap_or(8)
        .max(8);
    let mw = rows
        .iter()
        .map(|r| r.method.chars().count())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<sw$}  {:<mw$}  {:>17}  {:>17}  {:>17}",
        "scenario", "method", "average", "worst group", "balanced"
    );
    let cell = |s: &MeanStderr| format!("{:.4} ± {:.4}", s.mean, s.stderr);
    for r in rows {
        // pad by chars, not bytes, so hats and stars line up
        let pad =
            |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let _ = writeln!(
            out,
            "{}  {}  {:>17}  {:>17}  {:>17}",
            pad(&r.scenario, sw),
            pad(&r.method, mw),
            cell(&r.average_acc),
            cell(&r.worst_group_acc),
            cell(&r.balanced_acc)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GroupSet {
        AttributeSpec::uniform(2, 2).unwrap().full_grid()
    }

    #[test]
    fn all_correct() {
        let labels: Vec<Group> = grid().iter().cloned().collect();
        let preds: Vec<usize> = labels.iter().map(|g| g.value(0)).collect();
        let r = evaluate(&preds, &labels, 0, &grid()).unwrap();
        assert_eq!(
            (r.average_acc, r.worst_group_acc, r.balanced_acc),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn two_groups_equal_size() {
        let a = Group::from([0, 0]);
        let b = Group::from([1, 1]);
        let groups = GroupSet::from(vec![a.clone(), b.clone()]);
        let labels = vec![a.clone(), a, b.clone(), b];
        let r = evaluate(&[0, 0, 0, 0], &labels, 0, &groups).unwrap();
        assert_eq!(
            (r.average_acc, r.balanced_acc, r.worst_group_acc),
            (0.5, 0.5, 0.0)
        );
    }

    #[test]
    fn imbalanced_groups() {
        let a = Group::from([0, 0]);
        let b = Group::from([1, 1]);
        let groups = GroupSet::from(vec![a.clone(), b.clone()]);
        let mut labels = vec![a; 90];
        labels.extend(vec![b; 10]);
        let r = evaluate(&vec![0; 100], &labels, 0, &groups).unwrap();
        assert_eq!(
            (r.average_acc, r.balanced_acc, r.worst_group_acc),
            (0.9, 0.5, 0.0)
        );
    }

    #[test]
    fn empty_group_is_flagged_and_excluded() {
        let labels = vec![Group::from([0, 0]), Group::from([0, 1])];
        let r = evaluate(&[0, 1], &labels, 0, &grid()).unwrap();
        assert_eq!(r.empty_groups.len(), 2);
        assert_eq!(r.worst_group_acc, 0.0);
        assert_eq!(r.balanced_acc, 0.5);
        assert!(r.to_text().contains('-'));
    }

    #[test]
    fn label_outside_groups_is_an_error() {
        let groups = GroupSet::from(vec![Group::from([0, 0])]);
        assert!(evaluate(&[0], &[Group::from([1, 1])], 0, &groups).is_err());
        assert!(evaluate(&[0, 1], &[Group::from([0, 0])], 0, &groups).is_err());
    }

    #[test]
    fn identical_tables_agree() {
        let t = GroupTable::new(grid(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let o = oracle_agreement(&[t.clone(), t.clone()], &[t.clone(), t]).unwrap();
        assert_eq!((o.agreement, o.mean_tv), (1.0, 0.0));
    }

    #[test]
    fn agreement_aligns_by_group() {
        let t = GroupTable::new(grid(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let rev = GroupSet::from(grid().iter().rev().cloned().collect::<Vec<_>>());
        let u = GroupTable::new(rev, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let o = oracle_agreement(&[t], &[u]).unwrap();
        assert_eq!((o.agreement, o.mean_tv), (1.0, 0.0));
    }

    #[test]
    fn support_mismatch_is_an_error() {
        let t = GroupTable::uniform(grid());
        let u = GroupTable::uniform(GroupSet::from(vec![Group::from([0, 0])]));
        assert!(matches!(
            oracle_agreement(&[t], &[u]),
            Err(CrmError::SupportMismatch(_))
        ));
    }

    #[test]
    fn summary_mean_and_stderr() {
        let base = evaluate(&[0], &[Group::from([0, 0])], 0, &grid()).unwrap();
        let reports: Vec<EvalReport> = [1.0, 0.5, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut r = base.clone().tagged("s", "m", i as u64);
                r.average_acc = a;
                r
            })
            .collect();
        let rows = summarize(&reports);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].average_acc.mean, 0.5);
        assert!((rows[0].average_acc.stderr - (0.25f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(summary_text(&rows).contains("0.5000 ± 0.2887"));
    }
}
