//! Agreement metrics between label sources: Cohen's kappa, exact agreement,
//! three-way stratification, confusion matrices and label distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Label;
use crate::triage::LabelMerge;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("label sets are not aligned: only in first {only_in_a:?}, only in second {only_in_b:?}")]
    Alignment { only_in_a: Vec<String>, only_in_b: Vec<String> },
    #[error("label file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label set {0:?} is empty")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One rater's labels keyed by component key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub rater_id: String,
    pub labels: BTreeMap<String, Label>,
}

impl LabelSet {
    pub fn new(rater_id: &str, labels: BTreeMap<String, Label>) -> Self {
        Self { rater_id: rater_id.to_string(), labels }
    }

    /// Keys are the positions `0..n`, zero-padded so they sort numerically.
    pub fn from_labels(rater_id: &str, labels: &[Label]) -> Self {
        Self::new(rater_id, labels.iter().enumerate().map(|(i, l)| (format!("{i:06}"), *l)).collect())
    }

    /// Parses `component_key, label` lines; `#` comments and blanks skipped.
    pub fn parse(rater_id: &str, text: &str) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EvalError::Parse { line: n + 1, message };
            let (key, label) = line.rsplit_once(',').ok_or_else(|| err("expected `key, label`".into()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            let label = Label::normalize(label).ok_or_else(|| err(format!("unknown label {:?}", label.trim())))?;
            if labels.insert(key.to_string(), label).is_some() {
                return Err(err(format!("duplicate key {key:?}")));
            }
        }
        if labels.is_empty() {
            return Err(EvalError::Empty(rater_id.to_string()));
        }
        Ok(Self::new(rater_id, labels))
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|(k, l)| format!("{k}, {l}\n")).collect()
    }

    pub fn merged(&self, merge: &LabelMerge) -> Self {
        Self::new(&self.rater_id, self.labels.iter().map(|(k, l)| (k.clone(), merge.apply(*l))).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn align<'a>(sets: &[&'a LabelSet]) -> Result<Vec<Vec<Label>>> {
    let first = sets[0];
    for s in &sets[1..] {
        let a: BTreeSet<&String> = first.labels.keys().collect();
        let b: BTreeSet<&String> = s.labels.keys().collect();
        if a != b {
            return Err(EvalError::Alignment {
                only_in_a: a.difference(&b).map(|k| k.to_string()).collect(),
                only_in_b: b.difference(&a).map(|k| k.to_string()).collect(),
            });
        }
    }
    for s in sets {
        if s.is_empty() {
            return Err(EvalError::Empty(s.rater_id.clone()));
        }
    }
    Ok(sets.iter().map(|s| s.labels.values().copied().collect()).collect())
}

/// Kappa from paired label sequences. When chance agreement is 1 (both
/// raters constant and identical) the result is defined as 1.0.
pub fn kappa_from_pairs(a: &[Label], b: &[Label]) -> f64 {
    let n = a.len() as f64;
    let mut ca = [0usize; 7];
    let mut cb = [0usize; 7];
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        ca[*x as usize] += 1;
        cb[*y as usize] += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..7).map(|k| (ca[k] as f64 / n) * (cb[k] as f64 / n)).sum();
    if p_e >= 1.0 {
        return if p_o >= 1.0 { 1.0 } else { 0.0 };
    }
    (p_o - p_e) / (1.0 - p_e)
}

pub fn cohens_kappa(a: &LabelSet, b: &LabelSet) -> Result<f64> {
    let v = align(&[a, b])?;
    Ok(kappa_from_pairs(&v[0], &v[1]))
}

pub fn exact_agreement(a: &LabelSet, b: &LabelSet) -> Result<f64> {
    let v = align(&[a, b])?;
    Ok(v[0].iter().zip(&v[1]).filter(|(x, y)| x == y).count() as f64 / v[0].len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    pub unanimous: f64,
    /// Everything that is neither unanimous nor automated-vs-human,
    /// including total disagreement.
    pub mixed: f64,
    /// Both automated raters agree and the human differs.
    pub automated_vs_human: f64,
}

pub fn stratify_three_way(vl: &LabelSet, baseline: &LabelSet, human: &LabelSet) -> Result<Strata> {
    let v = align(&[vl, baseline, human])?;
    let n = v[0].len() as f64;
    let (mut un, mut avh, mut mixed) = (0usize, 0usize, 0usize);
    for i in 0..v[0].len() {
        let (a, b, h) = (v[0][i], v[1][i], v[2][i]);
        if a == b && b == h {
            un += 1;
        } else if a == b {
            avh += 1;
        } else {
            mixed += 1;
        }
    }
    Ok(Strata { unanimous: un as f64 / n, mixed: mixed as f64 / n, automated_vs_human: avh as f64 / n })
}

/// Rows are truth, columns predictions, over `taxonomy` order. Labels outside
/// the taxonomy are an alignment error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn off_diagonal(&self) -> usize {
        let mut s = 0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i != j {
                    s += c;
                }
            }
        }
        s
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

pub fn confusion_matrix(pred: &LabelSet, truth: &LabelSet, taxonomy: &[Label]) -> Result<ConfusionMatrix> {
    let v = align(&[truth, pred])?;
    let pos = |l: Label| taxonomy.iter().position(|t| *t == l);
    let mut counts = vec![vec![0usize; taxonomy.len()]; taxonomy.len()];
    for (t, p) in v[0].iter().zip(&v[1]) {
        match (pos(*t), pos(*p)) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => {
                return Err(EvalError::Alignment {
                    only_in_a: vec![format!("label {t} or {p} outside taxonomy")],
                    only_in_b: vec![],
                })
            }
        }
    }
    Ok(ConfusionMatrix { labels: taxonomy.to_vec(), counts })
}

/// Fraction of components per label, over `taxonomy`.
pub fn label_distribution(set: &LabelSet, taxonomy: &[Label]) -> BTreeMap<Label, f64> {
    let n = set.len().max(1) as f64;
    taxonomy
        .iter()
        .map(|t| (*t, set.labels.values().filter(|l| *l == t).count() as f64 / n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub taxonomy: Vec<Label>,
    /// Keyed `rater_a|rater_b`.
    pub kappa: BTreeMap<String, f64>,
    pub exact_agreement: BTreeMap<String, f64>,
    pub strata: Option<Strata>,
    pub confusion: Option<ConfusionMatrix>,
    pub distributions: BTreeMap<String, BTreeMap<Label, f64>>,
}

/// Pairwise metrics across `sets` (after merging). With three sets the first
/// two are the automated raters and the third the human, for stratification.
/// When `truth` names one of the sets, a confusion matrix against it is
/// added for every other set's first occurrence.
pub fn build_report(sets: &[LabelSet], merge: &LabelMerge, truth: Option<&str>) -> Result<EvalReport> {
    let merged: Vec<LabelSet> = sets.iter().map(|s| s.merged(merge)).collect();
    let taxonomy = merge.taxonomy();
    let mut report = EvalReport {
        taxonomy: taxonomy.clone(),
        kappa: BTreeMap::new(),
        exact_agreement: BTreeMap::new(),
        strata: None,
        confusion: None,
        distributions: BTreeMap::new(),
    };
    for (i, a) in merged.iter().enumerate() {
        report.distributions.insert(a.rater_id.clone(), label_distribution(a, &taxonomy));
        for b in &merged[i + 1..] {
            let key = format!("{}|{}", a.rater_id, b.rater_id);
            report.kappa.insert(key.clone(), cohens_kappa(a, b)?);
            report.exact_agreement.insert(key, exact_agreement(a, b)?);
        }
    }
    if merged.len() == 3 {
        report.strata = Some(stratify_three_way(&merged[0], &merged[1], &merged[2])?);
    }
    if let Some(t) = truth {
        if let Some(truth_set) = merged.iter().find(|s| s.rater_id == t) {
            if let Some(pred) = merged.iter().find(|s| s.rater_id != t) {
                report.confusion = Some(confusion_matrix(pred, truth_set, &taxonomy)?);
            }
        }
    }
    Ok(report)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: label distribution per rater, then agreement.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let raters: Vec<&String> = self.distributions.keys().collect();
        let _ = write!(s, "{:<16}", "label");
        for r in &raters {
            let _ = write!(s, "{:>12}", r);
        }
        s.push('\n');
        for l in &self.taxonomy {
            let _ = write!(s, "{:<16}", l.as_str());
            for r in &raters {
                let _ = write!(s, "{:>11.1}%", 100.0 * self.distributions[*r][l]);
            }
            s.push('\n');
        }
        if !self.kappa.is_empty() {
            s.push('\n');
            let _ = writeln!(s, "{:<32}{:>10}{:>12}", "pair", "kappa", "agreement");
            for (k, v) in &self.kappa {
                let _ = writeln!(s, "{:<32}{:>10.3}{:>11.1}%", k, v, 100.0 * self.exact_agreement[k]);
            }
        }
        if let Some(st) = &self.strata {
            s.push('\n');
            let _ = writeln!(s, "unanimous           {:>6.1}%", 100.0 * st.unanimous);
            let _ = writeln!(s, "mixed               {:>6.1}%", 100.0 * st.mixed);
            let _ = writeln!(s, "automated vs human  {:>6.1}%", 100.0 * st.automated_vs_human);
        }
        if let Some(cm) = &self.confusion {
            s.push('\n');
            let _ = write!(s, "{:<16}", "truth \\ pred");
            for l in &cm.labels {
                let _ = write!(s, "{:>8}", &l.as_str()[..l.as_str().len().min(7)]);
            }
            s.push('\n');
            for (l, row) in cm.labels.iter().zip(&cm.counts) {
                let _ = write!(s, "{:<16}", l.as_str());
                for c in row {
                    let _ = write!(s, "{c:>8}");
                }
                s.push('\n');
            }
        }
        s
    }
}
