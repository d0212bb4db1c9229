//! Keep / reject / flag decisions from classifications, human overrides and
//! an append-only consistency log.

mod log;
mod overrides;

pub use self::log::{append_log, read_log, LogRecord};
pub use overrides::{apply_overrides, parse_overrides, Override};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::client::{ClassifyOutcome, ComponentClassification, Label};

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("policy error: {0}")]
    Policy(String),
    #[error("override file line {line}: {message}")]
    OverrideParse { line: usize, message: String },
    #[error("overrides reference unknown components: {0:?}")]
    UnknownComponents(Vec<usize>),
    #[error("log error: {0}")]
    Log(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TriageError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Reject,
    Flag,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Keep => "keep",
            Verdict::Reject => "reject",
            Verdict::Flag => "flag",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        match s.trim().to_ascii_lowercase().as_str() {
            "keep" | "accept" => Some(Verdict::Keep),
            "reject" => Some(Verdict::Reject),
            "flag" | "review" => Some(Verdict::Flag),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Policy,
    Override,
}

/// Label remapping applied before reporting (e.g. seven to six classes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMerge(pub BTreeMap<Label, Label>);

impl Default for LabelMerge {
    fn default() -> Self {
        Self(BTreeMap::from([(Label::LineNoise, Label::OtherArtifact)]))
    }
}

impl LabelMerge {
    pub fn identity() -> Self {
        Self(BTreeMap::new())
    }

    pub fn apply(&self, l: Label) -> Label {
        self.0.get(&l).copied().unwrap_or(l)
    }

    /// Labels that survive the merge, in canonical order.
    pub fn taxonomy(&self) -> Vec<Label> {
        let mut out: Vec<Label> = Label::ALL.iter().map(|l| self.apply(*l)).collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriagePolicy {
    pub artifact_reject_min_confidence: f64,
    pub brain_flag_max_confidence: f64,
    pub labels_considered_artifact: BTreeSet<Label>,
    /// Reads the thresholds the other way round: artifacts at or below the
    /// reject threshold are rejected and brain above the flag threshold is
    /// flagged. Off by default.
    pub literal_semantics: bool,
}

impl Default for TriagePolicy {
    fn default() -> Self {
        Self {
            artifact_reject_min_confidence: 0.80,
            brain_flag_max_confidence: 0.40,
            labels_considered_artifact: Label::ALL.iter().copied().filter(|l| l.is_artifact()).collect(),
            literal_semantics: false,
        }
    }
}

impl TriagePolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("artifact_reject_min_confidence", self.artifact_reject_min_confidence),
            ("brain_flag_max_confidence", self.brain_flag_max_confidence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TriageError::Policy(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.labels_considered_artifact.contains(&Label::Brain) {
            return Err(TriageError::Policy("brain cannot be an artifact label".into()));
        }
        Ok(())
    }

    /// SHA-256 of the JSON snapshot.
    pub fn snapshot_hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("policy serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub component_index: usize,
    pub verdict: Verdict,
    pub rule_fired: String,
    pub source: DecisionSource,
    pub label: Option<Label>,
    pub confidence: Option<f64>,
    /// Policy verdict before an override replaced it.
    pub policy_verdict: Option<Verdict>,
    pub note: Option<String>,
}

/// Policy verdict for a (label, confidence) pair.
pub fn decide_label(label: Label, confidence: f64, p: &TriagePolicy) -> (Verdict, String) {
    let t_rej = p.artifact_reject_min_confidence;
    let t_brain = p.brain_flag_max_confidence;
    if label == Label::Brain {
        return if p.literal_semantics {
            if confidence > t_brain {
                (Verdict::Flag, format!("brain > {t_brain:.2} (literal)"))
            } else {
                (Verdict::Keep, format!("brain <= {t_brain:.2} (literal)"))
            }
        } else if confidence < t_brain {
            (Verdict::Flag, format!("brain < {t_brain:.2}"))
        } else {
            (Verdict::Keep, format!("brain ≥ {t_brain:.2}"))
        };
    }
    if !p.labels_considered_artifact.contains(&label) {
        return (Verdict::Keep, format!("{label} not treated as artifact"));
    }
    if p.literal_semantics {
        if confidence <= t_rej {
            (Verdict::Reject, format!("artifact <= {t_rej:.2} (literal)"))
        } else {
            (Verdict::Flag, format!("artifact > {t_rej:.2} (literal)"))
        }
    } else if confidence >= t_rej {
        (Verdict::Reject, format!("artifact ≥ {t_rej:.2}"))
    } else {
        (Verdict::Flag, format!("artifact < {t_rej:.2}"))
    }
}

pub fn decide(c: &ComponentClassification, p: &TriagePolicy) -> TriageDecision {
    let (verdict, rule_fired) = decide_label(c.label, c.confidence, p);
    TriageDecision {
        component_index: c.component_index,
        verdict,
        rule_fired,
        source: DecisionSource::Policy,
        label: Some(c.label),
        confidence: Some(c.confidence),
        policy_verdict: None,
        note: None,
    }
}

/// Decision for any outcome; unclassified components go to review.
pub fn decide_outcome(o: &ClassifyOutcome, p: &TriagePolicy) -> TriageDecision {
    match o {
        ClassifyOutcome::Classified(c) => decide(c, p),
        ClassifyOutcome::Flagged(f) => TriageDecision {
            component_index: f.component_index,
            verdict: Verdict::Flag,
            rule_fired: "classification unavailable".into(),
            source: DecisionSource::Policy,
            label: None,
            confidence: None,
            policy_verdict: None,
            note: Some(f.error.clone()),
        },
    }
}

pub fn decide_all(outcomes: &[ClassifyOutcome], p: &TriagePolicy) -> Vec<TriageDecision> {
    outcomes.iter().map(|o| decide_outcome(o, p)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub kept: usize,
    pub rejected: usize,
    pub flagged: usize,
}

pub fn count_verdicts(decisions: &[TriageDecision]) -> VerdictCounts {
    let mut c = VerdictCounts::default();
    for d in decisions {
        match d.verdict {
            Verdict::Keep => c.kept += 1,
            Verdict::Reject => c.rejected += 1,
            Verdict::Flag => c.flagged += 1,
        }
    }
    c
}

/// Indices with a reject verdict.
pub fn rejected_set(decisions: &[TriageDecision]) -> BTreeSet<usize> {
    decisions.iter().filter(|d| d.verdict == Verdict::Reject).map(|d| d.component_index).collect()
}
