use std::collections::BTreeMap;

use super::{DecisionSource, Result, TriageDecision, TriageError, Verdict};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub component_index: usize,
    pub verdict: Verdict,
    pub note: String,
}

/// Parses `component_index, verdict, note` lines. Blank lines and lines
/// starting with `#` are skipped; the note may itself contain commas.
pub fn parse_overrides(text: &str) -> Result<Vec<Override>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TriageError::OverrideParse { line: n + 1, message };
        let mut parts = line.splitn(3, ',');
        let idx = parts.next().unwrap_or("").trim();
        let component_index = idx.parse::<usize>().map_err(|_| err(format!("bad component index {idx:?}")))?;
        let v = parts.next().ok_or_else(|| err("missing verdict".into()))?;
        let verdict = Verdict::parse(v).ok_or_else(|| err(format!("unknown verdict {:?}", v.trim())))?;
        let note = parts.next().unwrap_or("").trim().to_string();
        out.push(Override { component_index, verdict, note });
    }
    Ok(out)
}

/// Replaces policy verdicts with reviewer verdicts. Later lines win when a
/// component appears twice.
pub fn apply_overrides(decisions: &[TriageDecision], overrides: &[Override]) -> Result<Vec<TriageDecision>> {
    let index: BTreeMap<usize, usize> = decisions.iter().enumerate().map(|(i, d)| (d.component_index, i)).collect();
    let mut unknown: Vec<usize> = overrides
        .iter()
        .map(|o| o.component_index)
        .filter(|c| !index.contains_key(c))
        .collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(TriageError::UnknownComponents(unknown));
    }
    let mut out = decisions.to_vec();
    for o in overrides {
        let d = &mut out[index[&o.component_index]];
        if d.source == DecisionSource::Policy {
            d.policy_verdict = Some(d.verdict);
        }
        d.verdict = o.verdict;
        d.source = DecisionSource::Override;
        d.rule_fired = "manual override".into();
        d.note = (!o.note.is_empty()).then(|| o.note.clone());
    }
    Ok(out)
}
