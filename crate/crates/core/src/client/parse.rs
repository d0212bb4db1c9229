//! Reply parsing. Every function here is total over arbitrary text.

use serde_json::Value;

use super::Label;

/// Fields recovered from one reply object.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub label: Label,
    pub confidence: f64,
    pub reasoning: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unparseable reply: {message}")]
pub struct ParseError {
    pub message: String,
    pub raw: String,
}

impl ParseError {
    fn new(message: impl Into<String>, raw: &str) -> Self {
        Self { message: message.into(), raw: raw.to_string() }
    }
}

/// First well-formed JSON object or array embedded in `raw`, if any.
pub fn extract_first_json(raw: &str) -> Option<Value> {
    for (pos, ch) in raw.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        let mut it = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        if let Some(Ok(v)) = it.next() {
            if v.is_object() || v.is_array() {
                return Some(v);
            }
        }
    }
    None
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse::<f64>().ok().map(|x| {
            if s.trim().ends_with('%') {
                x / 100.0
            } else {
                x
            }
        }),
        _ => None,
    }
}

/// Validates one reply object.
pub fn parse_object(v: &Value, raw: &str) -> Result<ParsedReply, ParseError> {
    let obj = v.as_object().ok_or_else(|| ParseError::new("reply item is not an object", raw))?;
    let label_raw = obj
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::new("missing string field \"label\"", raw))?;
    let label = Label::normalize(label_raw).ok_or_else(|| ParseError::new(format!("unknown label {label_raw:?}"), raw))?;
    let conf = obj
        .get("confidence")
        .and_then(number)
        .ok_or_else(|| ParseError::new("missing numeric field \"confidence\"", raw))?;
    if !conf.is_finite() {
        return Err(ParseError::new("confidence is not finite", raw));
    }
    let reasoning = obj
        .get("reason")
        .or_else(|| obj.get("reasoning"))
        .and_then(Value::as_str)
        .map(str::trim)
        .unwrap_or("");
    if reasoning.is_empty() {
        return Err(ParseError::new("missing or empty \"reason\"", raw));
    }
    let mut warnings = Vec::new();
    let confidence = conf.clamp(0.0, 1.0);
    if confidence != conf {
        log::warn!("confidence {conf} clamped to {confidence}");
        warnings.push(format!("confidence {conf} clamped to [0, 1]"));
    }
    Ok(ParsedReply { label, confidence, reasoning: reasoning.to_string(), warnings })
}

/// Single-component reply: the first object found (or the first element of
/// the first array).
pub fn parse_response(raw: &str) -> Result<ParsedReply, ParseError> {
    match extract_first_json(raw) {
        Some(Value::Array(items)) => match items.first() {
            Some(first) => parse_object(first, raw),
            None => Err(ParseError::new("empty array", raw)),
        },
        Some(v) => parse_object(&v, raw),
        None => Err(ParseError::new("no JSON object found", raw)),
    }
}

/// Splits a batch reply into `n` per-component results, positionally.
/// Missing items become parse errors; extra items are ignored.
pub fn parse_batch_response(raw: &str, n: usize) -> Vec<Result<ParsedReply, ParseError>> {
    let items: Vec<Value> = match extract_first_json(raw) {
        Some(Value::Array(items)) => items,
        Some(Value::Object(obj)) => {
            let nested = ["components", "results", "classifications"]
                .iter()
                .find_map(|k| obj.get(*k).and_then(Value::as_array).cloned());
            nested.unwrap_or_else(|| vec![Value::Object(obj)])
        }
        _ => {
            return (0..n).map(|_| Err(ParseError::new("no JSON object found", raw))).collect();
        }
    };
    (0..n)
        .map(|i| match items.get(i) {
            Some(v) => parse_object(v, raw),
            None => Err(ParseError::new(format!("reply has {} items, expected {n}", items.len()), raw)),
        })
        .collect()
}

/// Whitespace-separated word count.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_object() {
        let r = parse_response(r#"{"label":"muscle","confidence":0.93,"reason":"broadband high frequency"}"#).unwrap();
        assert_eq!((r.label, r.confidence), (Label::Muscle, 0.93));
    }

    #[test]
    fn wrapped_in_prose_and_fences() {
        let raw = "Sure! Here it is:\n```json\n{\"label\": \"Channel Noise\", \"confidence\": \"0.7\", \"reason\": \"one electrode\"}\n```";
        let r = parse_response(raw).unwrap();
        assert_eq!((r.label, r.confidence), (Label::ChannelNoise, 0.7));
    }

    #[test]
    fn prose_only_is_error() {
        let e = parse_response("This looks like a blink to me.").unwrap_err();
        assert_eq!(e.raw, "This looks like a blink to me.");
    }

    #[test]
    fn clamps_confidence() {
        let r = parse_response(r#"{"label":"eye","confidence":1.7,"reason":"x"}"#).unwrap();
        assert_eq!(r.confidence, 1.0);
        assert_eq!(r.warnings.len(), 1);
        let r = parse_response(r#"{"label":"eye","confidence":-3,"reason":"x"}"#).unwrap();
        assert_eq!(r.confidence, 0.0);
    }

    #[test]
    fn unknown_label_and_missing_reason() {
        assert!(parse_response(r#"{"label":"spleen","confidence":0.5,"reason":"x"}"#).is_err());
        assert!(parse_response(r#"{"label":"eye","confidence":0.5}"#).is_err());
        assert!(parse_response(r#"{"label":"eye","confidence":0.5,"reason":"  "}"#).is_err());
    }

    #[test]
    fn batch_positional() {
        let raw = r#"[{"label":"eye","confidence":0.9,"reason":"a"},{"label":"bogus","confidence":0.9,"reason":"b"}]"#;
        let out = parse_batch_response(raw, 3);
        assert_eq!(out.len(), 3);
        assert!(out[0].is_ok());
        assert!(out[1].is_err());
        assert!(out[2].is_err());
    }

    #[test]
    fn batch_nested_key() {
        let raw = r#"{"components":[{"label":"heart","confidence":0.9,"reason":"qrs"}]}"#;
        assert_eq!(parse_batch_response(raw, 1)[0].as_ref().unwrap().label, Label::Heart);
    }

    #[test]
    fn skips_broken_brace() {
        let raw = r#"{oops {"label":"brain","confidence":0.6,"reason":"alpha"}"#;
        assert_eq!(parse_response(raw).unwrap().label, Label::Brain);
    }
}
