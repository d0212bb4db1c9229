use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The seven component classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Brain,
    Eye,
    Muscle,
    Heart,
    LineNoise,
    ChannelNoise,
    OtherArtifact,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::Brain,
        Label::Eye,
        Label::Muscle,
        Label::Heart,
        Label::LineNoise,
        Label::ChannelNoise,
        Label::OtherArtifact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Brain => "brain",
            Label::Eye => "eye",
            Label::Muscle => "muscle",
            Label::Heart => "heart",
            Label::LineNoise => "line_noise",
            Label::ChannelNoise => "channel_noise",
            Label::OtherArtifact => "other_artifact",
        }
    }

    pub fn is_artifact(self) -> bool {
        self != Label::Brain
    }

    /// Case, separator and common-synonym tolerant lookup.
    pub fn normalize(raw: &str) -> Option<Label> {
        let mut key = String::with_capacity(raw.len());
        for ch in raw.trim().chars() {
            let ch = ch.to_ascii_lowercase();
            if ch == '-' || ch == ' ' || ch == '_' {
                if !key.is_empty() && !key.ends_with('_') {
                    key.push('_');
                }
            } else {
                key.push(ch);
            }
        }
        let key = key.trim_end_matches('_');
        let label = match key {
            "brain" | "neural" | "cortical" => Label::Brain,
            "eye" | "ocular" | "eog" | "blink" => Label::Eye,
            "muscle" | "emg" => Label::Muscle,
            "heart" | "cardiac" | "ecg" | "ekg" => Label::Heart,
            "line_noise" | "line" | "linenoise" => Label::LineNoise,
            "channel_noise" | "channel" | "channelnoise" => Label::ChannelNoise,
            "other_artifact" | "other" | "other_noise" | "otherartifact" => Label::OtherArtifact,
            _ => return None,
        };
        Some(label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label {:?}", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::normalize(s).ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases() {
        for s in ["line-noise", "line noise", "Line_Noise", " LINE  NOISE "] {
            assert_eq!(Label::normalize(s), Some(Label::LineNoise), "{s}");
        }
        assert_eq!(Label::normalize("Channel Noise"), Some(Label::ChannelNoise));
        assert_eq!(Label::normalize("other-artifact"), Some(Label::OtherArtifact));
        assert_eq!(Label::normalize("banana"), None);
        assert_eq!(Label::normalize(""), None);
    }

    #[test]
    fn canonical_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            let j = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<Label>(&j).unwrap(), l);
        }
    }
}
