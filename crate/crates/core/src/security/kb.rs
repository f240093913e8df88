//! Knowledge base of attack signatures and handled findings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::detect::{Finding, FindingKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl FromStr for FindingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "FLOOD" => FindingKind::Flood,
            "FORGE" => FindingKind::Forge,
            "PRIV_ESC" => FindingKind::PrivEsc,
            "MALICIOUS_PAYLOAD" => FindingKind::MaliciousPayload,
            "TAMPER" => FindingKind::Tamper,
            "CORRUPTION" => FindingKind::Corruption,
            "ANOMALY" => FindingKind::Anomaly,
            other => return Err(format!("unknown kind {other:?}")),
        })
    }
}

/// `kind:feature=value,...`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub kind: FindingKind,
    pub features: BTreeMap<String, String>,
}

impl Signature {
    pub fn new(kind: FindingKind, features: &[(&str, &str)]) -> Self {
        Self {
            kind,
            features: features.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// The target-independent pattern a finding exhibits.
    pub fn of(finding: &Finding) -> Self {
        let f: &[(&str, &str)] = match finding.kind {
            FindingKind::Flood => &[("rate_exceeded", "true")],
            FindingKind::Forge => &[("tag_failure", "true")],
            FindingKind::PrivEsc => &[("denials", "repeated")],
            FindingKind::MaliciousPayload => &[("payload_flag", "true")],
            FindingKind::Tamper => &[("residual", "biased")],
            FindingKind::Corruption => &[("state", "diverged")],
            FindingKind::Anomaly => &[("inventory", "unknown_node")],
        };
        Signature::new(finding.kind, f)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.kind)?;
        for (i, (k, v)) in self.features.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Signature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').ok_or("missing ':'")?;
        let kind: FindingKind = kind.trim().parse()?;
        let mut features = BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("feature {part:?} lacks '='"))?;
            features.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Signature { kind, features })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    signatures: BTreeSet<Signature>,
    history: Vec<Finding>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signatures(&self) -> &BTreeSet<Signature> {
        &self.signatures
    }

    pub fn history(&self) -> &[Finding] {
        &self.history
    }

    /// Number of handled findings recorded.
    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn knows(&self, kind: FindingKind) -> bool {
        self.signatures.iter().any(|s| s.kind == kind)
    }

    pub fn learn(&mut self, finding: &Finding) {
        self.signatures.insert(Signature::of(finding));
        self.history.push(finding.clone());
    }

    /// Loads a signature file at runtime; blank lines and `#` comments are skipped.
    pub fn load_signatures(&mut self, text: &str) -> Result<usize, SignatureError> {
        let mut parsed = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let sig = line
                .parse::<Signature>()
                .map_err(|msg| SignatureError::Parse { line: i + 1, msg })?;
            parsed.push(sig);
        }
        let before = self.signatures.len();
        self.signatures.extend(parsed);
        Ok(self.signatures.len() - before)
    }

    pub fn signature_file(&self) -> String {
        self.signatures.iter().map(|s| format!("{s}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;
    use crate::security::detect::{FindingState, FindingTarget};
    use crate::topology::NodeId;

    fn flood(id: u64, src: u32) -> Finding {
        Finding {
            id,
            kind: FindingKind::Flood,
            evidence: String::new(),
            at: SimTime(0),
            target: FindingTarget::Pair(NodeId(src), NodeId(9)),
            state: FindingState::Handled,
        }
    }

    #[test]
    fn duplicate_signature_keeps_set() {
        let mut kb = KnowledgeBase::new();
        kb.learn(&flood(1, 1));
        kb.learn(&flood(2, 2));
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.signatures().len(), 1);
    }

    #[test]
    fn signature_lines_round_trip() {
        let mut kb = KnowledgeBase::new();
        let n = kb
            .load_signatures("# trojans\nMALICIOUS_PAYLOAD:payload_flag=true\nFLOOD:rate_exceeded=true, window=50\n")
            .unwrap();
        assert_eq!(n, 2);
        assert!(kb.knows(FindingKind::MaliciousPayload));
        let text = kb.signature_file();
        let mut again = KnowledgeBase::new();
        again.load_signatures(&text).unwrap();
        assert_eq!(again.signatures(), kb.signatures());
        assert!(matches!(
            kb.load_signatures("BOGUS:x=1"),
            Err(SignatureError::Parse { line: 1, .. })
        ));
    }
}
