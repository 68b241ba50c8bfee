//! Dialogue data model: loading and validating real and simulated corpora,
//! the fixed 16-domain registry, and grouping over (provenance, domain).

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum user turns for a real dialogue admitted to evaluation.
pub const MIN_REAL_USER_TURNS: usize = 4;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Chatbot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub text: String,
}

/// Origin of a dialogue: the real corpus or a named simulator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Real,
    Simulator(String),
}

impl Provenance {
    pub fn as_str(&self) -> &str {
        match self {
            Provenance::Real => "real",
            Provenance::Simulator(id) => id,
        }
    }

    pub fn parse(s: &str) -> Provenance {
        if s == "real" {
            Provenance::Real
        } else {
            Provenance::Simulator(s.to_string())
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Ok(Provenance::parse(&s))
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub domain: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub scenario_id: Option<String>,
    pub turns: Vec<Turn>,
    /// Free-form per-dialogue metadata (e.g. guardrail logs from simulation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl Dialogue {
    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::User)
    }

    pub fn user_turn_count(&self) -> usize {
        self.user_turns().count()
    }
}

/// The 16 experimental domains: (canonical key, display name).
pub const DOMAINS: [(&str, &str); 16] = [
    ("computer_hardware", "Computer Hardware"),
    ("travel_planning", "Travel Planning"),
    ("data_science", "Data Science"),
    ("job_application", "Job Application"),
    ("cybersecurity", "Cybersecurity"),
    ("finance", "Finance"),
    ("general_health", "General Health"),
    ("email_writing", "Email Writing"),
    ("mental_health", "Mental Health"),
    ("education_learning", "Education & Learning"),
    ("nutrition", "Nutrition"),
    ("governance_discussion", "Governance Discussion"),
    ("song_poem_writing", "Song or Poem Writing"),
    ("literary_rec_analysis", "Literary Rec. & Analysis"),
    ("branding_brainstorming", "Branding Brainstorming"),
    ("music_rec_analysis", "Music Rec. & Analysis"),
];

/// Fixed registry of the 16 domains. Unknown domains are rejected at load.
pub struct DomainRegistry;

impl DomainRegistry {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        DOMAINS.iter().map(|(k, _)| *k)
    }

    pub fn display_name(key: &str) -> Option<&'static str> {
        DOMAINS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
    }

    /// Resolves a canonical key or a display name to the canonical key.
    pub fn resolve(s: &str) -> Option<&'static str> {
        DOMAINS
            .iter()
            .find(|(k, d)| *k == s || d.eq_ignore_ascii_case(s))
            .map(|(k, _)| *k)
    }

    pub fn contains(s: &str) -> bool {
        Self::resolve(s).is_some()
    }

    pub fn len() -> usize {
        DOMAINS.len()
    }
}

/// Why a record was excluded at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub code: String,
}

#[derive(Debug, Default)]
pub struct DialogueSet {
    pub dialogues: Vec<Dialogue>,
    pub rejections: Vec<Rejection>,
}

/// Grouping key over provenance and optionally domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Provenance,
    ProvenanceDomain,
}

/// Validation policy: real-corpus admission or simulated output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationPolicy {
    RealAdmission,
    Simulated,
}

/// Structural checks; violation codes are the return value, not errors.
pub fn validate_dialogue(d: &Dialogue, policy: ValidationPolicy) -> Vec<String> {
    let mut violations = Vec::new();
    if !DomainRegistry::contains(&d.domain) {
        violations.push("unknown-domain".to_string());
    }
    let user_turns = d.user_turn_count();
    if user_turns == 0 {
        violations.push("no-user-turns".to_string());
    }
    if policy == ValidationPolicy::RealAdmission && user_turns < MIN_REAL_USER_TURNS {
        violations.push("too-few-user-turns".to_string());
    }
    let mut expect = Role::User;
    let mut alternating = true;
    for t in &d.turns {
        if t.role != expect {
            alternating = false;
            break;
        }
        expect = match expect {
            Role::User => Role::Chatbot,
            Role::Chatbot => Role::User,
        };
    }
    if !alternating {
        violations.push("non-alternating-roles".to_string());
    }
    for t in &d.turns {
        if t.role == Role::Chatbot && t.text.is_empty() {
            violations.push("empty-chatbot-turn".to_string());
            break;
        }
    }
    if d.turns.iter().any(|t| t.role == Role::User && t.text.is_empty()) {
        violations.push("empty-user-turn".to_string()); // flagged, tolerated downstream
    }
    violations
}

/// Hard violations that exclude a record from a loaded set; soft flags
/// (empty user turns) are tolerated.
fn load_rejection_code(d: &Dialogue, policy: ValidationPolicy) -> Option<String> {
    let violations = validate_dialogue(d, policy);
    violations.into_iter().find(|v| v != "empty-user-turn")
}

/// Loads line-delimited dialogue records. Schema failures and invariant
/// violations become rejection entries, never silent drops.
pub fn load_dialogues(
    path: &Path,
    expected_provenance: Option<&Provenance>,
) -> Result<DialogueSet, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut set = DialogueSet::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = match serde_json::from_str(&line) {
            Ok(d) => d,
            Err(_) => {
                set.rejections.push(Rejection {
                    id: format!("line-{}", lineno + 1),
                    code: "malformed-record".to_string(),
                });
                continue;
            }
        };
        if !seen.insert(d.id.clone()) {
            set.rejections.push(Rejection {
                id: d.id.clone(),
                code: "duplicate-id".to_string(),
            });
            continue;
        }
        if let Some(expected) = expected_provenance {
            if &d.provenance != expected {
                set.rejections.push(Rejection {
                    id: d.id.clone(),
                    code: "unexpected-provenance".to_string(),
                });
                continue;
            }
        }
        let policy = match d.provenance {
            Provenance::Real => ValidationPolicy::RealAdmission,
            Provenance::Simulator(_) => ValidationPolicy::Simulated,
        };
        if let Some(code) = load_rejection_code(&d, policy) {
            set.rejections.push(Rejection { id: d.id.clone(), code });
            continue;
        }
        set.dialogues.push(d);
    }
    Ok(set)
}

/// Writes dialogues one JSON object per line.
pub fn save_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
        CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        }
    })?);
    for d in dialogues {
        serde_json::to_writer(&mut out, d).expect("dialogue serialization is infallible");
        out.write_all(b"\n").map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    out.flush().map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Emits the rejection report as `<input>.rejects`, one `{id, code}` per line.
pub fn save_rejections(input_path: &Path, rejections: &[Rejection]) -> Result<(), CorpusError> {
    let mut path = input_path.as_os_str().to_owned();
    path.push(".rejects");
    let path = std::path::PathBuf::from(path);
    let mut out = String::new();
    for r in rejections {
        out.push_str(&serde_json::to_string(r).expect("rejection serialization is infallible"));
        out.push('\n');
    }
    std::fs::write(&path, out).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Groups every user-turn text into exactly one group, preserving
/// (dialogue order, turn order) within each group.
pub fn group_user_texts(
    dialogues: &[Dialogue],
    key: GroupKey,
) -> BTreeMap<(Provenance, Option<String>), Vec<String>> {
    let mut groups: BTreeMap<(Provenance, Option<String>), Vec<String>> = BTreeMap::new();
    for d in dialogues {
        let k = match key {
            GroupKey::Provenance => (d.provenance.clone(), None),
            GroupKey::ProvenanceDomain => (d.provenance.clone(), Some(d.domain.clone())),
        };
        let entry = groups.entry(k).or_default();
        for t in d.user_turns() {
            entry.push(t.text.clone());
        }
    }
    groups
}
