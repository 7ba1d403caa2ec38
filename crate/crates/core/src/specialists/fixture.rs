use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SpecialistError, SpecialistKind, SpecialistRequest};
use crate::model::BoundingBox;

/// Fingerprint of a canned response.
///
/// `prompt_contains` narrows an entry to requests whose prompt contains the
/// given text; entries without it answer any prompt. When several entries
/// share a kind, image and box, the first one whose `prompt_contains`
/// matches wins, then the first one without a prompt condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixtureKey {
    pub kind: SpecialistKind,
    pub image_id: u64,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
}

impl fmt::Display for FixtureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} image {}", self.kind, self.image_id)?;
        if let Some(b) = self.bbox {
            write!(f, " box {b}")?;
        }
        if let Some(p) = &self.prompt_contains {
            write!(f, " prompt~{p:?}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(flatten)]
    pub key: FixtureKey,
    pub response: serde_json::Value,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FixtureFile {
    entries: Vec<FixtureEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading fixtures {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing fixtures {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

type Slot = (SpecialistKind, u64, Option<BoundingBox>);

/// Immutable table of canned specialist responses.
#[derive(Debug, Default, Clone)]
pub struct FixtureStore {
    entries: Vec<FixtureEntry>,
    slots: HashMap<Slot, Vec<usize>>,
}

impl FixtureStore {
    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        let mut slots: HashMap<Slot, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            slots
                .entry((e.key.kind, e.key.image_id, e.key.bbox))
                .or_default()
                .push(i);
        }
        FixtureStore { entries, slots }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: FixtureFile = serde_json::from_str(text)?;
        Ok(FixtureStore::new(file.entries))
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        FixtureStore::from_json(&text).map_err(|source| FixtureError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        let file = FixtureFile {
            entries: self.entries.clone(),
        };
        serde_json::to_string_pretty(&file).expect("fixture entries serialize")
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A copy without any entry of `kind`; every call to it then misses.
    pub fn without_kind(&self, kind: SpecialistKind) -> FixtureStore {
        FixtureStore::new(
            self.entries
                .iter()
                .filter(|e| e.key.kind != kind)
                .cloned()
                .collect(),
        )
    }

    pub fn lookup(
        &self,
        kind: SpecialistKind,
        request: &SpecialistRequest,
    ) -> Result<&serde_json::Value, SpecialistError> {
        let miss = || SpecialistError::FixtureMiss {
            kind,
            key: FixtureKey {
                kind,
                image_id: request.image_id,
                bbox: request.bbox,
                prompt_contains: None,
            }
            .to_string(),
        };
        let candidates = self
            .slots
            .get(&(kind, request.image_id, request.bbox))
            .ok_or_else(miss)?;
        let prompt = request.prompt.as_deref().unwrap_or("");
        let entries = candidates.iter().map(|&i| &self.entries[i]);
        entries
            .clone()
            .find(|e| matches!(&e.key.prompt_contains, Some(p) if prompt.contains(p.as_str())))
            .or_else(|| entries.clone().find(|e| e.key.prompt_contains.is_none()))
            .map(|e| &e.response)
            .ok_or_else(miss)
    }
}
