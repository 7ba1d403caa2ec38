use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use serde::Deserialize;

use super::SpecialistKind;

const DEFAULT_ROUTES: &str = include_str!("../../assets/routing.json");

static DEFAULT_TABLE: LazyLock<RoutingTable> =
    LazyLock::new(|| RoutingTable::from_json(DEFAULT_ROUTES).expect("shipped routing table parses"));

#[derive(Deserialize)]
struct RoutingFile {
    routes: BTreeMap<SpecialistKind, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("routing table: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("routing table: {0}")]
    Io(#[from] std::io::Error),
    #[error("routing table: {kind} is not a fine-grained specialist")]
    NotFineGrained { kind: SpecialistKind },
    #[error("routing table: category {category:?} routed to both {first} and {second}")]
    Conflict {
        category: String,
        first: SpecialistKind,
        second: SpecialistKind,
    },
}

/// Maps coarse detector categories to fine-grained recognizers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    by_category: BTreeMap<String, SpecialistKind>,
}

impl RoutingTable {
    /// The table shipped in `assets/routing.json`.
    pub fn shipped() -> &'static RoutingTable {
        &DEFAULT_TABLE
    }

    pub fn from_json(text: &str) -> Result<Self, RoutingError> {
        let file: RoutingFile = serde_json::from_str(text)?;
        let mut by_category = BTreeMap::new();
        for (kind, categories) in file.routes {
            if !kind.is_fine_grained() {
                return Err(RoutingError::NotFineGrained { kind });
            }
            for c in categories {
                let c = c.trim().to_lowercase();
                if let Some(first) = by_category.insert(c.clone(), kind) {
                    if first != kind {
                        return Err(RoutingError::Conflict {
                            category: c,
                            first,
                            second: kind,
                        });
                    }
                }
            }
        }
        Ok(RoutingTable { by_category })
    }

    pub fn load(path: &Path) -> Result<Self, RoutingError> {
        RoutingTable::from_json(&std::fs::read_to_string(path)?)
    }

    /// Case-insensitive lookup of a coarse category.
    pub fn route(&self, coarse_category: &str) -> Option<SpecialistKind> {
        self.by_category
            .get(&coarse_category.trim().to_lowercase())
            .copied()
    }
}

/// Fine-grained recognizer for a coarse category under the shipped table.
pub fn route_fine_grained(coarse_category: &str) -> Option<SpecialistKind> {
    RoutingTable::shipped().route(coarse_category)
}

/// Emotion is only asked for person regions.
pub fn gate_emotion(category: &str) -> bool {
    category.eq_ignore_ascii_case("person")
}
