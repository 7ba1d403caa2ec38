//! Corpus statistics over generated captions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon.json");
const DEFAULT_STOPWORDS: &str = include_str!("../assets/stopwords.txt");

static SHIPPED_LEXICON: LazyLock<AttributeLexicon> =
    LazyLock::new(|| AttributeLexicon::from_json(DEFAULT_LEXICON).expect("shipped lexicon parses"));

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("average token length of an empty caption list")]
    EmptyCorpus,
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    #[default]
    Whitespace,
}

impl TokenMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenMode::Whitespace => "whitespace",
        }
    }
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "whitespace" => Ok(TokenMode::Whitespace),
            other => Err(format!("unknown token mode {other:?}")),
        }
    }
}

pub fn token_count(text: &str, mode: TokenMode) -> usize {
    match mode {
        TokenMode::Whitespace => text.split_whitespace().count(),
    }
}

pub fn average_token_length<S: AsRef<str>>(captions: &[S], mode: TokenMode) -> Result<f64, AnalysisError> {
    if captions.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let total: usize = captions.iter().map(|c| token_count(c.as_ref(), mode)).sum();
    Ok(total as f64 / captions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    SpatialRelation,
    Hoi,
    FineGrained,
    Ocr,
    Emotion,
    Location,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::SpatialRelation,
        Attribute::Hoi,
        Attribute::FineGrained,
        Attribute::Ocr,
        Attribute::Emotion,
        Attribute::Location,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::SpatialRelation => "spatial_relation",
            Attribute::Hoi => "hoi",
            Attribute::FineGrained => "fine_grained",
            Attribute::Ocr => "ocr",
            Attribute::Emotion => "emotion",
            Attribute::Location => "location",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Indicator phrases per attribute family. Phrases are stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeLexicon {
    phrases: BTreeMap<Attribute, Vec<String>>,
}

impl AttributeLexicon {
    pub fn shipped() -> &'static AttributeLexicon {
        &SHIPPED_LEXICON
    }

    pub fn new(phrases: BTreeMap<Attribute, Vec<String>>) -> Result<Self, AnalysisError> {
        for (attr, list) in &phrases {
            for p in list {
                if p.trim().is_empty() {
                    return Err(AnalysisError::Lexicon(format!("{attr}: empty phrase")));
                }
                if p.to_lowercase() != *p {
                    return Err(AnalysisError::Lexicon(format!("{attr}: phrase {p:?} is not lowercase")));
                }
            }
        }
        Ok(AttributeLexicon { phrases })
    }

    pub fn from_json(text: &str) -> Result<Self, AnalysisError> {
        let phrases: BTreeMap<Attribute, Vec<String>> =
            serde_json::from_str(text).map_err(|e| AnalysisError::Lexicon(e.to_string()))?;
        AttributeLexicon::new(phrases)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        AttributeLexicon::from_json(&text)
    }

    pub fn phrases(&self, attr: Attribute) -> &[String] {
        self.phrases.get(&attr).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add(&mut self, attr: Attribute, phrase: &str) -> Result<(), AnalysisError> {
        let mut next = self.phrases.clone();
        next.entry(attr).or_default().push(phrase.to_string());
        *self = AttributeLexicon::new(next)?;
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// True when `phrase` occurs in `haystack` with no word character on
/// either side. Both arguments must already be lowercase.
fn contains_at_boundary(haystack: &str, phrase: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let before = haystack[..start].chars().next_back();
        let after = haystack[end..].chars().next();
        if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
            return true;
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

pub fn attribute_occurrence(caption: &str, lexicon: &AttributeLexicon) -> BTreeMap<Attribute, bool> {
    let lowered = caption.to_lowercase();
    Attribute::ALL
        .iter()
        .map(|&a| {
            let hit = lexicon.phrases(a).iter().any(|p| contains_at_boundary(&lowered, p));
            (a, hit)
        })
        .collect()
}

/// Lowercases a token and trims punctuation from both ends.
pub fn normalize_word(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn word_frequencies<S: AsRef<str>>(captions: &[S], stopwords: &BTreeSet<String>) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for c in captions {
        for token in c.as_ref().split_whitespace() {
            let w = normalize_word(token);
            if w.is_empty() || stopwords.contains(&w) {
                continue;
            }
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut table: Vec<(String, usize)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    table
}

pub fn default_stopwords() -> BTreeSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub token_mode: TokenMode,
    pub captions: usize,
    pub average_token_length: Option<f64>,
    pub attribute_rates: BTreeMap<Attribute, f64>,
    pub words: Vec<(String, usize)>,
}

pub fn analyze_corpus<S: AsRef<str>>(
    captions: &[S],
    lexicon: &AttributeLexicon,
    stopwords: &BTreeSet<String>,
    mode: TokenMode,
) -> CorpusReport {
    let mut hits: BTreeMap<Attribute, usize> = Attribute::ALL.iter().map(|&a| (a, 0)).collect();
    for c in captions {
        for (a, on) in attribute_occurrence(c.as_ref(), lexicon) {
            if on {
                *hits.get_mut(&a).unwrap() += 1;
            }
        }
    }
    let n = captions.len();
    let attribute_rates = hits
        .into_iter()
        .map(|(a, h)| (a, if n == 0 { 0.0 } else { h as f64 / n as f64 }))
        .collect();
    CorpusReport {
        token_mode: mode,
        captions: n,
        average_token_length: average_token_length(captions, mode).ok(),
        attribute_rates,
        words: word_frequencies(captions, stopwords),
    }
}

impl CorpusReport {
    pub fn stats_rows(&self) -> Vec<(String, String)> {
        let atl = self
            .average_token_length
            .map(|v| format!("{v:.4}"))
            .unwrap_or_default();
        vec![
            ("captions".into(), self.captions.to_string()),
            ("token_mode".into(), self.token_mode.to_string()),
            ("average_token_length".into(), atl),
            ("distinct_words".into(), self.words.len().to_string()),
        ]
    }

    /// Writes `stats.csv`, `attributes.csv` and `words.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), AnalysisError> {
        std::fs::create_dir_all(dir).map_err(|source| AnalysisError::Io {
            path: dir.to_path_buf(),
            source,
        })?;

        let mut w = csv::Writer::from_path(dir.join("stats.csv"))?;
        w.write_record(["metric", "value"])?;
        for (k, v) in self.stats_rows() {
            w.write_record([k, v])?;
        }
        w.flush().map_err(csv::Error::from)?;

        let mut w = csv::Writer::from_path(dir.join("attributes.csv"))?;
        w.write_record(["attribute", "rate"])?;
        for (a, r) in &self.attribute_rates {
            w.write_record([a.as_str().to_string(), format!("{r:.4}")])?;
        }
        w.flush().map_err(csv::Error::from)?;

        let mut w = csv::Writer::from_path(dir.join("words.csv"))?;
        w.write_record(["word", "count"])?;
        for (word, c) in &self.words {
            w.write_record([word.clone(), c.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
