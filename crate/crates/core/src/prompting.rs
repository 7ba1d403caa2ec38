//! Prompt templates and the assembly of region and image prompts.
//!
//! Templates are text assets under `assets/prompts/{id}.{version}.txt`,
//! listed in `assets/prompts/manifest.json` with their placeholders and a
//! SHA-256 of the body. A placeholder is `{name}` with `name` made of ASCII
//! letters, digits and underscores; any other brace is literal text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::iou;
use crate::model::{
    BoundingBox, Detection, ImageRef, ObjectAttributes, Relation3D, RelationAttributes,
};

pub const REFERENCE: &str = "reference";
pub const IMAGE_REFERENCE: &str = "image_reference";
pub const SUBCLASS: &str = "subclass";
pub const RELATION_3D: &str = "relation_3d";
pub const REGION_CAPTION: &str = "region_caption";
pub const IMAGE_CAPTION: &str = "image_caption";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("unresolved placeholder {{{0}}}")]
    Unresolved(String),
    #[error("binding {0} does not match any placeholder")]
    UnknownBinding(String),
    #[error("value for {0} contains a placeholder token")]
    PlaceholderInValue(String),
    #[error("empty value for {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptAssemblyError {
    #[error("region has no reference caption")]
    MissingReferenceCaption,
    #[error("nothing to compose: no regions and no reference caption")]
    NothingToCompose,
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad template manifest: {0}")]
    Manifest(String),
    #[error("template {id}: checksum mismatch (manifest {expected}, body {actual})")]
    Checksum {
        id: String,
        expected: String,
        actual: String,
    },
    #[error("template {id}: placeholder {{{name}}} is not declared")]
    Undeclared { id: String, name: String },
    #[error("template {0} not found")]
    Missing(String),
}

/// Iterates over `(start, end, name)` for every placeholder token in `text`.
fn placeholders(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    std::iter::from_fn(move || {
        while pos < bytes.len() {
            if bytes[pos] == b'{' {
                let start = pos;
                let mut end = start + 1;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                if end > start + 1 && end < bytes.len() && bytes[end] == b'}' {
                    pos = end + 1;
                    return Some((start, end + 1, &text[start + 1..end]));
                }
            }
            pos += 1;
        }
        None
    })
}

pub fn has_placeholder(text: &str) -> bool {
    placeholders(text).next().is_some()
}

pub fn sha256_hex(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    version: String,
    body: String,
    placeholders: Vec<String>,
    checksum: String,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        version: impl Into<String>,
        body: impl Into<String>,
        declared: &[&str],
    ) -> Result<Self, TemplateError> {
        let id = id.into();
        let body = body.into();
        let declared: Vec<String> = declared.iter().map(|s| s.to_string()).collect();
        for (_, _, name) in placeholders(&body) {
            if !declared.iter().any(|d| d == name) {
                return Err(TemplateError::Undeclared {
                    id,
                    name: name.to_string(),
                });
            }
        }
        let checksum = sha256_hex(&body);
        Ok(PromptTemplate {
            id,
            version: version.into(),
            body,
            placeholders: declared,
            checksum,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &[String] {
        &self.placeholders
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }
}

/// Placeholder values. Values may not themselves contain placeholder tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) -> Result<&mut Self, RenderError> {
        let value = value.into();
        if has_placeholder(&value) {
            return Err(RenderError::PlaceholderInValue(name.to_string()));
        }
        self.0.insert(name.to_string(), value);
        Ok(self)
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Result<Self, RenderError> {
        self.set(name, value)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

/// Single-pass substitution: substituted values are never rescanned.
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<String, RenderError> {
    let body = template.body();
    let mut out = String::with_capacity(body.len());
    let mut used = BTreeSet::new();
    let mut last = 0;
    for (start, end, name) in placeholders(body) {
        let value = bindings
            .get(name)
            .ok_or_else(|| RenderError::Unresolved(name.to_string()))?;
        out.push_str(&body[last..start]);
        out.push_str(value);
        used.insert(name);
        last = end;
    }
    out.push_str(&body[last..]);
    if let Some(unknown) = bindings.0.keys().find(|k| !used.contains(k.as_str())) {
        return Err(RenderError::UnknownBinding(unknown.clone()));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    version: String,
    file: String,
    placeholders: Vec<String>,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    templates: Vec<ManifestEntry>,
}

/// A checked collection of templates, keyed by id.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

const BUILTIN_MANIFEST: &str = include_str!("../assets/prompts/manifest.json");
const BUILTIN_FILES: &[(&str, &str)] = &[
    ("reference.v1.txt", include_str!("../assets/prompts/reference.v1.txt")),
    ("image_reference.v1.txt", include_str!("../assets/prompts/image_reference.v1.txt")),
    ("subclass.v1.txt", include_str!("../assets/prompts/subclass.v1.txt")),
    ("relation_3d.v1.txt", include_str!("../assets/prompts/relation_3d.v1.txt")),
    ("region_caption.v1.txt", include_str!("../assets/prompts/region_caption.v1.txt")),
    ("image_caption.v1.txt", include_str!("../assets/prompts/image_caption.v1.txt")),
];

static BUILTIN: LazyLock<TemplateSet> = LazyLock::new(|| {
    TemplateSet::from_manifest(BUILTIN_MANIFEST, |file| {
        BUILTIN_FILES
            .iter()
            .find(|(name, _)| *name == file)
            .map(|(_, body)| body.to_string())
            .ok_or_else(|| TemplateError::Missing(file.to_string()))
    })
    .expect("builtin prompt assets are consistent")
});

impl TemplateSet {
    /// The templates compiled into the crate.
    pub fn builtin() -> &'static TemplateSet {
        &BUILTIN
    }

    /// Loads and verifies a template directory containing `manifest.json`.
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| TemplateError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let manifest = read(&dir.join("manifest.json"))?;
        TemplateSet::from_manifest(&manifest, |file| read(&dir.join(file)))
    }

    fn from_manifest(
        manifest: &str,
        mut load: impl FnMut(&str) -> Result<String, TemplateError>,
    ) -> Result<TemplateSet, TemplateError> {
        let manifest: Manifest =
            serde_json::from_str(manifest).map_err(|e| TemplateError::Manifest(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for entry in manifest.templates {
            let body = load(&entry.file)?;
            let declared: Vec<&str> = entry.placeholders.iter().map(String::as_str).collect();
            let t = PromptTemplate::new(&entry.id, &entry.version, body, &declared)?;
            if t.checksum() != entry.sha256 {
                return Err(TemplateError::Checksum {
                    id: entry.id,
                    expected: entry.sha256,
                    actual: t.checksum().to_string(),
                });
            }
            templates.insert(entry.id, t);
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(id)
            .ok_or_else(|| TemplateError::Missing(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    fn builtin_get(&self, id: &str) -> &PromptTemplate {
        // ids used by the builders are checked when the set is constructed
        self.templates
            .get(id)
            .unwrap_or_else(|| panic!("template set lacks {id}"))
    }
}

/// Braces in free text are swapped for parentheses so that no model output
/// can masquerade as a placeholder.
pub fn sanitize(text: &str) -> String {
    text.replace('{', "(").replace('}', ")")
}

fn non_empty(value: &str, what: &'static str) -> Result<String, RenderError> {
    if value.trim().is_empty() {
        Err(RenderError::EmptyInput(what))
    } else {
        Ok(sanitize(value))
    }
}

/// Prompts the region captioner for a short reference caption of a crop.
pub fn render_reference_prompt(category: &str) -> Result<String, RenderError> {
    let t = TemplateSet::builtin().builtin_get(REFERENCE);
    render(t, &Bindings::new().with("category_name", non_empty(category, "category_name")?)?)
}

/// Prompts the captioner for a caption of the whole frame.
pub fn render_image_reference_prompt() -> String {
    TemplateSet::builtin().builtin_get(IMAGE_REFERENCE).body().to_string()
}

/// Clause telling the captioner to use a fine-grained label as the subclass
/// of the detector's coarse category.
pub fn render_subclass_clause(cat_name: &str, fine_label: &str) -> Result<String, RenderError> {
    let t = TemplateSet::builtin().builtin_get(SUBCLASS);
    let b = Bindings::new()
        .with("cat_name", non_empty(cat_name, "cat_name")?)?
        .with("animal_name", non_empty(fine_label, "animal_name")?)?;
    render(t, &b)
}

pub fn render_3d_relation_sentence(
    category_0: &str,
    bbox_0: &BoundingBox,
    relation: Relation3D,
    category_1: &str,
    bbox_1: &BoundingBox,
) -> String {
    let t = TemplateSet::builtin().builtin_get(RELATION_3D);
    let b = Bindings::new()
        .with("category_0", sanitize(category_0))
        .and_then(|b| b.with("bbox_0", bbox_0.to_string()))
        .and_then(|b| b.with("3d_relation", relation.phrase()))
        .and_then(|b| b.with("category_1", sanitize(category_1)))
        .and_then(|b| b.with("bbox_1", bbox_1.to_string()))
        .expect("sanitized values carry no placeholders");
    render(t, &b).expect("bindings match the relation template")
}

/// Assembles the region-captioning prompt.
///
/// Section order is fixed: preamble, reference caption, size, depth,
/// emotion, OCR text, subclass clause, closing instruction. Optional sections
/// are left out when the attribute is absent.
pub fn build_region_prompt(attrs: &ObjectAttributes) -> Result<String, PromptAssemblyError> {
    let reference = attrs
        .reference_caption
        .as_deref()
        .filter(|c| !c.trim().is_empty())
        .ok_or(PromptAssemblyError::MissingReferenceCaption)?;

    let mut lines = Vec::new();
    lines.push(format!(
        "- size: {}, covering {:.2}% of the image",
        attrs.size_bucket.as_str(),
        attrs.area_fraction * 100.0
    ));
    if let Some(d) = attrs.mean_depth {
        lines.push(format!(
            "- mean relative depth: {d:.3} (smaller values are closer to the camera)"
        ));
    }
    if let Some(e) = &attrs.emotion {
        lines.push(format!("- the person's emotion appears to be {}", sanitize(e)));
    }
    for item in &attrs.ocr_items {
        lines.push(format!("- the region contains the text '{}'", sanitize(&item.text)));
    }
    if let Some(fg) = &attrs.fine_grained {
        lines.push(format!(
            "- {}",
            render_subclass_clause(&attrs.detection.category, &fg.label)?
        ));
    }
    let mut block = String::from("Attributes:\n");
    for l in &lines {
        block.push_str(l);
        block.push('\n');
    }

    let t = TemplateSet::builtin().builtin_get(REGION_CAPTION);
    let b = Bindings::new()
        .with("reference_caption", sanitize(reference.trim()))?
        .with("attribute_block", block)?;
    Ok(render(t, &b)?)
}

/// Everything the image-caption prompt is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct ImagePromptInput<'a> {
    pub image: &'a ImageRef,
    /// Merged detections; relation indices point into this list.
    pub detections: &'a [Detection],
    /// One caption per detection, same order.
    pub region_captions: &'a [String],
    pub relations: &'a RelationAttributes,
    pub reference_caption: Option<&'a str>,
}

fn hoi_object_category<'a>(object_box: &BoundingBox, detections: &'a [Detection]) -> &'a str {
    detections
        .iter()
        .map(|d| (iou(&d.bbox, object_box), d))
        .filter(|(v, _)| *v > 0.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, d)| d.category.as_str())
        .unwrap_or("object")
}

/// Assembles the final image-caption prompt.
///
/// Sections, in order: image reference caption, region descriptions, object
/// counts, interactions, absolute locations, spatial relations (2D then 3D).
/// The template around them explains the box format and asks the model to
/// merge overlapping regions.
pub fn build_image_prompt(input: &ImagePromptInput<'_>) -> Result<String, PromptAssemblyError> {
    let reference = input.reference_caption.filter(|c| !c.trim().is_empty());
    if input.detections.is_empty() && reference.is_none() {
        return Err(PromptAssemblyError::NothingToCompose);
    }
    let dets = input.detections;
    let rel = input.relations;
    let mut s = String::new();

    if let Some(r) = reference {
        let _ = writeln!(s, "Image reference caption: {}", sanitize(r.trim()));
    }
    if !dets.is_empty() {
        s.push_str("Region descriptions:\n");
        for (d, caption) in dets.iter().zip(input.region_captions) {
            let _ = writeln!(s, "- region {}: {}", d.bbox, sanitize(caption.trim()));
        }
    }
    s.push_str("Object counts:\n");
    if rel.counts.is_empty() {
        s.push_str("- no objects detected\n");
    }
    for (category, n) in &rel.counts {
        let _ = writeln!(s, "- {n} {}", sanitize(category));
    }
    if !rel.hoi.is_empty() {
        s.push_str("Interactions:\n");
        for t in &rel.hoi {
            let _ = writeln!(
                s,
                "- the person in {} is {} the {} in {}",
                t.person_box,
                sanitize(&t.verb),
                sanitize(hoi_object_category(&t.object_box, dets)),
                t.object_box
            );
        }
    }
    let located: Vec<_> = rel
        .absolute_locations
        .iter()
        .filter_map(|l| dets.get(l.index).map(|d| (d, l.region)))
        .collect();
    if !located.is_empty() {
        s.push_str("Locations:\n");
        for (d, region) in located {
            let _ = writeln!(
                s,
                "- the {} in {} is at the {} of the image",
                sanitize(&d.category),
                d.bbox,
                region.phrase()
            );
        }
    }
    let pairs2: Vec<_> = rel
        .relative_2d
        .iter()
        .filter_map(|r| Some((dets.get(r.a)?, dets.get(r.b)?, r.relation)))
        .collect();
    let pairs3: Vec<_> = rel
        .relative_3d
        .iter()
        .filter_map(|r| Some((dets.get(r.a)?, dets.get(r.b)?, r.relation)))
        .collect();
    if !pairs2.is_empty() || !pairs3.is_empty() {
        s.push_str("Spatial relations:\n");
        for (a, b, r) in pairs2 {
            let _ = writeln!(
                s,
                "- the {} in {} is {} the {} in {}",
                sanitize(&a.category),
                a.bbox,
                r.phrase(),
                sanitize(&b.category),
                b.bbox
            );
        }
        for (a, b, r) in pairs3 {
            let _ = writeln!(
                s,
                "- {}",
                render_3d_relation_sentence(&a.category, &a.bbox, r, &b.category, &b.bbox)
            );
        }
    }

    let t = TemplateSet::builtin().builtin_get(IMAGE_CAPTION);
    let b = Bindings::new()
        .with("width", input.image.width.to_string())?
        .with("height", input.image.height.to_string())?
        .with("sections", s)?;
    Ok(render(t, &b)?)
}
