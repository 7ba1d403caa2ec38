//! Shared domain types for the caption engine.
//!
//! Everything here is a plain immutable value. Boxes use a half-open pixel
//! convention: a box `[x1, y1, x2, y2]` covers pixels with `x1 <= x < x2` and
//! `y1 <= y < y2`, origin top-left, x rightward and y downward. Depth values
//! are relative, and a smaller value means closer to the camera.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Version tag written into every record.
pub const ENGINE_VERSION: &str = concat!("dce-core/", env!("CARGO_PKG_VERSION"));

/// One image of a dataset, referenced by id and path. Pixels never live here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

impl ImageRef {
    pub fn new(id: u64, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        ImageRef {
            id,
            file_name: file_name.into(),
            width,
            height,
        }
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }

    /// The box covering the whole frame.
    pub fn full_box(&self) -> BoundingBox {
        BoundingBox {
            x1: 0,
            y1: 0,
            x2: self.width,
            y2: self.height,
        }
    }
}

/// Half-open pixel box. Serialized as the integer array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid box [{x1},{y1},{x2},{y2}]: corners out of order")]
pub struct InvalidBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BoundingBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, InvalidBox> {
        if x1 > x2 || y1 > y2 {
            return Err(InvalidBox { x1, y1, x2, y2 });
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> u32 {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }

    pub fn is_ordered(&self) -> bool {
        self.x1 <= self.x2 && self.y1 <= self.y2
    }

    pub fn fits_within(&self, image: &ImageRef) -> bool {
        self.x2 <= image.width && self.y2 <= image.height
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (f64::from(self.x1) + f64::from(self.x2)) / 2.0,
            (f64::from(self.y1) + f64::from(self.y2)) / 2.0,
        )
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = InvalidBox;

    fn try_from(v: [u32; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = <[u32; 4]>::deserialize(d)?;
        BoundingBox::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionSource {
    InDomain,
    OpenWorld,
    OracleFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub category: String,
    pub confidence: f64,
    pub source: DetectionSource,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        category: impl Into<String>,
        confidence: f64,
        source: DetectionSource,
    ) -> Self {
        Detection {
            bbox,
            category: category.into(),
            confidence,
            source,
        }
    }
}

/// Row-major grid of relative depth readings.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DepthMapError {
    #[error("depth map has {actual} values, expected {width}x{height}")]
    SizeMismatch {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("depth value at index {index} is {value}; values must be finite and non-negative")]
    BadValue { index: usize, value: f32 },
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self, DepthMapError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(DepthMapError::SizeMismatch {
                width,
                height,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(DepthMapError::BadValue { index, value });
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: u32, height: u32, value: f32) -> Result<Self, DepthMapError> {
        DepthMap::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// `(min, max)` over all readings, `None` for an empty map.
    pub fn min_max(&self) -> Option<(f32, f32)> {
        let mut it = self.values.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Max minus min, zero for an empty map.
    pub fn range(&self) -> f64 {
        self.min_max()
            .map(|(lo, hi)| f64::from(hi) - f64::from(lo))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        }
    }
}

/// Why an attribute is or is not present on a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Extracted,
    SkippedByGating,
    Unavailable,
}

/// Per-region attribute names tracked in provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectAttribute {
    Size,
    Depth,
    Emotion,
    Ocr,
    FineGrained,
    ReferenceCaption,
    RegionCaption,
}

impl ObjectAttribute {
    pub const ALL: [ObjectAttribute; 7] = [
        ObjectAttribute::Size,
        ObjectAttribute::Depth,
        ObjectAttribute::Emotion,
        ObjectAttribute::Ocr,
        ObjectAttribute::FineGrained,
        ObjectAttribute::ReferenceCaption,
        ObjectAttribute::RegionCaption,
    ];
}

/// Image-level attribute names tracked in provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageAttribute {
    DetectionInDomain,
    DetectionOpenWorld,
    Depth,
    Hoi,
    ReferenceCaption,
}

impl ImageAttribute {
    pub const ALL: [ImageAttribute; 5] = [
        ImageAttribute::DetectionInDomain,
        ImageAttribute::DetectionOpenWorld,
        ImageAttribute::Depth,
        ImageAttribute::Hoi,
        ImageAttribute::ReferenceCaption,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrItem {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineGrainedLabel {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAttributes {
    pub detection: Detection,
    pub area: u64,
    pub area_fraction: f64,
    pub size_bucket: SizeBucket,
    pub mean_depth: Option<f64>,
    pub emotion: Option<String>,
    pub ocr_items: Vec<OcrItem>,
    pub fine_grained: Option<FineGrainedLabel>,
    pub reference_caption: Option<String>,
    pub provenance: BTreeMap<ObjectAttribute, Provenance>,
}

impl ObjectAttributes {
    pub fn provenance_of(&self, attr: ObjectAttribute) -> Option<Provenance> {
        self.provenance.get(&attr).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiTriple {
    pub person_box: BoundingBox,
    pub object_box: BoundingBox,
    pub verb: String,
    pub confidence: f64,
}

/// Nine-way position of an object within the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsoluteRegion {
    Left,
    Right,
    Top,
    Bottom,
    Center,
    TopLeft,
    BottomLeft,
    TopRight,
    BottomRight,
}

impl AbsoluteRegion {
    pub const ALL: [AbsoluteRegion; 9] = [
        AbsoluteRegion::Left,
        AbsoluteRegion::Right,
        AbsoluteRegion::Top,
        AbsoluteRegion::Bottom,
        AbsoluteRegion::Center,
        AbsoluteRegion::TopLeft,
        AbsoluteRegion::BottomLeft,
        AbsoluteRegion::TopRight,
        AbsoluteRegion::BottomRight,
    ];

    /// Phrase used in prompts, e.g. "top-left".
    pub fn phrase(self) -> &'static str {
        match self {
            AbsoluteRegion::Left => "left",
            AbsoluteRegion::Right => "right",
            AbsoluteRegion::Top => "top",
            AbsoluteRegion::Bottom => "bottom",
            AbsoluteRegion::Center => "center",
            AbsoluteRegion::TopLeft => "top-left",
            AbsoluteRegion::BottomLeft => "bottom-left",
            AbsoluteRegion::TopRight => "top-right",
            AbsoluteRegion::BottomRight => "bottom-right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation2D {
    LeftOf,
    RightOf,
    Above,
    Below,
    NextTo,
}

impl Relation2D {
    pub fn phrase(self) -> &'static str {
        match self {
            Relation2D::LeftOf => "to the left of",
            Relation2D::RightOf => "to the right of",
            Relation2D::Above => "above",
            Relation2D::Below => "below",
            Relation2D::NextTo => "next to",
        }
    }

    /// The relation seen from the other object.
    pub fn inverse(self) -> Relation2D {
        match self {
            Relation2D::LeftOf => Relation2D::RightOf,
            Relation2D::RightOf => Relation2D::LeftOf,
            Relation2D::Above => Relation2D::Below,
            Relation2D::Below => Relation2D::Above,
            Relation2D::NextTo => Relation2D::NextTo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation3D {
    InFrontOf,
    BehindOf,
}

impl Relation3D {
    pub fn phrase(self) -> &'static str {
        match self {
            Relation3D::InFrontOf => "in front of",
            Relation3D::BehindOf => "behind of",
        }
    }

    pub fn inverse(self) -> Relation3D {
        match self {
            Relation3D::InFrontOf => Relation3D::BehindOf,
            Relation3D::BehindOf => Relation3D::InFrontOf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsoluteLocation {
    pub index: usize,
    pub region: AbsoluteRegion,
}

/// A relation between merged detections `a` and `b`, read "a is <relation> b".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRelation<R> {
    pub a: usize,
    pub b: usize,
    pub relation: R,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelationAttributes {
    pub hoi: Vec<HoiTriple>,
    pub counts: BTreeMap<String, usize>,
    pub absolute_locations: Vec<AbsoluteLocation>,
    pub relative_2d: Vec<PairRelation<Relation2D>>,
    pub relative_3d: Vec<PairRelation<Relation3D>>,
    /// Whole-image reference caption, when the captioner produced one.
    pub reference_caption: Option<String>,
    pub provenance: BTreeMap<ImageAttribute, Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Degraded,
    Failed,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Degraded => "degraded",
            RecordStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the output dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image: ImageRef,
    pub detections: Vec<Detection>,
    pub object_attributes: Vec<ObjectAttributes>,
    pub relation_attributes: RelationAttributes,
    pub region_captions: Vec<String>,
    pub image_caption: String,
    pub status: RecordStatus,
    pub engine_version: String,
}

/// A broken record invariant.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("detection {0}: box corners out of order")]
    BoxOrder(usize),
    #[error("detection {0}: box exceeds image bounds")]
    BoxOutOfImage(usize),
    #[error("detection {0}: confidence outside [0,1]")]
    Confidence(usize),
    #[error("detection {0}: empty category")]
    EmptyCategory(usize),
    #[error("object attributes count differs from detection count")]
    AttributeCountMismatch,
    #[error("object {0}: detection differs from merged detection list")]
    AttributeDetectionMismatch(usize),
    #[error("object {0}: area does not match box")]
    AreaMismatch(usize),
    #[error("object {0}: area fraction outside [0,1]")]
    AreaFraction(usize),
    #[error("object {0}: emotion on a non-person region")]
    EmotionGating(usize),
    #[error("object {index}: provenance missing {attribute:?}")]
    MissingProvenance {
        index: usize,
        attribute: ObjectAttribute,
    },
    #[error("hoi {0}: empty verb")]
    EmptyVerb(usize),
    #[error("hoi {0}: confidence outside [0,1]")]
    HoiConfidence(usize),
    #[error("count mismatch")]
    CountMismatch,
    #[error("relation index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("region caption count differs from object count")]
    RegionCaptionCount,
    #[error("status/caption mismatch")]
    StatusCaptionMismatch,
}

fn is_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Lists every invariant the record breaks; an empty list means the record is valid.
pub fn validate_record(record: &CaptionRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let image = &record.image;
    if image.width == 0 || image.height == 0 {
        out.push(Violation::EmptyImage);
    }

    for (i, det) in record.detections.iter().enumerate() {
        if !det.bbox.is_ordered() {
            out.push(Violation::BoxOrder(i));
        } else if !det.bbox.fits_within(image) {
            out.push(Violation::BoxOutOfImage(i));
        }
        if !is_unit(det.confidence) {
            out.push(Violation::Confidence(i));
        }
        if det.category.is_empty() {
            out.push(Violation::EmptyCategory(i));
        }
    }

    if record.object_attributes.len() != record.detections.len() {
        out.push(Violation::AttributeCountMismatch);
    }
    for (i, attrs) in record.object_attributes.iter().enumerate() {
        if record.detections.get(i) != Some(&attrs.detection) {
            out.push(Violation::AttributeDetectionMismatch(i));
        }
        let b = attrs.detection.bbox;
        if attrs.area != u64::from(b.width()) * u64::from(b.height()) {
            out.push(Violation::AreaMismatch(i));
        }
        if !is_unit(attrs.area_fraction) {
            out.push(Violation::AreaFraction(i));
        }
        let is_person = attrs.detection.category.eq_ignore_ascii_case("person");
        if !is_person
            && (attrs.emotion.is_some()
                || attrs.provenance_of(ObjectAttribute::Emotion) == Some(Provenance::Extracted))
        {
            out.push(Violation::EmotionGating(i));
        }
        for attribute in ObjectAttribute::ALL {
            if !attrs.provenance.contains_key(&attribute) {
                out.push(Violation::MissingProvenance {
                    index: i,
                    attribute,
                });
            }
        }
    }

    let rel = &record.relation_attributes;
    for (i, t) in rel.hoi.iter().enumerate() {
        if t.verb.is_empty() {
            out.push(Violation::EmptyVerb(i));
        }
        if !is_unit(t.confidence) {
            out.push(Violation::HoiConfidence(i));
        }
    }

    let mut expected: BTreeMap<&str, usize> = BTreeMap::new();
    for det in &record.detections {
        *expected.entry(det.category.as_str()).or_default() += 1;
    }
    let counts_match = rel.counts.len() == expected.len()
        && rel
            .counts
            .iter()
            .all(|(k, v)| expected.get(k.as_str()) == Some(v));
    if !counts_match {
        out.push(Violation::CountMismatch);
    }

    let n = record.detections.len();
    let indices = rel
        .absolute_locations
        .iter()
        .map(|l| l.index)
        .chain(rel.relative_2d.iter().flat_map(|r| [r.a, r.b]))
        .chain(rel.relative_3d.iter().flat_map(|r| [r.a, r.b]));
    for idx in indices {
        if idx >= n {
            out.push(Violation::IndexOutOfRange(idx));
        }
    }

    if record.region_captions.len() != record.object_attributes.len() {
        out.push(Violation::RegionCaptionCount);
    }
    if (record.status == RecordStatus::Failed) != record.image_caption.is_empty() {
        out.push(Violation::StatusCaptionMismatch);
    }
    out
}
