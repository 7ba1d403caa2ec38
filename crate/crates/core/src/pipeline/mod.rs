//! Per-image orchestration and batch execution.
//!
//! For one image the engine:
//!
//! 1. asks both detectors (or reads oracle detections) and merges them;
//! 2. fetches one depth map, a whole-image reference caption and the HOI
//!    triples, concurrently;
//! 3. for each merged detection, bounded by `region_concurrency`, derives
//!    size, depth and location, then asks the emotion (person only), OCR,
//!    fine-grained and reference-caption specialists, and finally the
//!    region captioner;
//! 4. derives counts and the 2D/3D relations of a few prominent pairs;
//! 5. asks the composer for the final caption.
//!
//! Under [`FailPolicy::Degrade`] a failed specialist only marks its
//! attribute `unavailable`. Region captions fall back to the reference
//! caption, then to the category name. A composer failure yields a
//! `failed` record with an empty caption.

mod batch;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::dataset::load_depth_map;
use crate::geometry::{
    absolute_location, area, expand_crop, mean_depth, merge_detections, relative_2d, relative_3d,
    select_prominent_pairs, size_bucket, GeometryConfig,
};
use crate::model::{
    AbsoluteLocation, CaptionRecord, DepthMap, Detection, DetectionSource, FineGrainedLabel,
    ImageAttribute, ImageRef, ObjectAttribute, ObjectAttributes, PairRelation, Provenance,
    RecordStatus, RelationAttributes, ENGINE_VERSION,
};
use crate::prompting::{
    build_image_prompt, build_region_prompt, render_image_reference_prompt, render_reference_prompt,
    ImagePromptInput,
};
use crate::specialists::{
    gate_emotion, DepthResponse, DetectorResponse, HoiResponse, LabelResponse, OcrResponse,
    RoutingTable, SpecialistEndpoint, SpecialistError, SpecialistKind, SpecialistRequest,
    Specialists, TextResponse, RESPONSE_CONFIDENCE_THRESHOLD,
};

pub use batch::{ProgressEvent, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    #[default]
    Degrade,
    Abort,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("output {path}: {detail}")]
    Output { path: PathBuf, detail: String },
    #[error(transparent)]
    Specialist(#[from] SpecialistError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub endpoints: BTreeMap<SpecialistKind, SpecialistEndpoint>,
    pub region_concurrency: usize,
    pub image_concurrency: usize,
    pub fail_policy: FailPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            geometry: GeometryConfig::default(),
            endpoints: BTreeMap::new(),
            region_concurrency: 8,
            image_concurrency: 4,
            fail_policy: FailPolicy::Degrade,
        }
    }
}

impl PipelineConfig {
    /// Every kind served from the fixture store.
    pub fn all_fixture() -> Self {
        PipelineConfig {
            endpoints: SpecialistKind::ALL
                .into_iter()
                .map(|k| (k, SpecialistEndpoint::fixture(k)))
                .collect(),
            ..Default::default()
        }
    }

    pub fn missing_endpoints(&self) -> Vec<SpecialistKind> {
        SpecialistKind::ALL
            .into_iter()
            .filter(|k| !self.endpoints.contains_key(k))
            .collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.geometry
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.region_concurrency == 0 || self.image_concurrency == 0 {
            return Err(PipelineError::Config("concurrency limits must be positive".into()));
        }
        let missing = self.missing_endpoints();
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(|k| k.as_str()).collect();
            return Err(PipelineError::Config(format!(
                "missing endpoint for {}",
                names.join(", ")
            )));
        }
        for (kind, ep) in &self.endpoints {
            if ep.kind != *kind {
                return Err(PipelineError::Config(format!(
                    "endpoint under {kind} declares kind {}",
                    ep.kind
                )));
            }
        }
        Ok(())
    }
}

/// Signals that a specialist failure must fail the whole image.
struct Abort(SpecialistError);

/// Runs the caption pipeline over images. Shareable across tasks.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<EngineInner>,
}

struct EngineInner {
    config: PipelineConfig,
    specialists: Specialists,
    routing: RoutingTable,
    image_root: PathBuf,
    oracle: Option<BTreeMap<u64, Vec<Detection>>>,
    progress: Option<Arc<dyn Fn(&ProgressEvent) + Send + Sync>>,
}

impl Engine {
    pub fn new(config: PipelineConfig, specialists: Specialists) -> Self {
        Engine {
            inner: Arc::new(EngineInner {
                config,
                specialists,
                routing: RoutingTable::shipped().clone(),
                image_root: PathBuf::new(),
                oracle: None,
                progress: None,
            }),
        }
    }

    fn inner_mut(&mut self) -> &mut EngineInner {
        Arc::get_mut(&mut self.inner).expect("engine is configured before it is shared")
    }

    pub fn with_routing(mut self, routing: RoutingTable) -> Self {
        self.inner_mut().routing = routing;
        self
    }

    /// Directory image file names and relative depth URIs resolve against.
    pub fn with_image_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.inner_mut().image_root = root.into();
        self
    }

    /// Use these detections instead of calling the detectors, for the images they cover.
    pub fn with_oracle_detections(mut self, oracle: BTreeMap<u64, Vec<Detection>>) -> Self {
        self.inner_mut().oracle = Some(oracle);
        self
    }

    pub fn with_progress(mut self, f: impl Fn(&ProgressEvent) + Send + Sync + 'static) -> Self {
        self.inner_mut().progress = Some(Arc::new(f));
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.inner.config
    }

    fn image_path(&self, image: &ImageRef) -> String {
        self.inner.image_root.join(&image.file_name).display().to_string()
    }

    fn request(&self, image: &ImageRef) -> SpecialistRequest {
        SpecialistRequest::new(image.id, self.image_path(image))
    }

    fn tolerate<T>(&self, what: &str, r: Result<T, SpecialistError>) -> Result<Option<T>, Abort> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e) => match self.inner.config.fail_policy {
                FailPolicy::Abort => Err(Abort(e)),
                FailPolicy::Degrade => {
                    tracing::warn!(attribute = what, error = %e, "specialist failed, degrading");
                    Ok(None)
                }
            },
        }
    }

    async fn call<T: crate::specialists::Response>(
        &self,
        kind: SpecialistKind,
        req: &SpecialistRequest,
    ) -> Result<T, SpecialistError> {
        self.inner.specialists.call(kind, req).await
    }

    async fn detect(
        &self,
        image: &ImageRef,
        kind: SpecialistKind,
        source: DetectionSource,
    ) -> Result<Option<Vec<Detection>>, Abort> {
        let resp = self.call::<DetectorResponse>(kind, &self.request(image)).await;
        let dets = self.tolerate(kind.as_str(), resp)?;
        Ok(dets.map(|r| {
            r.into_detections(source)
                .into_iter()
                .filter(|d| d.bbox.fits_within(image))
                .collect()
        }))
    }

    async fn fetch_depth(&self, image: &ImageRef) -> Result<Option<DepthMap>, Abort> {
        let kind = SpecialistKind::Depth;
        let fetched = async {
            let resp: DepthResponse = self.call(kind, &self.request(image)).await?;
            let uri = resp.depth_uri.strip_prefix("file://").unwrap_or(&resp.depth_uri);
            let path = self.inner.image_root.join(Path::new(uri));
            let map = load_depth_map(&path).map_err(|e| SpecialistError::Protocol {
                kind,
                detail: e.to_string(),
            })?;
            if (map.width(), map.height()) != (resp.width, resp.height) || map.is_empty() {
                return Err(SpecialistError::Protocol {
                    kind,
                    detail: format!(
                        "depth map is {}x{}, response says {}x{}",
                        map.width(),
                        map.height(),
                        resp.width,
                        resp.height
                    ),
                });
            }
            Ok(map)
        };
        self.tolerate("depth", fetched.await)
    }

    async fn text(&self, req: &SpecialistRequest, what: &str) -> Result<Option<String>, Abort> {
        let r = self.call::<TextResponse>(SpecialistKind::VlmRegion, req).await;
        Ok(self.tolerate(what, r)?.map(|t| t.text.trim().to_string()))
    }

    async fn region(
        &self,
        image: &ImageRef,
        det: &Detection,
        depth: Option<&DepthMap>,
    ) -> Result<(ObjectAttributes, String), Abort> {
        let geo = &self.inner.config.geometry;
        let mut provenance = BTreeMap::new();
        let box_area = area(&det.bbox);
        let (bucket, fraction) = size_bucket(box_area, image, geo);
        provenance.insert(ObjectAttribute::Size, Provenance::Extracted);

        let depth_value = depth.and_then(|m| mean_depth(m, &det.bbox, image).ok());
        provenance.insert(
            ObjectAttribute::Depth,
            if depth_value.is_some() {
                Provenance::Extracted
            } else {
                Provenance::Unavailable
            },
        );

        let crop = expand_crop(&det.bbox, image, geo.crop_expand_factor);
        let base = self.request(image);

        let emotion = if gate_emotion(&det.category) {
            let req = base.clone().with_box(det.bbox).with_category(&det.category);
            let r = self.call::<LabelResponse>(SpecialistKind::Emotion, &req).await;
            let label = self.tolerate("emotion", r)?;
            provenance.insert(ObjectAttribute::Emotion, extracted_if(label.is_some()));
            label.map(|l| l.label)
        } else {
            provenance.insert(ObjectAttribute::Emotion, Provenance::SkippedByGating);
            None
        };

        let req = base.clone().with_box(crop);
        let ocr = self.tolerate("ocr", self.call::<OcrResponse>(SpecialistKind::Ocr, &req).await)?;
        provenance.insert(ObjectAttribute::Ocr, extracted_if(ocr.is_some()));
        let ocr_items = ocr.map(OcrResponse::accepted).unwrap_or_default();

        let fine_grained = match self.inner.routing.route(&det.category) {
            Some(kind) => {
                let req = base.clone().with_box(det.bbox).with_category(&det.category);
                let r = self.call::<LabelResponse>(kind, &req).await;
                match self.tolerate(kind.as_str(), r)? {
                    Some(l) if l.confidence >= RESPONSE_CONFIDENCE_THRESHOLD => {
                        provenance.insert(ObjectAttribute::FineGrained, Provenance::Extracted);
                        Some(FineGrainedLabel {
                            label: l.label,
                            confidence: l.confidence,
                        })
                    }
                    Some(_) => {
                        provenance.insert(ObjectAttribute::FineGrained, Provenance::SkippedByGating);
                        None
                    }
                    None => {
                        provenance.insert(ObjectAttribute::FineGrained, Provenance::Unavailable);
                        None
                    }
                }
            }
            None => {
                provenance.insert(ObjectAttribute::FineGrained, Provenance::SkippedByGating);
                None
            }
        };

        let reference_caption = match render_reference_prompt(&det.category) {
            Ok(prompt) => {
                let req = base
                    .clone()
                    .with_box(crop)
                    .with_category(&det.category)
                    .with_prompt(prompt);
                self.text(&req, "reference_caption").await?
            }
            Err(_) => None,
        };
        provenance.insert(
            ObjectAttribute::ReferenceCaption,
            extracted_if(reference_caption.is_some()),
        );

        let mut attrs = ObjectAttributes {
            detection: det.clone(),
            area: box_area,
            area_fraction: fraction,
            size_bucket: bucket,
            mean_depth: depth_value,
            emotion,
            ocr_items,
            fine_grained,
            reference_caption,
            provenance,
        };

        let region_caption = match build_region_prompt(&attrs) {
            Ok(prompt) => {
                let req = base.with_box(crop).with_prompt(prompt);
                self.text(&req, "region_caption").await?
            }
            Err(_) => None,
        };
        attrs.provenance.insert(
            ObjectAttribute::RegionCaption,
            extracted_if(region_caption.is_some()),
        );
        let caption = region_caption
            .or_else(|| attrs.reference_caption.clone())
            .unwrap_or_else(|| det.category.clone());
        Ok((attrs, caption))
    }

    /// Runs the full pipeline for one image. Never errors: failures become
    /// provenance marks or a `failed` record.
    pub async fn process_image(&self, image: &ImageRef) -> CaptionRecord {
        match self.try_process(image).await {
            Ok(record) => record,
            Err(Abort(e)) => {
                tracing::warn!(image = image.id, error = %e, "image aborted");
                failed_record(image)
            }
        }
    }

    async fn try_process(&self, image: &ImageRef) -> Result<CaptionRecord, Abort> {
        let cfg = &self.inner.config;
        let geo = &cfg.geometry;
        let mut image_prov = BTreeMap::new();
        let reference_request = self.request(image).with_prompt(render_image_reference_prompt());

        let (detections, depth, reference, hoi) = tokio::join!(
            self.merged_detections(image, &mut image_prov),
            self.fetch_depth(image),
            self.text(&reference_request, "image_reference_caption"),
            async {
                let r = self.call::<HoiResponse>(SpecialistKind::Hoi, &self.request(image)).await;
                self.tolerate("hoi", r)
            },
        );
        let (detections, depth, reference, hoi) = (detections?, depth?, reference?, hoi?);
        image_prov.insert(ImageAttribute::Depth, extracted_if(depth.is_some()));
        image_prov.insert(ImageAttribute::ReferenceCaption, extracted_if(reference.is_some()));
        image_prov.insert(ImageAttribute::Hoi, extracted_if(hoi.is_some()));

        let regions: Vec<Result<(ObjectAttributes, String), Abort>> = stream::iter(&detections)
            .map(|d| self.region(image, d, depth.as_ref()))
            .buffered(cfg.region_concurrency.max(1))
            .collect()
            .await;
        let mut object_attributes = Vec::with_capacity(regions.len());
        let mut region_captions = Vec::with_capacity(regions.len());
        for r in regions {
            let (a, c) = r?;
            object_attributes.push(a);
            region_captions.push(c);
        }

        let mut relations = RelationAttributes {
            hoi: hoi.map(|h| h.triples).unwrap_or_default(),
            counts: crate::geometry::count_objects(&detections),
            absolute_locations: detections
                .iter()
                .enumerate()
                .map(|(index, d)| AbsoluteLocation {
                    index,
                    region: absolute_location(&d.bbox, image),
                })
                .collect(),
            reference_caption: reference,
            provenance: image_prov,
            ..Default::default()
        };
        let depth_range = depth.as_ref().map(DepthMap::range);
        for (a, b) in select_prominent_pairs(&detections, image, geo) {
            if let Ok(relation) = relative_2d(&detections[a], &detections[b], image, geo) {
                relations.relative_2d.push(PairRelation { a, b, relation });
            }
            let depths = (object_attributes[a].mean_depth, object_attributes[b].mean_depth);
            if let (Some(range), (Some(da), Some(db))) = (depth_range, depths) {
                if let Some(relation) = relative_3d(da, db, range, geo) {
                    relations.relative_3d.push(PairRelation { a, b, relation });
                }
            }
        }

        let prompt = build_image_prompt(&ImagePromptInput {
            image,
            detections: &detections,
            region_captions: &region_captions,
            relations: &relations,
            reference_caption: relations.reference_caption.as_deref(),
        });
        let caption = match prompt {
            Ok(p) => {
                let req = self.request(image).with_prompt(p);
                match self.call::<TextResponse>(SpecialistKind::LlmCompose, &req).await {
                    Ok(t) => Some(t.text.trim().to_string()),
                    Err(e) => {
                        tracing::warn!(image = image.id, error = %e, "composer failed");
                        None
                    }
                }
            }
            Err(e) => {
                tracing::warn!(image = image.id, error = %e, "nothing to compose");
                None
            }
        };

        let degraded = object_attributes
            .iter()
            .flat_map(|a| a.provenance.values())
            .chain(relations.provenance.values())
            .any(|p| *p == Provenance::Unavailable);
        let (image_caption, status) = match caption {
            Some(c) if !c.is_empty() => (
                c,
                if degraded {
                    RecordStatus::Degraded
                } else {
                    RecordStatus::Ok
                },
            ),
            _ => (String::new(), RecordStatus::Failed),
        };
        Ok(CaptionRecord {
            image: image.clone(),
            detections,
            object_attributes,
            relation_attributes: relations,
            region_captions,
            image_caption,
            status,
            engine_version: ENGINE_VERSION.to_string(),
        })
    }

    async fn merged_detections(
        &self,
        image: &ImageRef,
        prov: &mut BTreeMap<ImageAttribute, Provenance>,
    ) -> Result<Vec<Detection>, Abort> {
        let geo = &self.inner.config.geometry;
        if let Some(oracle) = self.inner.oracle.as_ref().and_then(|o| o.get(&image.id)) {
            prov.insert(ImageAttribute::DetectionInDomain, Provenance::SkippedByGating);
            prov.insert(ImageAttribute::DetectionOpenWorld, Provenance::SkippedByGating);
            let inside: Vec<Detection> = oracle.iter().filter(|d| d.bbox.fits_within(image)).cloned().collect();
            return Ok(merge_detections(&inside, &[], geo));
        }
        let (in_domain, open_world) = tokio::join!(
            self.detect(image, SpecialistKind::DetectorInDomain, DetectionSource::InDomain),
            self.detect(image, SpecialistKind::DetectorOpenWorld, DetectionSource::OpenWorld),
        );
        let (in_domain, open_world) = (in_domain?, open_world?);
        prov.insert(ImageAttribute::DetectionInDomain, extracted_if(in_domain.is_some()));
        prov.insert(ImageAttribute::DetectionOpenWorld, extracted_if(open_world.is_some()));
        Ok(merge_detections(
            &in_domain.unwrap_or_default(),
            &open_world.unwrap_or_default(),
            geo,
        ))
    }
}

fn extracted_if(present: bool) -> Provenance {
    if present {
        Provenance::Extracted
    } else {
        Provenance::Unavailable
    }
}

fn failed_record(image: &ImageRef) -> CaptionRecord {
    CaptionRecord {
        image: image.clone(),
        detections: Vec::new(),
        object_attributes: Vec::new(),
        relation_attributes: RelationAttributes::default(),
        region_captions: Vec::new(),
        image_caption: String::new(),
        status: RecordStatus::Failed,
        engine_version: ENGINE_VERSION.to_string(),
    }
}

/// Convenience wrapper: one image through a fresh engine.
pub async fn process_image(image: &ImageRef, config: PipelineConfig, specialists: Specialists) -> CaptionRecord {
    Engine::new(config, specialists).process_image(image).await
}
