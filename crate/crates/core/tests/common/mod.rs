#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dce_core::config::EngineConfig;
use dce_core::dataset::{load_coco_index, read_records};
use dce_core::model::{CaptionRecord, ImageRef};
use dce_core::pipeline::{Engine, RunSummary};
use dce_core::specialists::{FixtureStore, SpecialistEndpoint, Specialists};

pub fn scene_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scene")
}

pub fn golden_path() -> PathBuf {
    scene_dir().join("golden.jsonl")
}

pub struct Scene {
    pub config: EngineConfig,
    pub index: Vec<ImageRef>,
    pub fixtures: Arc<FixtureStore>,
}

pub fn load_scene() -> Scene {
    let dir = scene_dir();
    let config = EngineConfig::load(&dir.join("config.toml")).unwrap();
    config.validate().unwrap();
    let index = load_coco_index(&dir.join("annotations.json")).unwrap().images;
    let fixtures = config.load_fixtures().unwrap().unwrap();
    Scene {
        config,
        index,
        fixtures,
    }
}

impl Scene {
    pub fn engine(&self) -> Engine {
        self.engine_with(Specialists::from_endpoints(self.config.pipeline.endpoints.values(), Some(&self.fixtures)).unwrap())
    }

    pub fn engine_with(&self, specialists: Specialists) -> Engine {
        Engine::new(self.config.pipeline.clone(), specialists).with_image_root(scene_dir())
    }

    /// Every endpoint pointed at a remote base URL.
    pub fn remote_engine(&self, base_url: &str) -> Engine {
        let endpoints: Vec<SpecialistEndpoint> = self
            .config
            .pipeline
            .endpoints
            .keys()
            .map(|&k| SpecialistEndpoint::remote(k, base_url))
            .collect();
        self.engine_with(Specialists::from_endpoints(endpoints.iter(), None).unwrap())
    }
}

pub async fn run_to(engine: &Engine, index: &[ImageRef], out: &Path, resume: bool) -> RunSummary {
    engine.run_batch(index, out, resume).await.unwrap()
}

/// Records from a JSONL file, sorted by image id.
pub fn sorted_records(path: &Path) -> Vec<CaptionRecord> {
    let scan = read_records(path).unwrap();
    assert!(scan.malformed.is_empty(), "malformed lines in {}", path.display());
    let mut records = scan.records;
    records.sort_by_key(|r| r.image.id);
    records
}

/// One JSON line per record, sorted by image id.
pub fn sorted_lines(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<(u64, &str)> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["image"]["id"].as_u64().unwrap(), l)
        })
        .collect();
    lines.sort_by_key(|(id, _)| *id);
    lines.into_iter().map(|(_, l)| format!("{l}\n")).collect()
}
