//! Regenerates the five-image fixture scene used by the integration tests.
//!
//!     cargo run -p dce-core --example build_scene -- crates/core/tests/fixtures/scene

use std::path::PathBuf;

use serde_json::{json, Value};

use dce_core::dataset::write_depth_map;
use dce_core::geometry::{expand_crop, merge_detections, GeometryConfig};
use dce_core::model::{BoundingBox, DepthMap, Detection, DetectionSource, ImageRef};
use dce_core::specialists::{FixtureEntry, FixtureKey, FixtureStore, SpecialistKind};

struct Object {
    bbox: [u32; 4],
    category: &'static str,
    confidence: f64,
    open_world: bool,
    depth: f32,
    emotion: Option<&'static str>,
    fine: Option<(&'static str, f64)>,
    ocr: &'static [(&'static str, f64)],
    reference: &'static str,
    region: &'static str,
}

struct Scene {
    image: ImageRef,
    objects: Vec<Object>,
    hoi: Vec<([u32; 4], &'static str, [u32; 4])>,
    whole: &'static str,
    caption: &'static str,
}

fn b(a: [u32; 4]) -> BoundingBox {
    BoundingBox::new(a[0], a[1], a[2], a[3]).unwrap()
}

fn obj(bbox: [u32; 4], category: &'static str, confidence: f64, depth: f32) -> Object {
    Object {
        bbox,
        category,
        confidence,
        open_world: false,
        depth,
        emotion: None,
        fine: None,
        ocr: &[],
        reference: "",
        region: "",
    }
}

fn scenes() -> Vec<Scene> {
    let img = |id, name: &str, w, h| ImageRef::new(id, name, w, h);
    vec![
        Scene {
            image: img(1, "street.jpg", 640, 480),
            objects: vec![
                Object {
                    emotion: Some("happy"),
                    fine: Some(("unknown pedestrian", 0.2)),
                    reference: "A man in a red jacket walks along a sidewalk with a dog on a leash.",
                    region: "A smiling man in a red jacket strolls down the sidewalk.",
                    ..obj([100, 120, 220, 420], "person", 0.92, 2.0)
                },
                Object {
                    fine: Some(("golden retriever", 0.81)),
                    reference: "A dog trots along the pavement beside a person.",
                    region: "A golden retriever trots on the pavement, its leash slack.",
                    ..obj([300, 300, 420, 440], "dog", 0.88, 5.0)
                },
                Object {
                    open_world: true,
                    reference: "A duplicate view of the walking man.",
                    region: "unused",
                    ..obj([104, 118, 224, 424], "person", 0.85, 2.0)
                },
                Object {
                    open_world: true,
                    ocr: &[("MAIN ST", 0.95), ("x", 0.3)],
                    reference: "A green street sign is mounted on a pole.",
                    region: "A green street sign on a pole reads MAIN ST.",
                    ..obj([480, 40, 600, 120], "street sign", 0.71, 8.0)
                },
                Object {
                    reference: "unused",
                    region: "unused",
                    ..obj([20, 20, 60, 60], "bicycle", 0.3, 9.0)
                },
            ],
            hoi: vec![([100, 120, 220, 420], "walking", [300, 300, 420, 440])],
            whole: "A man walks a dog down a city sidewalk under a street sign.",
            caption: "A smiling man in a red jacket walks a golden retriever along a city sidewalk. \
                      The dog trots to his right, a little farther from the camera, and a green street \
                      sign reading MAIN ST hangs in the upper right of the frame.",
        },
        Scene {
            image: img(2, "kitchen.jpg", 800, 600),
            objects: vec![
                Object {
                    fine: Some(("margherita pizza", 0.74)),
                    reference: "A pizza sits on a wooden board on the counter.",
                    region: "A margherita pizza with basil leaves rests on a wooden board.",
                    ..obj([250, 300, 550, 500], "pizza", 0.9, 3.0)
                },
                Object {
                    reference: "A white mug stands near the pizza.",
                    region: "A white ceramic cup stands on the counter.",
                    ..obj([600, 320, 680, 420], "cup", 0.8, 3.1)
                },
                Object {
                    open_world: true,
                    ocr: &[("COLA", 0.88)],
                    reference: "A glass bottle stands at the back of the counter.",
                    region: "A tall glass bottle labelled COLA stands at the back of the counter.",
                    ..obj([80, 150, 160, 420], "bottle", 0.77, 6.0)
                },
            ],
            hoi: vec![],
            whole: "A kitchen counter with a pizza, a cup and a bottle.",
            caption: "A margherita pizza on a wooden board fills the middle of a kitchen counter, with a \
                      white cup to its right and a tall COLA bottle standing farther back on the left.",
        },
        Scene {
            image: img(3, "empty.jpg", 500, 500),
            objects: vec![],
            hoi: vec![],
            whole: "A plain grey wall with no objects in view.",
            caption: "A plain grey wall fills the frame, with no distinct objects in view.",
        },
        Scene {
            image: img(4, "airport.jpg", 1024, 768),
            objects: vec![
                Object {
                    fine: Some(("Boeing 737", 0.66)),
                    reference: "A passenger jet is parked on the apron.",
                    region: "A white Boeing 737 is parked on the apron with its stairs lowered.",
                    ..obj([300, 100, 900, 400], "airplane", 0.95, 9.0)
                },
                Object {
                    emotion: Some("neutral"),
                    fine: Some(("ground crew member", 0.31)),
                    reference: "A worker in a safety vest stands on the tarmac.",
                    region: "A ground worker in a yellow safety vest stands calmly on the tarmac.",
                    ..obj([120, 450, 220, 720], "person", 0.9, 2.5)
                },
                Object {
                    emotion: Some("surprised"),
                    fine: Some(("traveller", 0.4)),
                    reference: "A traveller with a suitcase looks up at the plane.",
                    region: "A surprised traveller pulls a suitcase and looks up at the plane.",
                    ..obj([700, 460, 790, 740], "person", 0.87, 4.0)
                },
            ],
            hoi: vec![
                ([700, 460, 790, 740], "looking at", [300, 100, 900, 400]),
                ([120, 450, 220, 720], "standing on", [0, 400, 1024, 768]),
            ],
            whole: "Two people on the tarmac near a parked passenger jet.",
            caption: "A white Boeing 737 is parked on the apron in the upper part of the frame. In the \
                      foreground a ground worker in a yellow vest stands on the tarmac at the lower left, \
                      while a surprised traveller with a suitcase looks up at the plane from the lower right.",
        },
        Scene {
            image: img(5, "garden.jpg", 300, 400),
            objects: vec![
                Object {
                    fine: Some(("monstera", 0.9)),
                    reference: "A leafy plant grows in a terracotta pot.",
                    region: "A monstera with split leaves grows in a terracotta pot.",
                    ..obj([20, 200, 140, 380], "potted plant", 0.83, 4.0)
                },
                Object {
                    fine: Some(("tabby cat", 0.45)),
                    reference: "A cat sits on the patio stones.",
                    region: "A striped cat sits upright on the patio stones.",
                    ..obj([160, 250, 280, 390], "cat", 0.91, 3.0)
                },
            ],
            hoi: vec![],
            whole: "A cat sits next to a potted plant on a patio.",
            caption: "A striped cat sits upright on patio stones to the right of a monstera growing in a \
                      terracotta pot.",
        },
    ]
}

fn depth_grid(scene: &Scene) -> DepthMap {
    let (w, h) = (scene.image.width / 8, scene.image.height / 8);
    let mut values = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x * 8 + 4, y * 8 + 4);
            let mut v = 12.0 - 6.0 * (py as f32 / scene.image.height as f32);
            for o in &scene.objects {
                let [x1, y1, x2, y2] = o.bbox;
                if (x1..x2).contains(&px) && (y1..y2).contains(&py) {
                    v = v.min(o.depth);
                }
            }
            values.push(v);
        }
    }
    DepthMap::new(w, h, values).unwrap()
}

fn entry(kind: SpecialistKind, id: u64, bbox: Option<BoundingBox>, prompt: Option<&str>, response: Value) -> FixtureEntry {
    FixtureEntry {
        key: FixtureKey {
            kind,
            image_id: id,
            bbox,
            prompt_contains: prompt.map(str::to_string),
        },
        response,
    }
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).expect("usage: build_scene OUT_DIR").into();
    std::fs::create_dir_all(out.join("depth")).unwrap();
    let geo = GeometryConfig::default();
    let mut entries = Vec::new();
    let mut images = Vec::new();

    for scene in scenes() {
        let image = &scene.image;
        let id = image.id;
        images.push(json!({
            "id": id, "file_name": image.file_name, "width": image.width, "height": image.height
        }));

        let wire = |open: bool| -> Value {
            let dets: Vec<Value> = scene
                .objects
                .iter()
                .filter(|o| o.open_world == open)
                .map(|o| json!({"box": o.bbox, "category": o.category, "confidence": o.confidence}))
                .collect();
            json!({ "detections": dets })
        };
        entries.push(entry(SpecialistKind::DetectorInDomain, id, None, None, wire(false)));
        entries.push(entry(SpecialistKind::DetectorOpenWorld, id, None, None, wire(true)));

        let map = depth_grid(&scene);
        let rel = format!("depth/{id}.dced");
        write_depth_map(&out.join(&rel), &map).unwrap();
        entries.push(entry(
            SpecialistKind::Depth,
            id,
            None,
            None,
            json!({"width": map.width(), "height": map.height(), "depth_uri": rel}),
        ));

        let triples: Vec<Value> = scene
            .hoi
            .iter()
            .map(|(p, verb, o)| json!({"person_box": p, "object_box": o, "verb": verb, "confidence": 0.8}))
            .collect();
        entries.push(entry(SpecialistKind::Hoi, id, None, None, json!({ "triples": triples })));
        entries.push(entry(
            SpecialistKind::VlmRegion,
            id,
            None,
            Some("describe the whole image"),
            json!({"text": scene.whole}),
        ));
        entries.push(entry(SpecialistKind::LlmCompose, id, None, None, json!({"text": scene.caption})));

        let to_det = |o: &Object| {
            let source = if o.open_world {
                DetectionSource::OpenWorld
            } else {
                DetectionSource::InDomain
            };
            Detection::new(b(o.bbox), o.category, o.confidence, source)
        };
        let in_domain: Vec<Detection> = scene.objects.iter().filter(|o| !o.open_world).map(to_det).collect();
        let open_world: Vec<Detection> = scene.objects.iter().filter(|o| o.open_world).map(to_det).collect();
        let merged = merge_detections(&in_domain, &open_world, &geo);

        for det in &merged {
            let o = scene
                .objects
                .iter()
                .find(|o| b(o.bbox) == det.bbox)
                .expect("merged detection comes from the scene");
            let crop = expand_crop(&det.bbox, image, geo.crop_expand_factor);
            if let Some(e) = o.emotion {
                entries.push(entry(
                    SpecialistKind::Emotion,
                    id,
                    Some(det.bbox),
                    None,
                    json!({"label": e, "confidence": 0.9}),
                ));
            }
            let items: Vec<Value> = o
                .ocr
                .iter()
                .map(|(t, c)| json!({"text": t, "box": o.bbox, "confidence": c}))
                .collect();
            entries.push(entry(SpecialistKind::Ocr, id, Some(crop), None, json!({ "items": items })));
            if let (Some((label, conf)), Some(kind)) = (o.fine, dce_core::specialists::route_fine_grained(o.category)) {
                entries.push(entry(kind, id, Some(det.bbox), None, json!({"label": label, "confidence": conf})));
            }
            entries.push(entry(
                SpecialistKind::VlmRegion,
                id,
                Some(crop),
                Some("You glimpsed the image"),
                json!({"text": o.reference}),
            ));
            entries.push(entry(
                SpecialistKind::VlmRegion,
                id,
                Some(crop),
                Some("single region cropped"),
                json!({"text": o.region}),
            ));
        }
    }

    let annotations = json!({ "images": images, "annotations": [], "categories": [] });
    std::fs::write(
        out.join("annotations.json"),
        serde_json::to_string_pretty(&annotations).unwrap() + "\n",
    )
    .unwrap();
    std::fs::write(out.join("fixtures.json"), FixtureStore::new(entries).to_json() + "\n").unwrap();
    println!("wrote scene to {}", out.display());
}
