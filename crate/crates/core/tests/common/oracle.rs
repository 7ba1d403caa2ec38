//! Brute-force reference implementations and random input generators.

use std::collections::BTreeSet;

use proptest::prelude::*;

use dce_core::geometry::{iou, area};
use dce_core::model::{BoundingBox, DepthMap, Detection, DetectionSource, ImageRef};

pub const CATEGORIES: [&str; 5] = ["person", "dog", "car", "cup", "street sign"];

/// Quadratic greedy NMS: repeatedly take the best remaining detection and
/// discard everything it overlaps at or above the threshold.
pub fn nms_oracle(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let better = |i: usize, j: usize| -> bool {
        let (a, b) = (&dets[i], &dets[j]);
        if a.confidence != b.confidence {
            return a.confidence > b.confidence;
        }
        if area(&a.bbox) != area(&b.bbox) {
            return area(&a.bbox) > area(&b.bbox);
        }
        if a.category != b.category {
            return a.category < b.category;
        }
        i < j
    };
    let mut alive: Vec<bool> = vec![true; dets.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| better(i, b)) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        alive[b] = false;
        for i in 0..dets.len() {
            if alive[i] && iou(&dets[b].bbox, &dets[i].bbox) >= threshold {
                alive[i] = false;
            }
        }
        kept.push(dets[b].clone());
    }
    kept
}

/// Mean over cells whose center (2i+1)/2 * W/mw lies inside the box, with the
/// nearest-cell fallback.
pub fn mean_depth_oracle(map: &DepthMap, b: &BoundingBox, image: &ImageRef) -> f64 {
    let (mw, mh) = (map.width(), map.height());
    let center = |i: u32, len: u32, m: u32| (f64::from(i) + 0.5) * f64::from(len) / f64::from(m);
    let (mut sum, mut n) = (0.0, 0u64);
    for y in 0..mh {
        let cy = center(y, image.height, mh);
        if !(f64::from(b.y1) <= cy && cy < f64::from(b.y2)) {
            continue;
        }
        for x in 0..mw {
            let cx = center(x, image.width, mw);
            if f64::from(b.x1) <= cx && cx < f64::from(b.x2) {
                sum += f64::from(map.get(x, y));
                n += 1;
            }
        }
    }
    if n > 0 {
        return sum / n as f64;
    }
    let (cx, cy) = b.center();
    let x = ((cx * f64::from(mw) / f64::from(image.width)).floor() as u32).min(mw - 1);
    let y = ((cy * f64::from(mh) / f64::from(image.height)).floor() as u32).min(mh - 1);
    f64::from(map.get(x, y))
}

pub fn image_strategy() -> impl Strategy<Value = ImageRef> {
    (1u32..=640, 1u32..=480).prop_map(|(w, h)| ImageRef::new(1, "img.jpg", w, h))
}

/// A box inside an image of the given size; zero-area boxes included.
pub fn box_in(width: u32, height: u32) -> impl Strategy<Value = BoundingBox> {
    (0..=width, 0..=width, 0..=height, 0..=height).prop_map(|(a, b, c, d)| {
        BoundingBox::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap()
    })
}

/// Confidences on a coarse grid so ties actually occur.
pub fn confidence() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..=20).prop_map(|k| f64::from(k) / 20.0), 0.0f64..=1.0]
}

pub fn detection_in(width: u32, height: u32) -> impl Strategy<Value = Detection> {
    (box_in(width, height), 0..CATEGORIES.len(), confidence(), any::<bool>()).prop_map(|(b, c, conf, open)| {
        let source = if open {
            DetectionSource::OpenWorld
        } else {
            DetectionSource::InDomain
        };
        Detection::new(b, CATEGORIES[c], conf, source)
    })
}

/// Up to `n` detections clustered in a small frame so overlaps are common.
pub fn detection_set(n: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(detection_in(120, 90), 0..=n)
}

pub fn depth_map(max_side: u32) -> impl Strategy<Value = DepthMap> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f32..100.0, (w * h) as usize)
            .prop_map(move |v| DepthMap::new(w, h, v).unwrap())
    })
}

pub fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "the", "a", "Dog", "dog,", "cat.", "left", "of", "(tree)", "THE", "leftover", "!!", "runs", "an",
    ])
    .prop_map(str::to_string)
}

pub fn corpus() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::collection::vec(word(), 0..12).prop_map(|ws| ws.join(" ")),
        0..8,
    )
}

pub fn stopword_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(vec!["the", "a", "of", "an"]).prop_map(str::to_string), 0..4)
}
