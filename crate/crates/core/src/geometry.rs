//! Box geometry and the attributes derived from it.
//!
//! Every function here is pure. Inputs are merged detections, the image
//! frame and (for depth) one depth map per image.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    AbsoluteRegion, BoundingBox, DepthMap, Detection, ImageRef, Relation2D, Relation3D,
    SizeBucket,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("empty depth map")]
    EmptyDepthMap,
    #[error("box {bbox} lies outside the {width}x{height} image")]
    BoxOutsideImage {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error("self relation")]
    SelfRelation,
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
}

/// Thresholds and knobs for attribute derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub nms_iou_threshold: f64,
    pub detection_confidence_threshold: f64,
    /// Fraction of the image diagonal under which two centers are "next to" each other.
    pub near_distance_fraction: f64,
    /// Fraction of the image's depth range under which a depth difference is ambiguous.
    pub depth_margin_fraction: f64,
    pub size_small_fraction: f64,
    pub size_large_fraction: f64,
    pub crop_expand_factor: f64,
    pub pair_count: usize,
    pub rng_seed: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            nms_iou_threshold: 0.75,
            detection_confidence_threshold: 0.5,
            near_distance_fraction: 0.15,
            depth_margin_fraction: 0.05,
            size_small_fraction: 0.02,
            size_large_fraction: 0.20,
            crop_expand_factor: 0.20,
            pair_count: 2,
            rng_seed: 0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let fractions = [
            ("nms_iou_threshold", self.nms_iou_threshold),
            (
                "detection_confidence_threshold",
                self.detection_confidence_threshold,
            ),
            ("near_distance_fraction", self.near_distance_fraction),
            ("depth_margin_fraction", self.depth_margin_fraction),
            ("size_small_fraction", self.size_small_fraction),
            ("size_large_fraction", self.size_large_fraction),
            ("crop_expand_factor", self.crop_expand_factor),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(GeometryError::InvalidConfig(format!(
                    "{name} = {v} is outside [0,1]"
                )));
            }
        }
        if self.size_small_fraction >= self.size_large_fraction {
            return Err(GeometryError::InvalidConfig(
                "size_small_fraction must be below size_large_fraction".into(),
            ));
        }
        Ok(())
    }
}

pub fn area(b: &BoundingBox) -> u64 {
    u64::from(b.width()) * u64::from(b.height())
}

fn intersection(a: &BoundingBox, b: &BoundingBox) -> u64 {
    let w = a.x2.min(b.x2).saturating_sub(a.x1.max(b.x1));
    let h = a.y2.min(b.y2).saturating_sub(a.y1.max(b.y1));
    u64::from(w) * u64::from(h)
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection(a, b);
    let union = area(a) + area(b) - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Order used by NMS: confidence descending, then larger area, then
/// category, then input position.
fn nms_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&dets[i], &dets[j]);
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| area(&b.bbox).cmp(&area(&a.bbox)))
            .then_with(|| a.category.cmp(&b.category))
            .then_with(|| i.cmp(&j))
    });
    order
}

/// Greedy class-agnostic non-maximum suppression.
///
/// A detection survives iff its IoU with every previously kept detection is
/// strictly below `iou_threshold`. The output is in keep order.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<&Detection> = Vec::with_capacity(detections.len());
    for idx in nms_order(detections) {
        let cand = &detections[idx];
        if kept.iter().all(|k| iou(&k.bbox, &cand.bbox) < iou_threshold) {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Pools both detectors, drops anything under the confidence threshold
/// (a detection exactly at the threshold is kept), then runs NMS.
pub fn merge_detections(
    in_domain: &[Detection],
    open_world: &[Detection],
    cfg: &GeometryConfig,
) -> Vec<Detection> {
    let pooled: Vec<Detection> = in_domain
        .iter()
        .chain(open_world)
        .filter(|d| d.confidence >= cfg.detection_confidence_threshold)
        .cloned()
        .collect();
    nms(&pooled, cfg.nms_iou_threshold)
}

/// Index range `[lo, hi)` of map cells whose centers fall inside the image
/// interval `[start, end)`, with `map_len` cells spanning `image_len` pixels.
///
/// Cell `i` has its center at `(i + 0.5) * image_len / map_len` in image
/// coordinates; the comparison is done in integers to stay exact.
fn covered_cells(start: u32, end: u32, image_len: u32, map_len: u32) -> (u32, u32) {
    let first_at_or_after = |edge: u32| -> u64 {
        // smallest i with (2i + 1) * image_len >= 2 * edge * map_len
        let target = 2 * u64::from(edge) * u64::from(map_len);
        let il = u64::from(image_len);
        if target <= il {
            0
        } else {
            (target - il).div_ceil(2 * il)
        }
    };
    let lo = first_at_or_after(start).min(u64::from(map_len));
    let hi = first_at_or_after(end).min(u64::from(map_len));
    (lo as u32, hi.max(lo) as u32)
}

/// Average depth over the map cells whose centers fall inside the box, after
/// scaling the box from image to map resolution. Falls back to the single
/// cell nearest the box center when no center is covered.
pub fn mean_depth(map: &DepthMap, b: &BoundingBox, image: &ImageRef) -> Result<f64, GeometryError> {
    if map.is_empty() {
        return Err(GeometryError::EmptyDepthMap);
    }
    if !b.fits_within(image) || image.width == 0 || image.height == 0 {
        return Err(GeometryError::BoxOutsideImage {
            bbox: *b,
            width: image.width,
            height: image.height,
        });
    }
    let (mw, mh) = (map.width(), map.height());
    let (x_lo, x_hi) = covered_cells(b.x1, b.x2, image.width, mw);
    let (y_lo, y_hi) = covered_cells(b.y1, b.y2, image.height, mh);

    if x_lo < x_hi && y_lo < y_hi {
        let mut sum = 0.0f64;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                sum += f64::from(map.get(x, y));
            }
        }
        let n = u64::from(x_hi - x_lo) * u64::from(y_hi - y_lo);
        return Ok(sum / n as f64);
    }

    let (cx, cy) = b.center();
    let nearest = |c: f64, image_len: u32, map_len: u32| -> u32 {
        let scaled = c * f64::from(map_len) / f64::from(image_len);
        (scaled.floor().max(0.0) as u32).min(map_len - 1)
    };
    Ok(f64::from(map.get(
        nearest(cx, image.width, mw),
        nearest(cy, image.height, mh),
    )))
}

/// Band index 0/1/2 on a thirds split; a center on a line takes the lower band.
fn third_band(twice_center: u64, len: u32) -> usize {
    // center = twice_center / 2; compare 3 * center against len and 2 * len
    let lhs = 3 * twice_center;
    let len = u64::from(len);
    if lhs <= 2 * len {
        0
    } else if lhs <= 4 * len {
        1
    } else {
        2
    }
}

/// Nine-way position of the box center on a thirds grid.
pub fn absolute_location(b: &BoundingBox, image: &ImageRef) -> AbsoluteRegion {
    let col = third_band(u64::from(b.x1) + u64::from(b.x2), image.width);
    let row = third_band(u64::from(b.y1) + u64::from(b.y2), image.height);
    use AbsoluteRegion::*;
    const GRID: [[AbsoluteRegion; 3]; 3] = [
        [TopLeft, Top, TopRight],
        [Left, Center, Right],
        [BottomLeft, Bottom, BottomRight],
    ];
    GRID[row][col]
}

/// Where `a` sits relative to `b` in the image plane.
pub fn relative_2d(
    a: &Detection,
    b: &Detection,
    image: &ImageRef,
    cfg: &GeometryConfig,
) -> Result<Relation2D, GeometryError> {
    if a.bbox == b.bbox && a.category == b.category {
        return Err(GeometryError::SelfRelation);
    }
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    let (dx, dy) = (ax - bx, ay - by);
    let d = dx.hypot(dy);
    if d == 0.0 || d < cfg.near_distance_fraction * image.diagonal() {
        return Ok(Relation2D::NextTo);
    }
    Ok(if dx.abs() >= dy.abs() {
        if dx < 0.0 {
            Relation2D::LeftOf
        } else {
            Relation2D::RightOf
        }
    } else if dy < 0.0 {
        Relation2D::Above
    } else {
        Relation2D::Below
    })
}

/// Depth ordering of `a` against `b`; `None` when the difference is within
/// the ambiguity margin. Smaller depth is closer to the camera.
pub fn relative_3d(
    depth_a: f64,
    depth_b: f64,
    depth_range: f64,
    cfg: &GeometryConfig,
) -> Option<Relation3D> {
    let diff = depth_a - depth_b;
    if diff.abs() <= cfg.depth_margin_fraction * depth_range {
        None
    } else if diff < 0.0 {
        Some(Relation3D::InFrontOf)
    } else {
        Some(Relation3D::BehindOf)
    }
}

pub fn count_objects(detections: &[Detection]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for d in detections {
        *counts.entry(d.category.clone()).or_insert(0) += 1;
    }
    counts
}

/// Buckets an area by its share of the frame; returns the share too.
pub fn size_bucket(area: u64, image: &ImageRef, cfg: &GeometryConfig) -> (SizeBucket, f64) {
    let total = image.pixel_count();
    let fraction = if total == 0 {
        0.0
    } else {
        (area as f64 / total as f64).min(1.0)
    };
    let bucket = if fraction < cfg.size_small_fraction {
        SizeBucket::Small
    } else if fraction >= cfg.size_large_fraction {
        SizeBucket::Large
    } else {
        SizeBucket::Medium
    };
    (bucket, fraction)
}

/// Grows the box by `factor` of its own size on every side, rounding outward
/// and clamping to the frame.
pub fn expand_crop(b: &BoundingBox, image: &ImageRef, factor: f64) -> BoundingBox {
    // tolerance keeps products like 0.2 * 15 from rounding up a whole pixel
    let grow = |len: u32| -> u32 { (f64::from(len) * factor.max(0.0) - 1e-9).ceil().max(0.0) as u32 };
    let (gx, gy) = (grow(b.width()), grow(b.height()));
    BoundingBox {
        x1: b.x1.saturating_sub(gx),
        y1: b.y1.saturating_sub(gy),
        x2: b.x2.saturating_add(gx).min(image.width).max(b.x1.saturating_sub(gx)),
        y2: b.y2.saturating_add(gy).min(image.height).max(b.y1.saturating_sub(gy)),
    }
}

/// Ranks detections by confidence times area fraction (ties keep input
/// order). Stable, so equal scores stay in input order.
pub fn prominence_ranking(detections: &[Detection], image: &ImageRef) -> Vec<usize> {
    let total = image.pixel_count().max(1) as f64;
    let score = |d: &Detection| d.confidence * (area(&d.bbox) as f64 / total);
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        score(&detections[j])
            .partial_cmp(&score(&detections[i]))
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Pool size the prominent pairs are drawn from.
pub const PROMINENT_POOL: usize = 6;

/// Draws up to `cfg.pair_count` distinct pairs among the most prominent
/// detections. The draw is seeded by `cfg.rng_seed ^ image.id`, so a given
/// image always gets the same pairs. Each pair is `(more prominent, less prominent)`.
pub fn select_prominent_pairs(
    detections: &[Detection],
    image: &ImageRef,
    cfg: &GeometryConfig,
) -> Vec<(usize, usize)> {
    if detections.len() < 2 || cfg.pair_count == 0 {
        return Vec::new();
    }
    let ranked = prominence_ranking(detections, image);
    let pool = &ranked[..ranked.len().min(PROMINENT_POOL)];
    let mut candidates = Vec::new();
    for (i, &a) in pool.iter().enumerate() {
        for &b in &pool[i + 1..] {
            candidates.push((a, b));
        }
    }
    let take = cfg.pair_count.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ image.id);
    rand::seq::index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|k| candidates[k])
        .collect()
}
