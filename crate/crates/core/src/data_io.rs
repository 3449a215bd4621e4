//! Annotation files, dataset preprocessing rules, the synthetic scene
//! generator and distribution reports.
//!
//! Annotation file layout (version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "mode": {"kind": "general"},
//!   "images": [
//!     {
//!       "gt_boxes": [[x1, y1, x2, y2, class_id], ...],
//!       "gt_relationships": [[subject_idx, object_idx, predicate_id], ...],
//!       "detections": [[x1, y1, x2, y2, class_id, score], ...]
//!     }
//!   ]
//! }
//! ```
//!
//! In HOI mode (`{"kind": "hoi", "human_class_id": 0}`) the object index of
//! a relationship may be `null` for an interaction whose object is not
//! visible; such entries are completed with the subject box on load.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::proposal::{classify_scene, ClassDistribution, Detection, GroundTruth, GtBox, Relationship, Scene, SceneMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported annotation version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("image {image}, {record}: {message}")]
    Record {
        image: usize,
        record: String,
        message: String,
    },
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

type BoxRow = (f64, f64, f64, f64, u32);
type RelRow = (usize, Option<usize>, u32);
type DetRow = (f64, f64, f64, f64, u32, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub gt_boxes: Vec<BoxRow>,
    #[serde(default)]
    pub gt_relationships: Vec<RelRow>,
    #[serde(default)]
    pub detections: Vec<DetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub version: u32,
    pub mode: SceneMode,
    /// settings that produced the file, if any
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    pub images: Vec<ImageRecord>,
}

impl AnnotationFile {
    pub fn from_scenes(scenes: &[Scene], mode: SceneMode, generator: Option<serde_json::Value>) -> Self {
        let images = scenes
            .iter()
            .map(|s| ImageRecord {
                gt_boxes: s
                    .ground_truth
                    .boxes()
                    .iter()
                    .map(|g| {
                        let [x1, y1, x2, y2] = g.bbox.to_array();
                        (x1, y1, x2, y2, g.class_id)
                    })
                    .collect(),
                gt_relationships: s
                    .ground_truth
                    .relationships()
                    .iter()
                    .map(|r| (r.subject, Some(r.object), r.predicate))
                    .collect(),
                detections: s
                    .detections
                    .iter()
                    .map(|d| {
                        let [x1, y1, x2, y2] = d.bbox.to_array();
                        (x1, y1, x2, y2, d.class_id, d.score)
                    })
                    .collect(),
            })
            .collect();
        Self {
            version: FORMAT_VERSION,
            mode,
            generator,
            images,
        }
    }

    /// Validated scenes, one per image.
    pub fn scenes(&self) -> Result<Vec<Scene>, DataError> {
        if self.version != FORMAT_VERSION {
            return Err(DataError::Version { found: self.version });
        }
        self.images
            .iter()
            .enumerate()
            .map(|(i, img)| image_to_scene(i, img, self.mode))
            .collect()
    }
}

fn record_err(image: usize, record: String, message: impl ToString) -> DataError {
    DataError::Record {
        image,
        record,
        message: message.to_string(),
    }
}

fn image_to_scene(image: usize, img: &ImageRecord, mode: SceneMode) -> Result<Scene, DataError> {
    let mut boxes = Vec::with_capacity(img.gt_boxes.len());
    for (k, &(x1, y1, x2, y2, class_id)) in img.gt_boxes.iter().enumerate() {
        let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| record_err(image, format!("gt_boxes[{k}]"), e))?;
        boxes.push(GtBox { bbox, class_id });
    }
    let mut raw = Vec::with_capacity(img.gt_relationships.len());
    for (k, &(subject, object, predicate)) in img.gt_relationships.iter().enumerate() {
        let record = || format!("gt_relationships[{k}]");
        for idx in std::iter::once(subject).chain(object) {
            if idx >= boxes.len() {
                return Err(record_err(
                    image,
                    record(),
                    format!("box index {idx} out of range ({} gt boxes)", boxes.len()),
                ));
            }
        }
        if object.is_none() && !matches!(mode, SceneMode::Hoi { .. }) {
            return Err(record_err(image, record(), "missing object is only allowed in HOI mode"));
        }
        raw.push(RawTriplet {
            subject,
            object,
            predicate,
        });
    }
    let mut detections = Vec::with_capacity(img.detections.len());
    for (k, &(x1, y1, x2, y2, class_id, score)) in img.detections.iter().enumerate() {
        let record = || format!("detections[{k}]");
        let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| record_err(image, record(), e))?;
        detections.push(Detection::new(bbox, class_id, score).map_err(|e| record_err(image, record(), e))?);
    }
    let gt = GroundTruth::new(boxes, vcoco_fill_invisible(&raw))
        .map_err(|e| record_err(image, "gt_relationships".into(), e))?;
    Scene::new(detections, gt, mode).map_err(|e| record_err(image, "detections".into(), e))
}

pub fn parse_annotations(text: &str) -> Result<AnnotationFile, DataError> {
    // check the version before the full schema so old files get a clear error
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DataError::Parse(format!("invalid JSON: {e}")))?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(DataError::Version { found: v as u32 }),
        None => return Err(DataError::Parse("missing \"version\"".into())),
    }
    if let Some(images) = value.get("images").and_then(serde_json::Value::as_array) {
        for (i, img) in images.iter().enumerate() {
            serde_json::from_value::<ImageRecord>(img.clone())
                .map_err(|e| DataError::Parse(format!("image {i}: {e}")))?;
        }
    }
    serde_json::from_value(value).map_err(|e| DataError::Parse(e.to_string()))
}

/// Reads and validates an annotation file.
pub fn load_annotations(path: &Path) -> Result<(AnnotationFile, Vec<Scene>), DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = parse_annotations(&text)?;
    let scenes = file.scenes()?;
    Ok((file, scenes))
}

pub fn save_annotations(path: &Path, file: &AnnotationFile) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(file).map_err(|e| DataError::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A relationship whose object may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawTriplet {
    pub subject: usize,
    pub object: Option<usize>,
    pub predicate: u32,
}

/// Completes interactions with an invisible object as `(subject, subject,
/// predicate)`; visible entries pass through unchanged.
pub fn vcoco_fill_invisible(triplets: &[RawTriplet]) -> Vec<Relationship> {
    triplets
        .iter()
        .map(|t| Relationship {
            subject: t.subject,
            object: t.object.unwrap_or(t.subject),
            predicate: t.predicate,
        })
        .collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// One merge round: connected components of same-class boxes linked by
/// IoU >= 0.5, each replaced by the coordinate mean of its members.
/// Components are ordered by their lowest member index.
fn merge_round(boxes: &[GtBox]) -> (Vec<GtBox>, Vec<usize>) {
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if boxes[i].class_id == boxes[j].class_id && iou(&boxes[i].bbox, &boxes[j].bbox) >= 0.5 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut remap = vec![0; n];
    for (i, slot) in remap.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        if component[root] == usize::MAX {
            component[root] = members.len();
            members.push(Vec::new());
        }
        *slot = component[root];
        members[component[root]].push(i);
    }
    let merged = members
        .iter()
        .map(|m| {
            let mut acc = [0.0; 4];
            for &i in m {
                for (a, v) in acc.iter_mut().zip(boxes[i].bbox.to_array()) {
                    *a += v;
                }
            }
            let k = m.len() as f64;
            GtBox {
                bbox: BBox::new(acc[0] / k, acc[1] / k, acc[2] / k, acc[3] / k).expect("mean of valid boxes"),
                class_id: boxes[m[0]].class_id,
            }
        })
        .collect();
    (merged, remap)
}

/// Merges duplicate annotations: same-class boxes connected through
/// IoU >= 0.5 collapse to their coordinate mean. Rounds repeat until no
/// merged boxes overlap that much, so the result is a fixed point.
/// Returns the boxes, the old-to-new index map and the remapped
/// relationships with duplicates removed.
pub fn merge_hico_boxes(boxes: &[GtBox], relationships: &[Relationship]) -> (Vec<GtBox>, Vec<usize>, Vec<Relationship>) {
    let mut current = boxes.to_vec();
    let mut remap: Vec<usize> = (0..boxes.len()).collect();
    loop {
        let (merged, step) = merge_round(&current);
        let changed = merged.len() != current.len();
        for r in &mut remap {
            *r = step[*r];
        }
        current = merged;
        if !changed {
            break;
        }
    }
    let mut seen = BTreeSet::new();
    let rels = relationships
        .iter()
        .map(|r| Relationship {
            subject: remap[r.subject],
            object: remap[r.object],
            predicate: r.predicate,
        })
        .filter(|r| seen.insert(*r))
        .collect();
    (current, remap, rels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    General,
    /// class 0 is the human class and every relationship has a human subject
    Hoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub scenes: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub relationships_min: usize,
    pub relationships_max: usize,
    pub num_classes: u32,
    pub num_predicates: u32,
    /// standard deviation of detection corner noise, as a fraction of box size
    pub jitter: f64,
    pub drop_rate: f64,
    /// spurious fraction of all detections
    pub spurious_rate: f64,
    /// share of spurious detections placed next to a ground-truth box
    pub near_miss_rate: f64,
    pub top_k: usize,
    pub mode: SyntheticMode,
    pub seed: u64,
}

pub const TOP_K_PRESETS: [usize; 5] = [20, 30, 40, 50, 100];

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            scenes: 100,
            objects_min: 12,
            objects_max: 24,
            relationships_min: 1,
            relationships_max: 3,
            num_classes: 20,
            num_predicates: 4,
            jitter: 0.05,
            drop_rate: 0.1,
            spurious_rate: 0.75,
            near_miss_rate: 0.5,
            top_k: 100,
            mode: SyntheticMode::General,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        for (name, v) in [
            ("jitter", self.jitter),
            ("drop_rate", self.drop_rate),
            ("spurious_rate", self.spurious_rate),
            ("near_miss_rate", self.near_miss_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.spurious_rate >= 1.0 {
            return bad("spurious_rate must be below 1".into());
        }
        if self.objects_min == 0 || self.objects_min > self.objects_max {
            return bad(format!("objects range {}..={} is empty or zero", self.objects_min, self.objects_max));
        }
        if self.relationships_min > self.relationships_max {
            return bad("relationships range is empty".into());
        }
        if self.relationships_min * 2 > self.objects_min {
            return bad("relationships_min needs two distinct objects per relationship".into());
        }
        if self.num_classes < 2 || self.num_predicates == 0 {
            return bad("need at least two classes and one predicate".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be positive".into());
        }
        Ok(())
    }

    pub fn scene_mode(&self) -> SceneMode {
        match self.mode {
            SyntheticMode::General => SceneMode::General,
            SyntheticMode::Hoi => SceneMode::Hoi { human_class_id: 0 },
        }
    }
}

const CANVAS: (f64, f64) = (800.0, 600.0);
const SIZE_RANGE: (f64, f64) = (40.0, 120.0);

fn overlaps_badly(b: &BBox, placed: &[BBox]) -> bool {
    placed
        .iter()
        .any(|p| p.contains(b) || b.contains(p) || iou(p, b) > 0.3)
}

fn random_box<R: Rng>(rng: &mut R) -> BBox {
    let w = rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1);
    let h = rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1);
    let x = rng.random_range(0.0..CANVAS.0 - w);
    let y = rng.random_range(0.0..CANVAS.1 - h);
    BBox::new(x, y, x + w, y + h).expect("positive size")
}

/// Object box adjacent to `s` on the side encoded by the predicate.
fn related_box<R: Rng>(s: &BBox, predicate: u32, rng: &mut R) -> BBox {
    let w = rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1);
    let h = rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1);
    let gap = rng.random_range(0.0..15.0);
    let (cx, cy) = s.center();
    let slide = rng.random_range(-0.25..0.25);
    let (x, y) = match predicate % 4 {
        0 => (s.x2() + gap, cy - h / 2.0 + slide * h),
        1 => (cx - w / 2.0 + slide * w, s.y2() + gap),
        2 => (s.x1() - gap - w, cy - h / 2.0 + slide * h),
        _ => (cx - w / 2.0 + slide * w, s.y1() - gap - h),
    };
    BBox::new(x, y, x + w, y + h).expect("positive size")
}

fn place<R: Rng>(rng: &mut R, placed: &[BBox], mut make: impl FnMut(&mut R) -> Vec<BBox>) -> Vec<BBox> {
    let mut candidate = make(rng);
    for _ in 0..50 {
        let mut ok = true;
        for (k, b) in candidate.iter().enumerate() {
            if overlaps_badly(b, placed) || overlaps_badly(b, &candidate[..k]) {
                ok = false;
            }
        }
        if ok {
            break;
        }
        candidate = make(rng);
    }
    candidate
}

fn jittered<R: Rng>(b: &BBox, sigma: f64, rng: &mut R) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    let nx = Normal::new(0.0, sigma * b.width()).expect("finite sigma");
    let ny = Normal::new(0.0, sigma * b.height()).expect("finite sigma");
    loop {
        let c = [
            b.x1() + nx.sample(rng),
            b.y1() + ny.sample(rng),
            b.x2() + nx.sample(rng),
            b.y2() + ny.sample(rng),
        ];
        if let Ok(out) = BBox::new(c[0], c[1], c[2], c[3]) {
            return out;
        }
    }
}

fn near_miss<R: Rng>(g: &BBox, rng: &mut R) -> BBox {
    let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let dx = sx * rng.random_range(0.4..0.8) * g.width();
    let dy = sy * rng.random_range(0.0..0.3) * g.height();
    let scale = rng.random_range(0.8..1.2);
    let (cx, cy) = g.center();
    let (w, h) = (g.width() * scale, g.height() * scale);
    BBox::new(cx + dx - w / 2.0, cy + dy - h / 2.0, cx + dx + w / 2.0, cy + dy + h / 2.0).expect("positive size")
}

fn generate_scene(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Scene {
    let n = rng.random_range(config.objects_min..=config.objects_max);
    let hoi = config.mode == SyntheticMode::Hoi;
    let humans = if hoi { (n / 4).max(1) } else { 0 };
    let cap = if hoi { humans.min(n - humans) } else { n / 2 };
    let r = rng
        .random_range(config.relationships_min..=config.relationships_max)
        .min(cap);

    // Relationships use disjoint objects; in HOI mode objects 0..humans
    // are the humans and each relationship takes one of them as subject.
    let mut boxes: Vec<BBox> = Vec::with_capacity(n);
    let mut slots: Vec<(usize, usize, u32)> = Vec::with_capacity(r);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for k in 0..r {
        let predicate = rng.random_range(0..config.num_predicates);
        let pair = place(rng, &boxes, |rng| {
            let s = random_box(rng);
            let o = related_box(&s, predicate, rng);
            vec![s, o]
        });
        let (si, oi) = if hoi { (k, humans + k) } else { (2 * k, 2 * k + 1) };
        slots.push((si, oi, predicate));
        order.push(si);
        order.push(oi);
        boxes.extend(pair);
    }
    let rest: Vec<usize> = (0..n).filter(|i| !order.contains(i)).collect();
    for &i in &rest {
        let b = place(rng, &boxes, |rng| vec![random_box(rng)]);
        order.push(i);
        boxes.extend(b);
    }
    // boxes[k] belongs to object order[k]
    let mut gt_boxes = vec![None; n];
    for (k, &obj) in order.iter().enumerate() {
        let class_id = if hoi {
            if obj < humans {
                0
            } else {
                rng.random_range(1..config.num_classes)
            }
        } else {
            rng.random_range(0..config.num_classes)
        };
        gt_boxes[obj] = Some(GtBox {
            bbox: boxes[k],
            class_id,
        });
    }
    let gt_boxes: Vec<GtBox> = gt_boxes.into_iter().map(|b| b.expect("every object placed")).collect();
    let relationships: Vec<Relationship> = slots
        .iter()
        .map(|&(subject, object, predicate)| Relationship {
            subject,
            object,
            predicate,
        })
        .collect();

    let mut detections = Vec::new();
    for g in &gt_boxes {
        if rng.random::<f64>() < config.drop_rate {
            continue;
        }
        let b = jittered(&g.bbox, config.jitter, rng);
        let quality = iou(&b, &g.bbox);
        let score = (0.55 + 0.45 * quality - rng.random_range(0.0..0.15)).clamp(0.0, 1.0);
        detections.push(Detection {
            bbox: b,
            class_id: g.class_id,
            score,
        });
    }
    let mut true_scores: Vec<f64> = detections.iter().map(|d| d.score).collect();
    true_scores.sort_by(f64::total_cmp);
    let median = true_scores.get(true_scores.len() / 2).copied().unwrap_or(0.5);
    let rate = config.spurious_rate;
    let n_spur = (detections.len().max(1) as f64 * rate / (1.0 - rate)).round() as usize;
    for _ in 0..n_spur {
        let near = rng.random::<f64>() < config.near_miss_rate;
        let anchor = gt_boxes[rng.random_range(0..gt_boxes.len())];
        let mut b = if near { near_miss(&anchor.bbox, rng) } else { random_box(rng) };
        for _ in 0..20 {
            if gt_boxes.iter().all(|g| iou(&g.bbox, &b) < 0.5) {
                break;
            }
            b = if near { near_miss(&anchor.bbox, rng) } else { random_box(rng) };
        }
        let class_id = if near && rng.random::<bool>() {
            anchor.class_id
        } else {
            rng.random_range(0..config.num_classes)
        };
        let score = rng.random_range(0.05..median.max(0.06));
        detections.push(Detection {
            bbox: b,
            class_id,
            score,
        });
    }
    detections.shuffle(rng);
    let gt = GroundTruth::new(gt_boxes, relationships).expect("indices in range");
    Scene::new(detections, gt, config.scene_mode()).expect("scores in range")
}

/// Deterministic synthetic scenes: ground-truth boxes without containment,
/// relationships with predicate-specific relative placement, detections as
/// jittered ground truth (some dropped) plus spurious boxes scored below
/// the median true-detection score.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<Scene>, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..config.scenes).map(|_| generate_scene(config, &mut rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub top_k: usize,
    pub per_scene: Vec<ClassDistribution>,
    pub aggregate: ClassDistribution,
}

impl StatsReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "top_k": self.top_k,
            "aggregate": self.aggregate.to_json(),
            "pos_ratio": self.aggregate.positive_ratio(),
            "rel_ratio": self.aggregate.rel_ratio(),
            "per_scene": self.per_scene.iter().map(ClassDistribution::to_json).collect::<Vec<_>>(),
        })
    }

    /// Histogram with columns `class,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,count\n");
        for class in crate::proposal::ProposalClass::ALL {
            out.push_str(&format!("{},{}\n", class.name(), self.aggregate.count(class)));
        }
        out
    }
}

pub fn stats_report(scenes: &[Scene], top_k: usize) -> StatsReport {
    use rayon::prelude::*;
    let per_scene: Vec<ClassDistribution> = scenes
        .par_iter()
        .map(|s| classify_scene(s, top_k).distribution)
        .collect();
    let mut aggregate = ClassDistribution::default();
    for d in &per_scene {
        aggregate.accumulate(d);
    }
    StatsReport {
        top_k,
        per_scene,
        aggregate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::fixtures::six_class_scene;
    use crate::proposal::ProposalClass;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gb(b: BBox, class_id: u32) -> GtBox {
        GtBox { bbox: b, class_id }
    }

    #[test]
    fn round_trip() {
        let scenes = generate_synthetic(&SyntheticConfig {
            scenes: 5,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let file = AnnotationFile::from_scenes(&scenes, SceneMode::General, None);
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_annotations(&text).unwrap().scenes().unwrap();
        assert_eq!(back, scenes);
    }

    #[test]
    fn dangling_index_names_record() {
        let text = r#"{"version":1,"mode":{"kind":"general"},"images":[
            {"gt_boxes":[[0,0,1,1,0]],"gt_relationships":[],"detections":[]},
            {"gt_boxes":[[0,0,1,1,0]],"gt_relationships":[[0,3,1]],"detections":[]}]}"#;
        let err = parse_annotations(text).unwrap().scenes().unwrap_err().to_string();
        assert!(err.contains("image 1"), "{err}");
        assert!(err.contains("gt_relationships[0]"), "{err}");
    }

    #[test]
    fn schema_errors() {
        let wrong_version = r#"{"version":2,"mode":{"kind":"general"},"images":[]}"#;
        assert!(matches!(parse_annotations(wrong_version), Err(DataError::Version { found: 2 })));
        let bad_box = r#"{"version":1,"mode":{"kind":"general"},"images":[
            {"gt_boxes":[[5,0,1,1,0]]}]}"#;
        let err = parse_annotations(bad_box).unwrap().scenes().unwrap_err().to_string();
        assert!(err.contains("gt_boxes[0]"), "{err}");
        let bad_shape = r#"{"version":1,"mode":{"kind":"general"},"images":[{"gt_boxes":[[0,0,1]]}]}"#;
        assert!(parse_annotations(bad_shape).unwrap_err().to_string().contains("image 0"));
    }

    #[test]
    fn empty_relationships_give_no_positives() {
        let text = r#"{"version":1,"mode":{"kind":"general"},"images":[
            {"gt_boxes":[[0,0,10,10,0],[20,0,30,10,1]],"gt_relationships":[],
             "detections":[[0,0,10,10,0,0.9],[20,0,30,10,1,0.8]]}]}"#;
        let scenes = parse_annotations(text).unwrap().scenes().unwrap();
        assert_eq!(classify_scene(&scenes[0], 100).distribution.count(ProposalClass::Pos), 0);
    }

    #[test]
    fn invisible_objects_filled() {
        let raw = [
            RawTriplet { subject: 0, object: Some(1), predicate: 2 },
            RawTriplet { subject: 3, object: None, predicate: 1 },
        ];
        let filled = vcoco_fill_invisible(&raw);
        assert_eq!(filled.len(), 2);
        assert_eq!(filled[0], Relationship { subject: 0, object: 1, predicate: 2 });
        assert_eq!(filled[1], Relationship { subject: 3, object: 3, predicate: 1 });

        let text = r#"{"version":1,"mode":{"kind":"hoi","human_class_id":0},"images":[
            {"gt_boxes":[[0,0,10,10,0]],"gt_relationships":[[0,null,4]],"detections":[]}]}"#;
        let scene = &parse_annotations(text).unwrap().scenes().unwrap()[0];
        let r = scene.ground_truth.relationships()[0];
        assert_eq!((r.subject, r.object), (0, 0));
        let general = text.replace(r#"{"kind":"hoi","human_class_id":0}"#, r#"{"kind":"general"}"#);
        assert!(parse_annotations(&general).unwrap().scenes().is_err());
    }

    #[test]
    fn merge_identical_and_disjoint() {
        let a = bx(0., 0., 10., 10.);
        let boxes = [gb(a, 1), gb(a, 1), gb(bx(50., 50., 60., 60.), 1)];
        let rels = [
            Relationship { subject: 0, object: 2, predicate: 0 },
            Relationship { subject: 1, object: 2, predicate: 1 },
        ];
        let (merged, remap, r) = merge_hico_boxes(&boxes, &rels);
        assert_eq!(merged.len(), 2);
        assert_eq!(remap, vec![0, 0, 1]);
        assert_eq!(r, vec![
            Relationship { subject: 0, object: 1, predicate: 0 },
            Relationship { subject: 0, object: 1, predicate: 1 },
        ]);

        let disjoint = [gb(a, 1), gb(bx(20., 0., 30., 10.), 1)];
        assert_eq!(merge_hico_boxes(&disjoint, &[]).0, disjoint.to_vec());
        // same place, different class: kept apart
        let classes = [gb(a, 1), gb(a, 2)];
        assert_eq!(merge_hico_boxes(&classes, &[]).0.len(), 2);
    }

    #[test]
    fn merge_is_transitive() {
        // width-10 boxes offset by 2.5: IoU(a,b) = IoU(b,c) = 0.6, IoU(a,c) = 1/3
        let a = bx(0., 0., 10., 10.);
        let b = bx(2.5, 0., 12.5, 10.);
        let c = bx(5., 0., 15., 10.);
        assert!((iou(&a, &b) - 0.6).abs() < 1e-12);
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-12);
        let (merged, remap, _) = merge_hico_boxes(&[gb(a, 0), gb(b, 0), gb(c, 0)], &[]);
        assert_eq!(merged.len(), 1);
        assert_eq!(remap, vec![0, 0, 0]);
        assert_eq!(merged[0].bbox, b);
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SyntheticConfig { scenes: 4, seed: 9, ..SyntheticConfig::default() };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        assert_ne!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&SyntheticConfig { seed: 10, ..cfg }).unwrap()
        );
    }

    #[test]
    fn noiseless_generator_has_no_inaccurate_detections() {
        let cfg = SyntheticConfig {
            scenes: 10,
            jitter: 0.0,
            drop_rate: 0.0,
            spurious_rate: 0.0,
            ..SyntheticConfig::default()
        };
        let report = stats_report(&generate_synthetic(&cfg).unwrap(), 100);
        assert_eq!(report.aggregate.count(ProposalClass::Neg1), 0);
        assert_eq!(report.aggregate.count(ProposalClass::Neg2), 0);
        assert!(report.aggregate.count(ProposalClass::Pos) > 0);
    }

    #[test]
    fn infeasible_configs_rejected() {
        for cfg in [
            SyntheticConfig { objects_min: 0, objects_max: 0, ..SyntheticConfig::default() },
            SyntheticConfig { drop_rate: 1.5, ..SyntheticConfig::default() },
            SyntheticConfig { spurious_rate: 1.0, ..SyntheticConfig::default() },
            SyntheticConfig { relationships_min: 5, relationships_max: 2, ..SyntheticConfig::default() },
        ] {
            assert!(generate_synthetic(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn hoi_generator_uses_human_subjects() {
        let cfg = SyntheticConfig { scenes: 10, mode: SyntheticMode::Hoi, ..SyntheticConfig::default() };
        for s in generate_synthetic(&cfg).unwrap() {
            for r in s.ground_truth.relationships() {
                assert_eq!(s.ground_truth.boxes()[r.subject].class_id, 0);
                assert_ne!(s.ground_truth.boxes()[r.object].class_id, 0);
            }
        }
    }

    #[test]
    fn stats_hand_tally() {
        let report = stats_report(&[six_class_scene()], 100);
        assert_eq!(report.aggregate.counts, [1, 2, 20, 2, 12, 5]);
        assert_eq!(report.to_csv(), "class,count\nPOS,1\nNEG1,2\nNEG2,20\nNEG3,2\nNEG4,12\nNEG5,5\n");
        assert_eq!(report.to_json()["aggregate"]["NEG4"], 12);
    }

    #[test]
    fn full_coverage_rel_ratio_is_one() {
        let boxes = vec![gb(bx(0., 0., 10., 10.), 0), gb(bx(20., 0., 30., 10.), 1)];
        let dets = boxes
            .iter()
            .map(|g| Detection { bbox: g.bbox, class_id: g.class_id, score: 0.9 })
            .collect();
        let gt = GroundTruth::new(boxes, vec![Relationship { subject: 0, object: 1, predicate: 0 }]).unwrap();
        let scene = Scene::new(dets, gt, SceneMode::General).unwrap();
        assert_eq!(stats_report(&[scene], 100).aggregate.rel_ratio(), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_boxes() -> impl Strategy<Value = Vec<GtBox>> {
            prop::collection::vec((0.0..50.0f64, 0.0..50.0f64, 5.0..20.0f64, 5.0..20.0f64, 0u32..2), 0..10)
                .prop_map(|v| v.into_iter().map(|(x, y, w, h, c)| gb(bx(x, y, x + w, y + h), c)).collect())
        }

        proptest! {
            #[test]
            fn merge_idempotent(boxes in arb_boxes()) {
                let (once, _, _) = merge_hico_boxes(&boxes, &[]);
                let (twice, remap, _) = merge_hico_boxes(&once, &[]);
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(remap, (0..once.len()).collect::<Vec<_>>());
            }

            #[test]
            fn fill_preserves_count(raw in prop::collection::vec((0usize..5, prop::option::of(0usize..5), 0u32..3), 0..10)) {
                let t: Vec<RawTriplet> = raw.iter().map(|&(s, o, p)| RawTriplet { subject: s, object: o, predicate: p }).collect();
                let f = vcoco_fill_invisible(&t);
                prop_assert_eq!(f.len(), t.len());
                for (a, b) in t.iter().zip(&f) {
                    prop_assert_eq!(b.object, a.object.unwrap_or(a.subject));
                }
            }
        }
    }
}
