//! Relationship and HOI detection metrics.
//!
//! Matching is greedy in score order: each prediction takes the unmatched
//! ground-truth triplet it overlaps best, and every ground-truth triplet can
//! be credited once per metric computation. AP is the exact area under the
//! precision envelope (all-point interpolation).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, union_box, BBox};
use crate::pipeline::TripletPrediction;
use crate::proposal::{Scene, DEFAULT_IOU_THRESHOLD};

pub const AP_CONVENTION: &str = "all-point";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// subject and object boxes matched separately
    Relationship,
    /// union boxes matched
    Phrase,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relationship" | "rel" => Ok(Task::Relationship),
            "phrase" => Ok(Task::Phrase),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Relationship => "relationship",
            Task::Phrase => "phrase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    Default,
    KnownObjects,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtTriplet {
    pub subject_box: BBox,
    pub object_box: BBox,
    pub subject_class: u32,
    pub object_class: u32,
    pub predicate: u32,
}

/// Ground-truth triplets of a scene, in relationship order.
pub fn gt_triplets(scene: &Scene) -> Vec<GtTriplet> {
    let boxes = scene.ground_truth.boxes();
    scene
        .ground_truth
        .relationships()
        .iter()
        .map(|r| GtTriplet {
            subject_box: boxes[r.subject].bbox,
            object_box: boxes[r.object].bbox,
            subject_class: boxes[r.subject].class_id,
            object_class: boxes[r.object].class_id,
            predicate: r.predicate,
        })
        .collect()
}

/// Overlap used to rank candidate matches: the smaller of the two box IoUs
/// for relationships, the union-box IoU for phrases. `None` when the
/// prediction does not match.
pub fn match_quality(pred: &TripletPrediction, gt: &GtTriplet, task: Task) -> Option<f64> {
    if pred.predicate != gt.predicate {
        return None;
    }
    let q = match task {
        Task::Relationship => iou(&pred.subject_box, &gt.subject_box).min(iou(&pred.object_box, &gt.object_box)),
        Task::Phrase => iou(
            &union_box(&pred.subject_box, &pred.object_box),
            &union_box(&gt.subject_box, &gt.object_box),
        ),
    };
    (q >= DEFAULT_IOU_THRESHOLD).then_some(q)
}

pub fn match_triplet(pred: &TripletPrediction, gt: &GtTriplet, task: Task) -> bool {
    match_quality(pred, gt, task).is_some()
}

/// Best unmatched ground truth for `pred`; ties go to the lower index.
fn best_match(pred: &TripletPrediction, gts: &[GtTriplet], used: &[bool], task: Task) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, gt) in gts.iter().enumerate() {
        if used[k] {
            continue;
        }
        if let Some(q) = match_quality(pred, gt, task) {
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((k, q));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Fraction of ground-truth triplets matched by the first `n` predictions
/// of each image. Predictions must already be sorted by score. Returns 0
/// when there is no ground truth at all.
pub fn recall_at_n(predictions: &[Vec<TripletPrediction>], gts: &[Vec<GtTriplet>], n: usize, task: Task) -> f64 {
    assert_eq!(predictions.len(), gts.len(), "one prediction list per image");
    let mut hit = 0usize;
    let mut total = 0usize;
    for (preds, gt) in predictions.iter().zip(gts) {
        total += gt.len();
        let mut used = vec![false; gt.len()];
        for p in preds.iter().take(n) {
            if let Some(k) = best_match(p, gt, &used, task) {
                used[k] = true;
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(precision, recall)` after each prediction in score order
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// All-point AP over predictions from many images. `predictions` pairs an
/// image index with a prediction. Unmatched predictions are false
/// positives. Returns `None` when there is no ground truth.
pub fn average_precision(
    predictions: &[(usize, &TripletPrediction)],
    gts: &[Vec<GtTriplet>],
    task: Task,
) -> Option<PrCurve> {
    let npos: usize = gts.iter().map(Vec::len).sum();
    if npos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].1.score.total_cmp(&predictions[a].1.score));
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        let (img, pred) = predictions[i];
        if let Some(k) = best_match(pred, &gts[img], &used[img], task) {
            used[img][k] = true;
            tp += 1;
        }
        points.push((tp as f64 / (rank + 1) as f64, tp as f64 / npos as f64));
    }
    Some(PrCurve {
        ap: area_under(&points),
        points,
    })
}

fn area_under(points: &[(f64, f64)]) -> f64 {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.0).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(_, r)) in points.iter().enumerate() {
        ap += (r - prev_recall) * envelope[i];
        prev_recall = r;
    }
    ap
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleReport {
    pub per_verb: BTreeMap<u32, f64>,
    pub mean: f64,
    /// predicted verbs without ground-truth instances, left out of the mean
    pub excluded: Vec<u32>,
}

/// Per-verb AP with the relationship matcher, averaged over the verbs
/// present in the ground truth.
pub fn ap_role(predictions: &[Vec<TripletPrediction>], gts: &[Vec<GtTriplet>]) -> RoleReport {
    assert_eq!(predictions.len(), gts.len(), "one prediction list per image");
    let gt_verbs: BTreeSet<u32> = gts.iter().flatten().map(|g| g.predicate).collect();
    let pred_verbs: BTreeSet<u32> = predictions.iter().flatten().map(|p| p.predicate).collect();
    let mut per_verb = BTreeMap::new();
    for &v in &gt_verbs {
        let preds: Vec<(usize, &TripletPrediction)> = indexed(predictions)
            .filter(|(_, p)| p.predicate == v)
            .collect();
        let gt_v: Vec<Vec<GtTriplet>> = gts
            .iter()
            .map(|g| g.iter().filter(|t| t.predicate == v).copied().collect())
            .collect();
        let ap = average_precision(&preds, &gt_v, Task::Relationship).map_or(0.0, |c| c.ap);
        per_verb.insert(v, ap);
    }
    RoleReport {
        mean: mean(per_verb.values().copied()),
        per_verb,
        excluded: pred_verbs.difference(&gt_verbs).copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HicoReport {
    pub mode: MapMode,
    /// `(verb, object class, AP)` for every pair present in the ground truth
    pub per_pair: Vec<(u32, u32, f64)>,
    pub mean: f64,
}

/// AP per (verb, object category) pair. Candidates for a pair are the
/// predictions with that verb and that predicted object class. In
/// known-objects mode only images whose ground truth contains an object of
/// the category take part.
pub fn hico_map(predictions: &[Vec<TripletPrediction>], gts: &[Vec<GtTriplet>], mode: MapMode) -> HicoReport {
    assert_eq!(predictions.len(), gts.len(), "one prediction list per image");
    let pairs: BTreeSet<(u32, u32)> = gts.iter().flatten().map(|g| (g.predicate, g.object_class)).collect();
    let mut per_pair = Vec::with_capacity(pairs.len());
    for &(v, c) in &pairs {
        let allowed: Vec<bool> = gts
            .iter()
            .map(|g| match mode {
                MapMode::Default => true,
                MapMode::KnownObjects => g.iter().any(|t| t.object_class == c),
            })
            .collect();
        let preds: Vec<(usize, &TripletPrediction)> = indexed(predictions)
            .filter(|(img, p)| allowed[*img] && p.predicate == v && p.object_class == c)
            .collect();
        let gt_vc: Vec<Vec<GtTriplet>> = gts
            .iter()
            .map(|g| g.iter().filter(|t| t.predicate == v && t.object_class == c).copied().collect())
            .collect();
        let ap = average_precision(&preds, &gt_vc, Task::Relationship).map_or(0.0, |r| r.ap);
        per_pair.push((v, c, ap));
    }
    HicoReport {
        mode,
        mean: mean(per_pair.iter().map(|p| p.2)),
        per_pair,
    }
}

fn indexed(predictions: &[Vec<TripletPrediction>]) -> impl Iterator<Item = (usize, &TripletPrediction)> {
    predictions
        .iter()
        .enumerate()
        .flat_map(|(img, ps)| ps.iter().map(move |p| (img, p)))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Keeps the `k` highest-`s_cls` predicates of every (subject, object)
/// pair, then re-sorts by score. Stable for equal values.
pub fn filter_predicate_top_k(predictions: &[TripletPrediction], k: usize) -> Vec<TripletPrediction> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].s_cls.total_cmp(&predictions[a].s_cls));
    let mut kept: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut keep = vec![false; predictions.len()];
    for i in order {
        let p = &predictions[i];
        let c = kept.entry((p.subject, p.object)).or_default();
        if *c < k {
            *c += 1;
            keep[i] = true;
        }
    }
    let mut out: Vec<TripletPrediction> = predictions
        .iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(*p))
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// One line of a prediction dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image: usize,
    #[serde(flatten)]
    pub prediction: TripletPrediction,
}

/// Splits records into per-image lists sorted by score (stable).
pub fn group_by_image(records: &[PredictionRecord], images: usize) -> Vec<Vec<TripletPrediction>> {
    let mut out = vec![Vec::new(); images];
    for r in records {
        if r.image < images {
            out[r.image].push(r.prediction);
        }
    }
    for v in &mut out {
        v.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricEntry {
    pub metric: String,
    pub config: serde_json::Value,
    pub value: f64,
}
