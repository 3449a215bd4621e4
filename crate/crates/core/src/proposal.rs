//! Relationship proposals and their six-way taxonomy.
//!
//! A proposal is an ordered (subject, object) pair of detections. Every
//! proposal is either positive (it localizes a ground-truth associated pair)
//! or falls into exactly one of five negative classes, ordered roughly from
//! easiest to hardest:
//!
//! | class | subject / object |
//! |-------|------------------|
//! | NEG1  | both detections inaccurate |
//! | NEG2  | exactly one detection inaccurate |
//! | NEG3  | both accurate, neither takes part in any relationship |
//! | NEG4  | both accurate, only one takes part in a relationship |
//! | NEG5  | both take part in relationships, but not with each other |
//!
//! "Accurate" means the box reaches the IoU threshold against some
//! ground-truth box ([`f_box`]); "takes part in a relationship" means it
//! reaches the threshold against the subject or object box of some
//! ground-truth relationship ([`f_rel`]).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, max_iou_pair, BBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("detection {index}: score {score} outside [0, 1]")]
    Score { index: usize, score: f64 },
    #[error("relationship {index}: box index {box_index} out of range ({len} ground-truth boxes)")]
    DanglingIndex {
        index: usize,
        box_index: usize,
        len: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: u32, score: f64) -> Result<Self, SceneError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(SceneError::Score { index: 0, score });
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub bbox: BBox,
    pub class_id: u32,
}

/// A ground-truth `[subject, predicate, object]` triplet over box indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relationship {
    pub subject: usize,
    pub object: usize,
    pub predicate: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    boxes: Vec<GtBox>,
    relationships: Vec<Relationship>,
}

impl GroundTruth {
    pub fn new(boxes: Vec<GtBox>, relationships: Vec<Relationship>) -> Result<Self, SceneError> {
        for (index, rel) in relationships.iter().enumerate() {
            for box_index in [rel.subject, rel.object] {
                if box_index >= boxes.len() {
                    return Err(SceneError::DanglingIndex {
                        index,
                        box_index,
                        len: boxes.len(),
                    });
                }
            }
        }
        Ok(Self {
            boxes,
            relationships,
        })
    }

    pub fn boxes(&self) -> &[GtBox] {
        &self.boxes
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    /// Distinct (subject, object) box-index pairs that carry at least one
    /// predicate.
    pub fn associations(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self
            .relationships
            .iter()
            .map(|r| (r.subject, r.object))
            .collect();
        set.into_iter().collect()
    }

    /// Predicates attached to the association `(subject, object)`.
    pub fn predicates_of(&self, subject: usize, object: usize) -> impl Iterator<Item = u32> + '_ {
        self.relationships
            .iter()
            .filter(move |r| r.subject == subject && r.object == object)
            .map(|r| r.predicate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SceneMode {
    /// Any detection may be a subject or an object.
    General,
    /// Subjects are restricted to detections of the human class.
    Hoi { human_class_id: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub detections: Vec<Detection>,
    pub ground_truth: GroundTruth,
    pub mode: SceneMode,
}

impl Scene {
    pub fn new(
        detections: Vec<Detection>,
        ground_truth: GroundTruth,
        mode: SceneMode,
    ) -> Result<Self, SceneError> {
        for (index, d) in detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(SceneError::Score {
                    index,
                    score: d.score,
                });
            }
        }
        Ok(Self {
            detections,
            ground_truth,
            mode,
        })
    }
}

/// Ordered pair of detection indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Proposal {
    pub subject: usize,
    pub object: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProposalClass {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NEG1")]
    Neg1,
    #[serde(rename = "NEG2")]
    Neg2,
    #[serde(rename = "NEG3")]
    Neg3,
    #[serde(rename = "NEG4")]
    Neg4,
    #[serde(rename = "NEG5")]
    Neg5,
}

impl ProposalClass {
    pub const ALL: [ProposalClass; 6] = [
        ProposalClass::Pos,
        ProposalClass::Neg1,
        ProposalClass::Neg2,
        ProposalClass::Neg3,
        ProposalClass::Neg4,
        ProposalClass::Neg5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ProposalClass::Pos => "POS",
            ProposalClass::Neg1 => "NEG1",
            ProposalClass::Neg2 => "NEG2",
            ProposalClass::Neg3 => "NEG3",
            ProposalClass::Neg4 => "NEG4",
            ProposalClass::Neg5 => "NEG5",
        }
    }

    pub fn is_positive(self) -> bool {
        self == ProposalClass::Pos
    }

    /// NEG3..NEG5: both boxes are accurate, the association is wrong.
    pub fn is_hard_negative(self) -> bool {
        matches!(
            self,
            ProposalClass::Neg3 | ProposalClass::Neg4 | ProposalClass::Neg5
        )
    }
}

impl fmt::Display for ProposalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Indices of the `top_k` highest-scoring entries of `candidates`, ties kept
/// in input order.
fn top_k_by_score(detections: &[Detection], candidates: Vec<usize>, top_k: usize) -> Vec<usize> {
    let mut sorted = candidates;
    // sort_by is stable
    sorted.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    sorted.truncate(top_k);
    sorted
}

/// The truncated subject and object detection sets of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSets {
    pub subjects: Vec<usize>,
    pub objects: Vec<usize>,
}

impl ProposalSets {
    pub fn new(scene: &Scene, top_k: usize) -> Self {
        let all: Vec<usize> = (0..scene.detections.len()).collect();
        let objects = top_k_by_score(&scene.detections, all.clone(), top_k);
        let subjects = match scene.mode {
            SceneMode::General => objects.clone(),
            SceneMode::Hoi { human_class_id } => {
                let humans = all
                    .into_iter()
                    .filter(|&i| scene.detections[i].class_id == human_class_id)
                    .collect();
                top_k_by_score(&scene.detections, humans, top_k)
            }
        };
        Self { subjects, objects }
    }

    /// Sorted, deduplicated union of subject and object detections.
    pub fn nodes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.subjects.iter().chain(&self.objects).copied().collect();
        set.into_iter().collect()
    }

    pub fn proposals(&self, mode: SceneMode) -> Vec<Proposal> {
        let allow_self = matches!(mode, SceneMode::Hoi { .. });
        let mut out = Vec::with_capacity(self.subjects.len() * self.objects.len());
        for &s in &self.subjects {
            for &o in &self.objects {
                if s != o || allow_self {
                    out.push(Proposal {
                        subject: s,
                        object: o,
                    });
                }
            }
        }
        out
    }
}

/// All subject x object pairs over the `top_k` highest-scoring detections.
/// Self-pairs are dropped in general mode and kept in HOI mode, where
/// `(b, b)` encodes an interaction with an invisible object.
pub fn generate_proposals(scene: &Scene, top_k: usize) -> Vec<Proposal> {
    ProposalSets::new(scene, top_k).proposals(scene.mode)
}

/// True iff `b` reaches `threshold` IoU with some ground-truth box.
pub fn f_box(b: &BBox, gt: &GroundTruth, threshold: f64) -> bool {
    gt.boxes.iter().any(|g| iou(b, &g.bbox) >= threshold)
}

/// True iff `b` reaches `threshold` IoU with either box of some ground-truth
/// relationship. Role-agnostic: matching only the object slot counts.
pub fn f_rel(b: &BBox, gt: &GroundTruth, threshold: f64) -> bool {
    gt.relationships.iter().any(|r| {
        max_iou_pair(b, (&gt.boxes[r.subject].bbox, &gt.boxes[r.object].bbox)) >= threshold
    })
}

/// Per-scene classifier with the detection predicates computed once.
#[derive(Debug, Clone)]
pub struct ProposalClassifier<'a> {
    scene: &'a Scene,
    /// ground-truth boxes each detection localizes
    matches: Vec<Vec<usize>>,
    f_box: Vec<bool>,
    f_rel: Vec<bool>,
    associations: BTreeSet<(usize, usize)>,
}

impl<'a> ProposalClassifier<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        Self::with_threshold(scene, DEFAULT_IOU_THRESHOLD)
    }

    pub fn with_threshold(scene: &'a Scene, threshold: f64) -> Self {
        let gt = &scene.ground_truth;
        let in_relationship: BTreeSet<usize> = gt
            .relationships
            .iter()
            .flat_map(|r| [r.subject, r.object])
            .collect();
        let matches: Vec<Vec<usize>> = scene
            .detections
            .iter()
            .map(|d| {
                gt.boxes
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| iou(&d.bbox, &g.bbox) >= threshold)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let f_box = matches.iter().map(|m| !m.is_empty()).collect();
        let f_rel = matches
            .iter()
            .map(|m| m.iter().any(|g| in_relationship.contains(g)))
            .collect();
        Self {
            scene,
            matches,
            f_box,
            f_rel,
            associations: gt.associations().into_iter().collect(),
        }
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    pub fn f_box(&self, detection: usize) -> bool {
        self.f_box[detection]
    }

    pub fn f_rel(&self, detection: usize) -> bool {
        self.f_rel[detection]
    }

    /// Ground-truth associations `(g1, g2)` localized by the proposal.
    pub fn matched_associations(&self, p: Proposal) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &g1 in &self.matches[p.subject] {
            for &g2 in &self.matches[p.object] {
                if self.associations.contains(&(g1, g2)) {
                    out.push((g1, g2));
                }
            }
        }
        out
    }

    pub fn is_positive(&self, p: Proposal) -> bool {
        self.matches[p.subject].iter().any(|&g1| {
            self.matches[p.object]
                .iter()
                .any(|&g2| self.associations.contains(&(g1, g2)))
        })
    }

    pub fn classify(&self, p: Proposal) -> ProposalClass {
        if self.is_positive(p) {
            return ProposalClass::Pos;
        }
        let (b1, b2) = (self.f_box[p.subject], self.f_box[p.object]);
        let (r1, r2) = (self.f_rel[p.subject], self.f_rel[p.object]);
        match (b1, b2) {
            (false, false) => ProposalClass::Neg1,
            (true, false) | (false, true) => ProposalClass::Neg2,
            (true, true) => match (r1, r2) {
                (false, false) => ProposalClass::Neg3,
                (true, true) => ProposalClass::Neg5,
                _ => ProposalClass::Neg4,
            },
        }
    }

    /// Sorted predicate ids of every ground-truth relationship the proposal
    /// localizes; empty for negatives.
    pub fn positive_predicates(&self, p: Proposal) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .matched_associations(p)
            .into_iter()
            .flat_map(|(g1, g2)| self.scene.ground_truth.predicates_of(g1, g2))
            .collect();
        set.into_iter().collect()
    }
}

pub fn classify(proposal: Proposal, scene: &Scene) -> ProposalClass {
    ProposalClassifier::new(scene).classify(proposal)
}

/// Membership of the proposal in each of POS, NEG1..NEG5, evaluated by
/// direct enumeration over the ground truth with no shared state.
pub fn class_memberships(proposal: Proposal, scene: &Scene, threshold: f64) -> [bool; 6] {
    let gt = &scene.ground_truth;
    let b1 = &scene.detections[proposal.subject].bbox;
    let b2 = &scene.detections[proposal.object].bbox;

    let mut pos = false;
    for r in &gt.relationships {
        let g1 = &gt.boxes[r.subject].bbox;
        let g2 = &gt.boxes[r.object].bbox;
        if iou(b1, g1).min(iou(b2, g2)) >= threshold {
            pos = true;
        }
    }
    let fb1 = f_box(b1, gt, threshold);
    let fb2 = f_box(b2, gt, threshold);
    let fr1 = f_rel(b1, gt, threshold);
    let fr2 = f_rel(b2, gt, threshold);

    let neg1 = !fb1 && !fb2;
    let neg2 = (!fb1 && fb2) || (fb1 && !fb2);
    let neg3 = fb1 && !fr1 && fb2 && !fr2;
    let neg4 = (fr1 && fb2 && !fr2) || (fb1 && !fr1 && fr2);
    let neg5 = fr1 && fr2 && !pos;
    [pos, neg1, neg2, neg3, neg4, neg5]
}

/// Independent classification path: no per-detection caching. Panics if
/// the memberships do not form a partition, which would mean the taxonomy
/// itself is broken.
pub fn classify_oracle(proposal: Proposal, scene: &Scene) -> ProposalClass {
    let m = class_memberships(proposal, scene, DEFAULT_IOU_THRESHOLD);
    let hits: Vec<usize> = (0..6).filter(|&i| m[i]).collect();
    assert_eq!(hits.len(), 1, "proposal {proposal:?} memberships {m:?}");
    ProposalClass::ALL[hits[0]]
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassDistribution {
    /// indexed by [`ProposalClass::index`]
    pub counts: [usize; 6],
    pub d_pos: usize,
    pub d_rel: usize,
    pub total: usize,
}

impl ClassDistribution {
    pub fn count(&self, class: ProposalClass) -> usize {
        self.counts[class.index()]
    }

    pub fn negatives(&self) -> usize {
        self.total - self.count(ProposalClass::Pos)
    }

    pub fn positive_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(ProposalClass::Pos) as f64 / self.total as f64
        }
    }

    pub fn rel_ratio(&self) -> f64 {
        if self.d_pos == 0 {
            0.0
        } else {
            self.d_rel as f64 / self.d_pos as f64
        }
    }

    pub fn accumulate(&mut self, other: &ClassDistribution) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.d_pos += other.d_pos;
        self.d_rel += other.d_rel;
        self.total += other.total;
    }

    /// `{"POS": n, "NEG1": n, ...}` plus the detection-level counts.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for class in ProposalClass::ALL {
            map.insert(class.name().to_string(), self.count(class).into());
        }
        map.insert("total".into(), self.total.into());
        map.insert("d_pos".into(), self.d_pos.into());
        map.insert("d_rel".into(), self.d_rel.into());
        serde_json::Value::Object(map)
    }
}

/// A scene's proposals together with their classes.
#[derive(Debug, Clone)]
pub struct ClassifiedProposals {
    pub proposals: Vec<Proposal>,
    pub classes: Vec<ProposalClass>,
    pub distribution: ClassDistribution,
}

pub fn classify_scene(scene: &Scene, top_k: usize) -> ClassifiedProposals {
    classify_scene_with_threshold(scene, top_k, DEFAULT_IOU_THRESHOLD)
}

pub fn classify_scene_with_threshold(
    scene: &Scene,
    top_k: usize,
    threshold: f64,
) -> ClassifiedProposals {
    let sets = ProposalSets::new(scene, top_k);
    let proposals = sets.proposals(scene.mode);
    let classifier = ProposalClassifier::with_threshold(scene, threshold);
    let classes: Vec<ProposalClass> = proposals.iter().map(|&p| classifier.classify(p)).collect();

    let mut counts = [0usize; 6];
    let mut related = BTreeSet::new();
    for (p, c) in proposals.iter().zip(&classes) {
        counts[c.index()] += 1;
        if c.is_positive() {
            related.insert(p.subject);
            related.insert(p.object);
        }
    }
    let d_pos = sets.nodes().into_iter().filter(|&i| classifier.f_box(i)).count();
    let distribution = ClassDistribution {
        counts,
        d_pos,
        d_rel: related.len(),
        total: proposals.len(),
    };
    ClassifiedProposals {
        proposals,
        classes,
        distribution,
    }
}

pub fn distribution(scene: &Scene, top_k: usize) -> ClassDistribution {
    classify_scene(scene, top_k).distribution
}

/// Hand-built scenes with known proposal classes.
pub mod fixtures {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Six ground-truth boxes on a row, relationships (g1, g2, 0) and
    /// (g5, g6, 1) (0-based: (0, 1) and (4, 5)).
    ///
    /// Detections (index: target):
    /// 0 -> g1, 1 -> g2, 2 -> nothing, 3 -> g3, 4 -> g4, 5 -> g6,
    /// 6 -> nothing (second spurious box).
    pub fn six_class_scene() -> Scene {
        let g: Vec<GtBox> = (0..6)
            .map(|i| GtBox {
                bbox: bx(i as f64 * 20.0, 0.0, i as f64 * 20.0 + 10.0, 10.0),
                class_id: i as u32,
            })
            .collect();
        let rels = vec![
            Relationship {
                subject: 0,
                object: 1,
                predicate: 0,
            },
            Relationship {
                subject: 4,
                object: 5,
                predicate: 1,
            },
        ];
        let gt = GroundTruth::new(g.clone(), rels).unwrap();
        let shifted = |i: usize| {
            let b = g[i].bbox;
            bx(b.x1() + 1.0, b.y1(), b.x2() + 1.0, b.y2())
        };
        let dets = vec![
            Detection::new(shifted(0), 0, 0.9).unwrap(),
            Detection::new(shifted(1), 1, 0.8).unwrap(),
            Detection::new(bx(0.0, 100.0, 10.0, 110.0), 7, 0.3).unwrap(),
            Detection::new(shifted(2), 2, 0.7).unwrap(),
            Detection::new(shifted(3), 3, 0.6).unwrap(),
            Detection::new(shifted(5), 5, 0.5).unwrap(),
            Detection::new(bx(50.0, 100.0, 60.0, 110.0), 7, 0.2).unwrap(),
        ];
        Scene::new(dets, gt, SceneMode::General).unwrap()
    }
}
