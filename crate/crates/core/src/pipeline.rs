//! Toy end-to-end relationship model.
//!
//! Detections become graph nodes with hand-made geometric features (a
//! stand-in for appearance features), pairs get union-box features, one
//! MH-GAT layer adds context, and each proposal's `[subject, object, union]`
//! concatenation feeds a sigmoid-per-predicate classifier and the spatial
//! mask head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, union_box, BBox};
use crate::mhgat::{MhGat, MhGatConfig};
use crate::numeric::losses::{bce, focal_loss};
use crate::numeric::{checkpoint, Graph, Linear, LrSchedule, NumericError, ParamSet, Sgd, Tensor, Var};
use crate::numeric::BoundParams;
use crate::proposal::{classify_scene, ProposalClass, ProposalClassifier, ProposalSets, Proposal, Scene};
use crate::sampling::{assign_weights, ohem_select, sample_batch, SamplerConfig, SamplingError, Strategy};
use crate::smd::{mask_target, SmdHead};

/// Geometric slots at the front of every node feature.
pub const NODE_GEOMETRY_DIM: usize = 8;
/// Geometric slots at the front of every union feature.
pub const EDGE_GEOMETRY_DIM: usize = 14;

const CLASS_EMBED_SEED: u64 = 0x5eed_c1a5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("predicate {predicate} outside the model's {num_predicates} predicates")]
    PredicateOutOfRange { predicate: u32, num_predicates: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub dim: usize,
    /// standard deviation of the per-detection noise slots
    pub noise: f64,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Node features for every detection in the proposal node set and union
/// features for every ordered node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipFeatures {
    /// detection index of each node row, ascending
    pub nodes: Vec<usize>,
    /// `[n x d]`
    pub node_features: Tensor,
    /// `[n*n x d]`, row `i * n + j` for the pair (node i, node j)
    pub edge_features: Tensor,
}

impl RelationshipFeatures {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_of(&self, detection: usize) -> Option<usize> {
        self.nodes.binary_search(&detection).ok()
    }

    /// Edge row of a proposal.
    pub fn pair_row(&self, p: Proposal) -> Option<usize> {
        Some(self.node_of(p.subject)? * self.len() + self.node_of(p.object)?)
    }

    /// `(subject, object, union)` feature rows of a proposal.
    pub fn pair(&self, p: Proposal) -> Option<(&[f64], &[f64], &[f64])> {
        let (s, o) = (self.node_of(p.subject)?, self.node_of(p.object)?);
        Some((
            self.node_features.row(s),
            self.node_features.row(o),
            self.edge_features.row(s * self.len() + o),
        ))
    }
}

fn fit(mut v: Vec<f64>, dim: usize) -> Vec<f64> {
    v.resize(dim, 0.0);
    v
}

fn class_embedding(class_id: u32, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(CLASS_EMBED_SEED ^ u64::from(class_id).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn normalized(b: &BBox, frame: &BBox) -> [f64; 4] {
    let (w, h) = (frame.width(), frame.height());
    [
        (b.x1() - frame.x1()) / w,
        (b.y1() - frame.y1()) / h,
        (b.x2() - frame.x1()) / w,
        (b.y2() - frame.y1()) / h,
    ]
}

/// Deterministic features for the `top_k` node set of a scene. Node rows
/// hold normalized box geometry and score, a class embedding, and
/// `dim / 8` noise slots keyed by `(seed, detection index)`. Union rows hold
/// the union box and the relative geometry of the pair. Both are truncated
/// or zero-padded to `dim`.
pub fn extract_toy_features(scene: &Scene, top_k: usize, config: &FeatureConfig) -> RelationshipFeatures {
    let d = config.dim;
    let nodes = ProposalSets::new(scene, top_k).nodes();
    let n = nodes.len();
    let boxes: Vec<&BBox> = nodes.iter().map(|&i| &scene.detections[i].bbox).collect();
    let frame = boxes
        .iter()
        .skip(1)
        .fold(boxes.first().map(|b| **b), |acc, b| acc.map(|a| union_box(&a, b)));

    let noise_len = d / 8;
    let embed_len = d.saturating_sub(NODE_GEOMETRY_DIM + noise_len);
    let mut node_data = Vec::with_capacity(n * d);
    for (&det, b) in nodes.iter().zip(&boxes) {
        let frame = frame.expect("non-empty");
        let detection = &scene.detections[det];
        let mut v = normalized(b, &frame).to_vec();
        v.push((b.width() / b.height()).ln());
        v.push((b.area() / frame.area()).sqrt());
        v.push(detection.score);
        v.push(1.0);
        v.extend(class_embedding(detection.class_id, embed_len));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(det as u64);
        v.extend((0..noise_len).map(|_| config.noise * Distribution::<f64>::sample(&StandardNormal, &mut rng)));
        v.truncate(d);
        node_data.extend(fit(v, d));
    }

    let mut edge_data = Vec::with_capacity(n * n * d);
    for (i, a) in boxes.iter().enumerate() {
        for (j, b) in boxes.iter().enumerate() {
            let u = union_box(a, b);
            let frame = frame.expect("non-empty");
            let (ca, cb) = (a.center(), b.center());
            let inter = a.intersection_area(b);
            let mut v = normalized(&u, &frame).to_vec();
            v.push((cb.0 - ca.0) / u.width());
            v.push((cb.1 - ca.1) / u.height());
            v.push((b.width() / a.width()).ln());
            v.push((b.height() / a.height()).ln());
            v.push(iou(a, b));
            v.push(inter / a.area());
            v.push(inter / b.area());
            v.push(if i == j { 1.0 } else { 0.0 });
            v.push((a.area() + b.area()) / u.area());
            v.push(((cb.0 - ca.0).hypot(cb.1 - ca.1) / (a.area() + b.area()).sqrt()).min(10.0));
            v.truncate(d);
            edge_data.extend(fit(v, d));
        }
    }
    RelationshipFeatures {
        nodes,
        node_features: Tensor::new(vec![n, d], node_data).expect("node shape"),
        edge_features: Tensor::new(vec![n * n, d], edge_data).expect("edge shape"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub features: FeatureConfig,
    pub heads: usize,
    pub num_predicates: usize,
    pub classifier_hidden: usize,
    pub smd_hidden: usize,
    pub lp: usize,
    /// false drops the MH-GAT layer (plain baseline)
    pub use_gnn: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            heads: 4,
            num_predicates: 4,
            classifier_hidden: 64,
            smd_hidden: 32,
            lp: crate::smd::DEFAULT_POOL_SIZE,
            use_gnn: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.features.dim == 0 {
            return bad("feature dimension must be positive");
        }
        if self.heads == 0 || self.heads > self.features.dim {
            return bad("heads must be in 1..=feature_dim");
        }
        if self.num_predicates == 0 {
            return bad("num_predicates must be positive");
        }
        if self.classifier_hidden == 0 || self.smd_hidden == 0 || self.lp == 0 {
            return bad("hidden sizes and lp must be positive");
        }
        if !(self.features.noise >= 0.0 && self.features.noise.is_finite()) {
            return bad("feature noise must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub node_encoder: Linear,
    pub edge_encoder: Linear,
    pub gat: MhGat,
    pub classifier: [Linear; 3],
    pub smd: SmdHead,
}

/// Recorded outputs for a batch of proposals.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `[b x num_predicates]`
    pub probs: Var,
    /// `[b x 2 lp^2]`
    pub masks: Var,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let d = config.features.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        let node_encoder = Linear::init(&mut params, "encoder.node", d, d, &mut rng);
        let edge_encoder = Linear::init(&mut params, "encoder.edge", d, d, &mut rng);
        let gat = MhGat::init(&mut params, "gat", MhGatConfig::new(d, config.heads), &mut rng);
        let h = config.classifier_hidden;
        let classifier = [
            Linear::init(&mut params, "cls.0", 3 * d, h, &mut rng),
            Linear::init(&mut params, "cls.1", h, h, &mut rng),
            Linear::init(&mut params, "cls.2", h, config.num_predicates, &mut rng),
        ];
        let smd = SmdHead::init(&mut params, "smd", 3 * d, config.smd_hidden, config.lp, &mut rng);
        Ok(Self {
            config,
            params,
            node_encoder,
            edge_encoder,
            gat,
            classifier,
            smd,
        })
    }

    pub fn features(&self, scene: &Scene, top_k: usize) -> RelationshipFeatures {
        extract_toy_features(scene, top_k, &self.config.features)
    }

    /// Records the forward pass for `batch` on `g`.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        features: &RelationshipFeatures,
        batch: &[Proposal],
    ) -> Result<ForwardOutput, PipelineError> {
        let n = features.len();
        let mut subj = Vec::with_capacity(batch.len());
        let mut obj = Vec::with_capacity(batch.len());
        let mut pair = Vec::with_capacity(batch.len());
        for &p in batch {
            let (s, o) = match (features.node_of(p.subject), features.node_of(p.object)) {
                (Some(s), Some(o)) => (s, o),
                _ => {
                    return Err(NumericError::IndexOutOfRange {
                        index: p.subject.max(p.object),
                        len: n,
                    }
                    .into())
                }
            };
            subj.push(s);
            obj.push(o);
            pair.push(s * n + o);
        }

        let x = g.constant(features.node_features.clone());
        let e = g.constant(features.edge_features.clone());
        let x = self.node_encoder.forward(g, bound, x)?;
        let x = g.relu(x);
        let e = self.edge_encoder.forward(g, bound, e)?;
        let e = g.relu(e);
        let x = if self.config.use_gnn {
            self.gat.forward(g, bound, x, e)?.nodes
        } else {
            x
        };

        let xs = g.gather_rows(x, &subj)?;
        let xo = g.gather_rows(x, &obj)?;
        let u = g.gather_rows(e, &pair)?;
        let joint = g.concat_cols(&[xs, xo, u])?;

        let mut h = self.classifier[0].forward(g, bound, joint)?;
        h = g.relu(h);
        h = self.classifier[1].forward(g, bound, h)?;
        h = g.relu(h);
        let logits = self.classifier[2].forward(g, bound, h)?;
        let probs = g.sigmoid(logits);
        let masks = self.smd.forward(g, bound, joint)?;
        Ok(ForwardOutput { probs, masks })
    }

    /// Forward values without keeping the graph.
    pub fn predict(&self, features: &RelationshipFeatures, batch: &[Proposal]) -> Result<(Tensor, Tensor), PipelineError> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let out = self.forward(&mut g, &bound, features, batch)?;
        Ok((g.value(out.probs).clone(), g.value(out.masks).clone()))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Vec<u8> {
        let meta = serde_json::json!({ "model": self.config, "extra": extra });
        checkpoint::encode(&meta.to_string(), &self.params)
    }

    /// Rebuilds a model from checkpoint bytes; also returns the `extra`
    /// metadata stored with it.
    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, serde_json::Value), PipelineError> {
        let ck = checkpoint::decode(bytes)?;
        let mut meta: serde_json::Value =
            serde_json::from_str(&ck.meta).map_err(|e| PipelineError::Checkpoint(format!("metadata: {e}")))?;
        let config: ModelConfig = serde_json::from_value(meta["model"].take())
            .map_err(|e| PipelineError::Checkpoint(format!("model config: {e}")))?;
        let mut model = Model::new(config)?;
        model.params.load_from(&ck.params)?;
        Ok((model, meta["extra"].take()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    Bce,
    Focal { alpha: f64, gamma: f64 },
}

/// Recorded loss terms; `total = cls + mask`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub cls: Var,
    pub mask: Var,
    pub total: Var,
}

/// Classification loss (BCE or focal, averaged over all label entries)
/// plus mean mask BCE.
pub fn total_loss(
    g: &mut Graph,
    out: ForwardOutput,
    labels: &Tensor,
    mask_targets: &Tensor,
    loss: LossKind,
) -> Result<LossTerms, NumericError> {
    let cls = match loss {
        LossKind::Bce => g.bce(out.probs, labels)?,
        LossKind::Focal { alpha, gamma } => g.focal(out.probs, labels, alpha, gamma)?,
    };
    let mask = g.bce(out.masks, mask_targets)?;
    let total = g.add(cls, mask)?;
    Ok(LossTerms { cls, mask, total })
}

/// Multi-hot targets `[b x num_predicates]`: the predicates of every
/// ground-truth relationship a positive proposal localizes; zeros for
/// negatives.
pub fn multi_hot_labels(
    classifier: &ProposalClassifier<'_>,
    batch: &[Proposal],
    num_predicates: usize,
) -> Result<Tensor, PipelineError> {
    let mut data = vec![0.0; batch.len() * num_predicates];
    for (row, &p) in batch.iter().enumerate() {
        for pred in classifier.positive_predicates(p) {
            let k = pred as usize;
            if k >= num_predicates {
                return Err(PipelineError::PredicateOutOfRange {
                    predicate: pred,
                    num_predicates,
                });
            }
            data[row * num_predicates + k] = 1.0;
        }
    }
    Ok(Tensor::new(vec![batch.len(), num_predicates], data)?)
}

/// Stacked mask targets `[b x 2 lp^2]`.
pub fn mask_targets(scene: &Scene, batch: &[Proposal], lp: usize) -> Tensor {
    let mut data = Vec::with_capacity(batch.len() * 2 * lp * lp);
    for p in batch {
        let m = mask_target(&scene.detections[p.subject].bbox, &scene.detections[p.object].bbox, lp);
        data.extend(m.to_tensor().into_data());
    }
    Tensor::new(vec![batch.len(), 2 * lp * lp], data).expect("mask shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_rate: f64,
    pub loss: LossKind,
    pub top_k: usize,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            lr: 0.05,
            momentum: 0.9,
            decay_epochs: vec![],
            decay_rate: 0.1,
            loss: LossKind::Bce,
            top_k: 100,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub scene: usize,
    pub loss: f64,
    pub cls: f64,
    pub mask: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub trace: Vec<StepRecord>,
    /// scenes skipped for lack of positive proposals, summed over epochs
    pub skipped: usize,
}

impl TrainOutput {
    pub fn losses(&self) -> Vec<f64> {
        self.trace.iter().map(|s| s.loss).collect()
    }
}

fn step_seed(base: u64, step: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One SGD step per scene per epoch on a batch chosen by the sampler.
/// Features are computed once per scene.
pub fn train(
    scenes: &[Scene],
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutput, PipelineError> {
    config.sampler.validate()?;
    let mut model = Model::new(model_config)?;
    let schedule = LrSchedule {
        base_lr: config.lr,
        decay_epochs: config.decay_epochs.clone(),
        decay_rate: config.decay_rate,
    };
    let mut opt = Sgd::new(schedule, config.momentum)?;
    let prepared: Vec<_> = scenes
        .par_iter()
        .map(|s| (classify_scene(s, config.top_k), model.features(s, config.top_k)))
        .collect();

    let mut trace = Vec::new();
    let mut skipped = 0;
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        opt.set_epoch(epoch);
        for (si, (scene, (classified, features))) in scenes.iter().zip(&prepared).enumerate() {
            if !classified.classes.iter().any(|c| c.is_positive()) {
                skipped += 1;
                log::warn!("scene {si}: no positive proposals, skipped");
                continue;
            }
            let seed = step_seed(config.sampler.seed, step);
            step += 1;
            let classifier = ProposalClassifier::new(scene);

            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let (out, labels, masks) = if config.sampler.strategy == Strategy::Ohem {
                let all = &classified.proposals;
                let out = model.forward(&mut g, &bound, features, all)?;
                let labels = multi_hot_labels(&classifier, all, model.config.num_predicates)?;
                let masks = mask_targets(scene, all, model.config.lp);
                let losses = per_proposal_loss(g.value(out.probs), g.value(out.masks), &labels, &masks, config.loss);
                let is_pos: Vec<bool> = classified.classes.iter().map(|c| c.is_positive()).collect();
                let chosen = ohem_select(
                    &is_pos,
                    &losses,
                    config.sampler.batch_size,
                    config.sampler.positive_ratio,
                    seed,
                )?;
                let probs = g.gather_rows(out.probs, &chosen)?;
                let mvar = g.gather_rows(out.masks, &chosen)?;
                (
                    ForwardOutput { probs, masks: mvar },
                    labels.gather_rows(&chosen)?,
                    masks.gather_rows(&chosen)?,
                )
            } else {
                let weights = assign_weights(&classified.classes, config.sampler.strategy, config.sampler.positive_ratio)?;
                let chosen = sample_batch(&weights, &SamplerConfig { seed, ..config.sampler })?;
                let batch: Vec<Proposal> = chosen.iter().map(|&i| classified.proposals[i]).collect();
                let out = model.forward(&mut g, &bound, features, &batch)?;
                (
                    out,
                    multi_hot_labels(&classifier, &batch, model.config.num_predicates)?,
                    mask_targets(scene, &batch, model.config.lp),
                )
            };
            let terms = total_loss(&mut g, out, &labels, &masks, config.loss)?;
            let grads = g.backward(terms.total)?;
            let grads: Vec<Tensor> = bound.vars().iter().map(|&v| grads.wrt(v)).collect();
            opt.step(&mut model.params, &grads)?;
            trace.push(StepRecord {
                epoch,
                scene: si,
                loss: g.value(terms.total).item(),
                cls: g.value(terms.cls).item(),
                mask: g.value(terms.mask).item(),
            });
        }
    }
    Ok(TrainOutput {
        model,
        trace,
        skipped,
    })
}

/// Row-wise loss used to rank proposals for hard example mining.
fn per_proposal_loss(probs: &Tensor, masks: &Tensor, labels: &Tensor, targets: &Tensor, loss: LossKind) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| {
            let cls: f64 = probs
                .row(r)
                .iter()
                .zip(labels.row(r))
                .map(|(&p, &y)| match loss {
                    LossKind::Bce => bce(p, y),
                    LossKind::Focal { alpha, gamma } => focal_loss(p, y > 0.5, alpha, gamma),
                })
                .sum::<f64>()
                / probs.cols() as f64;
            let mask: f64 = masks.row(r).iter().zip(targets.row(r)).map(|(&p, &y)| bce(p, y)).sum::<f64>()
                / masks.cols() as f64;
            cls + mask
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletPrediction {
    pub subject: usize,
    pub object: usize,
    pub subject_box: BBox,
    pub object_box: BBox,
    pub subject_class: u32,
    pub object_class: u32,
    pub predicate: u32,
    pub score: f64,
    pub s1: f64,
    pub s2: f64,
    pub s_cls: f64,
}

/// Scores every proposal of the scene (no sampling) and keeps the
/// `predicate_top_k` best predicates of each. Output is sorted by score,
/// highest first; ties keep proposal order, then predicate rank.
pub fn infer(
    model: &Model,
    scene: &Scene,
    top_k: usize,
    predicate_top_k: usize,
) -> Result<Vec<TripletPrediction>, PipelineError> {
    let proposals = ProposalSets::new(scene, top_k).proposals(scene.mode);
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let features = model.features(scene, top_k);
    let (probs, _) = model.predict(&features, &proposals)?;
    let k = predicate_top_k.min(model.config.num_predicates);
    let mut out = Vec::with_capacity(proposals.len() * k);
    for (r, p) in proposals.iter().enumerate() {
        let row = probs.row(r);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let (sd, od) = (&scene.detections[p.subject], &scene.detections[p.object]);
        for &pred in order.iter().take(k) {
            out.push(TripletPrediction {
                subject: p.subject,
                object: p.object,
                subject_box: sd.bbox,
                object_box: od.bbox,
                subject_class: sd.class_id,
                object_class: od.class_id,
                predicate: pred as u32,
                score: sd.score * od.score * row[pred],
                s1: sd.score,
                s2: od.score,
                s_cls: row[pred],
            });
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// Inference over many scenes, parallel across scenes when a rayon pool
/// with several threads is active.
pub fn infer_scenes(
    model: &Model,
    scenes: &[Scene],
    top_k: usize,
    predicate_top_k: usize,
) -> Result<Vec<Vec<TripletPrediction>>, PipelineError> {
    scenes
        .par_iter()
        .map(|s| infer(model, s, top_k, predicate_top_k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsePositiveReport {
    pub images: usize,
    pub threshold: f64,
    /// proposals per class with some predicate probability at or above the
    /// threshold, summed over images (index 0 is POS)
    pub counts: [usize; 6],
    pub per_image: [f64; 6],
}

impl FalsePositiveReport {
    /// Average per-image false positives over NEG3..NEG5.
    pub fn hard_negative_per_image(&self) -> f64 {
        self.per_image[3..].iter().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let per_class: serde_json::Map<String, serde_json::Value> = ProposalClass::ALL[1..]
            .iter()
            .map(|c| (c.name().to_string(), serde_json::json!(self.per_image[c.index()])))
            .collect();
        serde_json::json!({
            "images": self.images,
            "threshold": self.threshold,
            "per_image": per_class,
            "hard_negative_per_image": self.hard_negative_per_image(),
        })
    }
}

pub fn false_positive_report(
    model: &Model,
    scenes: &[Scene],
    top_k: usize,
    threshold: f64,
) -> Result<FalsePositiveReport, PipelineError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PipelineError::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let per_scene: Vec<[usize; 6]> = scenes
        .par_iter()
        .map(|scene| -> Result<[usize; 6], PipelineError> {
            let classified = classify_scene(scene, top_k);
            let mut counts = [0usize; 6];
            if classified.proposals.is_empty() {
                return Ok(counts);
            }
            let features = model.features(scene, top_k);
            let (probs, _) = model.predict(&features, &classified.proposals)?;
            for (r, c) in classified.classes.iter().enumerate() {
                if probs.row(r).iter().any(|&p| p >= threshold) {
                    counts[c.index()] += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_, _>>()?;
    let mut counts = [0usize; 6];
    for c in &per_scene {
        for k in 0..6 {
            counts[k] += c[k];
        }
    }
    let images = scenes.len();
    let per_image = counts.map(|c| if images == 0 { 0.0 } else { c as f64 / images as f64 });
    Ok(FalsePositiveReport {
        images,
        threshold,
        counts,
        per_image,
    })
}
