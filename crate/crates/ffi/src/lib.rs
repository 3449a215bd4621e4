//! C ABI over `vrdlab`.
//!
//! Handles are opaque and owned by the caller; release them with the
//! matching `*_free` function. Every fallible call returns a [`VrdStatus`]
//! and leaves a message for [`vrd_last_error_message`] on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use vrdlab::data_io::{parse_annotations, DataError};
use vrdlab::geometry::BBox;
use vrdlab::numeric::NumericError;
use vrdlab::pipeline::{infer, Model, PipelineError};
use vrdlab::proposal::{classify_scene, Detection, GroundTruth, GtBox, Relationship, Scene, SceneError, SceneMode};
use vrdlab::sampling::{assign_weights, sample_batch, SamplerConfig, SamplingError, Strategy};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// malformed annotation JSON or checkpoint
    Parse = 3,
    Io = 4,
    /// the scene has no positive proposal to sample around
    NoPositives = 5,
    /// output buffer too small; the required length is still reported
    BufferTooSmall = 6,
    Internal = 7,
}

/// Builder for one image: detections plus ground truth.
pub struct VrdScene {
    detections: Vec<Detection>,
    gt_boxes: Vec<GtBox>,
    relationships: Vec<Relationship>,
    mode: SceneMode,
}

/// A trained model restored from a checkpoint.
pub struct VrdModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: VrdStatus, message: impl ToString) -> VrdStatus {
    let msg = CString::new(message.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

fn clear() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn sampling_status(e: SamplingError) -> VrdStatus {
    match e {
        SamplingError::NoPositives => fail(VrdStatus::NoPositives, e),
        SamplingError::Empty => fail(VrdStatus::NoPositives, e),
        _ => fail(VrdStatus::InvalidArgument, e),
    }
}

fn pipeline_status(e: PipelineError) -> VrdStatus {
    match e {
        PipelineError::Checkpoint(_)
        | PipelineError::Numeric(NumericError::Checkpoint(_) | NumericError::ParamLayout(_)) => {
            fail(VrdStatus::Parse, e)
        }
        PipelineError::Config(_) | PipelineError::PredicateOutOfRange { .. } => fail(VrdStatus::InvalidArgument, e),
        other => fail(VrdStatus::Internal, other),
    }
}

fn data_status(e: DataError) -> VrdStatus {
    match e {
        DataError::Io { .. } => fail(VrdStatus::Io, e),
        DataError::Config(_) => fail(VrdStatus::InvalidArgument, e),
        other => fail(VrdStatus::Parse, other),
    }
}

fn scene_status(e: SceneError) -> VrdStatus {
    fail(VrdStatus::InvalidArgument, e)
}

impl VrdScene {
    fn build(&self) -> Result<Scene, VrdStatus> {
        let gt = GroundTruth::new(self.gt_boxes.clone(), self.relationships.clone()).map_err(scene_status)?;
        Scene::new(self.detections.clone(), gt, self.mode).map_err(scene_status)
    }
}

/// Copies `src` into a caller buffer of capacity `cap` and reports the
/// full length through `out_len`.
///
/// # Safety
/// `dst` must point to `cap` writable elements (or be null when `cap` is 0).
unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, out_len: *mut usize) -> VrdStatus {
    if out_len.is_null() || (dst.is_null() && cap > 0) {
        return fail(VrdStatus::NullPointer, "null output pointer");
    }
    *out_len = src.len();
    if src.len() > cap {
        return fail(
            VrdStatus::BufferTooSmall,
            format!("need {} elements, buffer holds {cap}", src.len()),
        );
    }
    if !src.is_empty() {
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    VrdStatus::Ok
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, VrdStatus> {
    if s.is_null() {
        return Err(fail(VrdStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(VrdStatus::InvalidArgument, format!("string is not UTF-8: {e}")))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn vrd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vrd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New empty scene. `hoi` restricts subjects to detections of
/// `human_class_id`.
#[no_mangle]
pub extern "C" fn vrd_scene_new(hoi: bool, human_class_id: u32) -> *mut VrdScene {
    let mode = if hoi {
        SceneMode::Hoi { human_class_id }
    } else {
        SceneMode::General
    };
    Box::into_raw(Box::new(VrdScene {
        detections: Vec::new(),
        gt_boxes: Vec::new(),
        relationships: Vec::new(),
        mode,
    }))
}

/// Loads image `image` of an annotation document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_from_json(json: *const c_char, image: usize, out: *mut *mut VrdScene) -> VrdStatus {
    clear();
    if out.is_null() {
        return fail(VrdStatus::NullPointer, "null output pointer");
    }
    let text = match read_str(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let scenes = match parse_annotations(text).and_then(|f| f.scenes()) {
        Ok(s) => s,
        Err(e) => return data_status(e),
    };
    let Some(scene) = scenes.into_iter().nth(image) else {
        return fail(VrdStatus::InvalidArgument, format!("image {image} out of range"));
    };
    *out = Box::into_raw(Box::new(VrdScene {
        detections: scene.detections,
        gt_boxes: scene.ground_truth.boxes().to_vec(),
        relationships: scene.ground_truth.relationships().to_vec(),
        mode: scene.mode,
    }));
    VrdStatus::Ok
}

/// # Safety
/// `scene` must come from `vrd_scene_new` or `vrd_scene_from_json` and
/// not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_free(scene: *mut VrdScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be a live scene handle.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_add_detection(
    scene: *mut VrdScene,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    class_id: u32,
    score: f64,
) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_mut() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    let bbox = match BBox::new(x1, y1, x2, y2) {
        Ok(b) => b,
        Err(e) => return fail(VrdStatus::InvalidArgument, e),
    };
    match Detection::new(bbox, class_id, score) {
        Ok(d) => {
            scene.detections.push(d);
            VrdStatus::Ok
        }
        Err(e) => scene_status(e),
    }
}

/// # Safety
/// `scene` must be a live scene handle.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_add_gt_box(
    scene: *mut VrdScene,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    class_id: u32,
) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_mut() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    match BBox::new(x1, y1, x2, y2) {
        Ok(bbox) => {
            scene.gt_boxes.push(GtBox { bbox, class_id });
            VrdStatus::Ok
        }
        Err(e) => fail(VrdStatus::InvalidArgument, e),
    }
}

/// Adds a `(subject, predicate, object)` triplet over ground-truth box
/// indices. Indices are checked when the scene is used.
///
/// # Safety
/// `scene` must be a live scene handle.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_add_relationship(
    scene: *mut VrdScene,
    subject: usize,
    object: usize,
    predicate: u32,
) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_mut() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    scene.relationships.push(Relationship {
        subject,
        object,
        predicate,
    });
    VrdStatus::Ok
}

/// Class of every proposal over the top-`top_k` detections, as indices
/// 0 (POS) to 5 (NEG5), in proposal order. `subjects` and `objects`
/// may be null; when given they receive the detection indices.
///
/// # Safety
/// Each non-null buffer must hold `cap` elements; `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_classify(
    scene: *const VrdScene,
    top_k: usize,
    classes: *mut u8,
    subjects: *mut usize,
    objects: *mut usize,
    cap: usize,
    out_len: *mut usize,
) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_ref() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    let built = match scene.build() {
        Ok(s) => s,
        Err(s) => return s,
    };
    let c = classify_scene(&built, top_k);
    let idx: Vec<u8> = c.classes.iter().map(|k| k.index() as u8).collect();
    let status = copy_out(&idx, classes, cap, out_len);
    if status != VrdStatus::Ok {
        return status;
    }
    let mut n = 0;
    if !subjects.is_null() {
        let s: Vec<usize> = c.proposals.iter().map(|p| p.subject).collect();
        copy_out(&s, subjects, cap, &mut n);
    }
    if !objects.is_null() {
        let o: Vec<usize> = c.proposals.iter().map(|p| p.object).collect();
        copy_out(&o, objects, cap, &mut n);
    }
    VrdStatus::Ok
}

/// Proposal counts per class (POS, NEG1..NEG5) into `counts[6]`.
///
/// # Safety
/// `counts` must point to 6 writable elements.
#[no_mangle]
pub unsafe extern "C" fn vrd_scene_distribution(scene: *const VrdScene, top_k: usize, counts: *mut u64) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_ref() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    if counts.is_null() {
        return fail(VrdStatus::NullPointer, "null counts");
    }
    let built = match scene.build() {
        Ok(s) => s,
        Err(s) => return s,
    };
    let d = classify_scene(&built, top_k).distribution;
    for (i, c) in d.counts.iter().enumerate() {
        *counts.add(i) = *c as u64;
    }
    VrdStatus::Ok
}

/// Draws one batch of proposal indices (into the order reported by
/// `vrd_scene_classify`). `strategy` is one of "rs", "bnps", "bnps-2cls",
/// "bnps-3cls", "bnps-3cls-hn"; "ohem" needs losses and is rejected here.
///
/// # Safety
/// `strategy` must be NUL-terminated; `batch` must hold `cap` elements;
/// `out_len` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vrd_scene_sample(
    scene: *const VrdScene,
    top_k: usize,
    strategy: *const c_char,
    batch_size: usize,
    positive_ratio: f64,
    seed: u64,
    batch: *mut usize,
    cap: usize,
    out_len: *mut usize,
) -> VrdStatus {
    clear();
    let Some(scene) = scene.as_ref() else {
        return fail(VrdStatus::NullPointer, "null scene");
    };
    let strategy: Strategy = match read_str(strategy).map(str::parse) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return sampling_status(e),
        Err(s) => return s,
    };
    let built = match scene.build() {
        Ok(s) => s,
        Err(s) => return s,
    };
    let config = SamplerConfig {
        strategy,
        batch_size,
        positive_ratio,
        seed,
    };
    let c = classify_scene(&built, top_k);
    let drawn = assign_weights(&c.classes, strategy, positive_ratio).and_then(|w| sample_batch(&w, &config));
    match drawn {
        Ok(b) => copy_out(&b, batch, cap, out_len),
        Err(e) => sampling_status(e),
    }
}

/// Restores a model from checkpoint bytes.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrd_model_load(bytes: *const u8, len: usize, out: *mut *mut VrdModel) -> VrdStatus {
    clear();
    if out.is_null() || (bytes.is_null() && len > 0) {
        return fail(VrdStatus::NullPointer, "null pointer");
    }
    let data = if len == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(bytes, len)
    };
    match Model::from_checkpoint(data) {
        Ok((model, _)) => {
            *out = Box::into_raw(Box::new(VrdModel { model }));
            VrdStatus::Ok
        }
        Err(e) => pipeline_status(e),
    }
}

/// Restores a model from a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrd_model_load_file(path: *const c_char, out: *mut *mut VrdModel) -> VrdStatus {
    clear();
    let path = match read_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match std::fs::read(path) {
        Ok(bytes) => vrd_model_load(bytes.as_ptr(), bytes.len(), out),
        Err(e) => fail(VrdStatus::Io, format!("{path}: {e}")),
    }
}

/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn vrd_model_num_predicates(model: *const VrdModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.num_predicates)
}

/// # Safety
/// `model` must come from `vrd_model_load*` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vrd_model_free(model: *mut VrdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores every proposal of `scene` and returns a JSON array of
/// predictions (highest score first) through `out_json`. Free the string
/// with `vrd_string_free`.
///
/// # Safety
/// Handles must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrd_model_infer_json(
    model: *const VrdModel,
    scene: *const VrdScene,
    top_k: usize,
    predicate_top_k: usize,
    out_json: *mut *mut c_char,
) -> VrdStatus {
    clear();
    let (Some(model), Some(scene)) = (model.as_ref(), scene.as_ref()) else {
        return fail(VrdStatus::NullPointer, "null handle");
    };
    if out_json.is_null() {
        return fail(VrdStatus::NullPointer, "null output pointer");
    }
    let built = match scene.build() {
        Ok(s) => s,
        Err(s) => return s,
    };
    let preds = match infer(&model.model, &built, top_k, predicate_top_k) {
        Ok(p) => p,
        Err(e) => return pipeline_status(e),
    };
    match serde_json::to_string(&preds).map(CString::new) {
        Ok(Ok(s)) => {
            *out_json = s.into_raw();
            VrdStatus::Ok
        }
        Ok(Err(e)) => fail(VrdStatus::Internal, e),
        Err(e) => fail(VrdStatus::Internal, e),
    }
}
