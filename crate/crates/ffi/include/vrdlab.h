#ifndef VRDLAB_H
#define VRDLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function.
typedef enum VrdStatus {
  VRD_STATUS_OK = 0,
  VRD_STATUS_NULL_POINTER = 1,
  VRD_STATUS_INVALID_ARGUMENT = 2,
  // malformed annotation JSON or checkpoint
  VRD_STATUS_PARSE = 3,
  VRD_STATUS_IO = 4,
  // the scene has no positive proposal to sample around
  VRD_STATUS_NO_POSITIVES = 5,
  // output buffer too small; the required length is still reported
  VRD_STATUS_BUFFER_TOO_SMALL = 6,
  VRD_STATUS_INTERNAL = 7,
} VrdStatus;

// A trained model restored from a checkpoint.
typedef struct VrdModel VrdModel;

// Builder for one image: detections plus ground truth.
typedef struct VrdScene VrdScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library from this thread.
const char *vrd_last_error_message(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void vrd_string_free(char *s);

// New empty scene. `hoi` restricts subjects to detections of
// `human_class_id`.
struct VrdScene *vrd_scene_new(bool hoi, uint32_t human_class_id);

// Loads image `image` of an annotation document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum VrdStatus vrd_scene_from_json(const char *json, size_t image, struct VrdScene **out);

// # Safety
// `scene` must come from `vrd_scene_new` or `vrd_scene_from_json` and
// not have been freed.
void vrd_scene_free(struct VrdScene *scene);

// # Safety
// `scene` must be a live scene handle.
enum VrdStatus vrd_scene_add_detection(struct VrdScene *scene,
                                       double x1,
                                       double y1,
                                       double x2,
                                       double y2,
                                       uint32_t class_id,
                                       double score);

// # Safety
// `scene` must be a live scene handle.
enum VrdStatus vrd_scene_add_gt_box(struct VrdScene *scene,
                                    double x1,
                                    double y1,
                                    double x2,
                                    double y2,
                                    uint32_t class_id);

// Adds a `(subject, predicate, object)` triplet over ground-truth box
// indices. Indices are checked when the scene is used.
//
// # Safety
// `scene` must be a live scene handle.
enum VrdStatus vrd_scene_add_relationship(struct VrdScene *scene,
                                          size_t subject,
                                          size_t object,
                                          uint32_t predicate);

// Class of every proposal over the top-`top_k` detections, as indices
// 0 (POS) to 5 (NEG5), in proposal order. `subjects` and `objects`
// may be null; when given they receive the detection indices.
//
// # Safety
// Each non-null buffer must hold `cap` elements; `out_len` must be
// writable.
enum VrdStatus vrd_scene_classify(const struct VrdScene *scene,
                                  size_t top_k,
                                  uint8_t *classes,
                                  size_t *subjects,
                                  size_t *objects,
                                  size_t cap,
                                  size_t *out_len);

// Proposal counts per class (POS, NEG1..NEG5) into `counts[6]`.
//
// # Safety
// `counts` must point to 6 writable elements.
enum VrdStatus vrd_scene_distribution(const struct VrdScene *scene, size_t top_k, uint64_t *counts);

// Draws one batch of proposal indices (into the order reported by
// `vrd_scene_classify`). `strategy` is one of "rs", "bnps", "bnps-2cls",
// "bnps-3cls", "bnps-3cls-hn"; "ohem" needs losses and is rejected here.
//
// # Safety
// `strategy` must be NUL-terminated; `batch` must hold `cap` elements;
// `out_len` must be writable.
enum VrdStatus vrd_scene_sample(const struct VrdScene *scene,
                                size_t top_k,
                                const char *strategy,
                                size_t batch_size,
                                double positive_ratio,
                                uint64_t seed,
                                size_t *batch,
                                size_t cap,
                                size_t *out_len);

// Restores a model from checkpoint bytes.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum VrdStatus vrd_model_load(const uint8_t *bytes, size_t len, struct VrdModel **out);

// Restores a model from a checkpoint file.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum VrdStatus vrd_model_load_file(const char *path, struct VrdModel **out);

// # Safety
// `model` must be a live model handle.
size_t vrd_model_num_predicates(const struct VrdModel *model);

// # Safety
// `model` must come from `vrd_model_load*` and not have been freed.
void vrd_model_free(struct VrdModel *model);

// Scores every proposal of `scene` and returns a JSON array of
// predictions (highest score first) through `out_json`. Free the string
// with `vrd_string_free`.
//
// # Safety
// Handles must be live; `out_json` must be writable.
enum VrdStatus vrd_model_infer_json(const struct VrdModel *model,
                                    const struct VrdScene *scene,
                                    size_t top_k,
                                    size_t predicate_top_k,
                                    char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRDLAB_H */
