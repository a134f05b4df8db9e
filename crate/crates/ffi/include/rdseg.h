#ifndef RDSEG_H
#define RDSEG_H

/* Generated by cbindgen from rdseg-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum RdsegStatus {
  // Success.
  RDSEG_OK = 0,
  // A pointer or argument was null, malformed, or inconsistent.
  RDSEG_INVALID_ARGUMENT = 1,
  // A file could not be read.
  RDSEG_IO_ERROR = 2,
  // A config or checkpoint file failed to parse or match the model.
  RDSEG_FORMAT_ERROR = 3,
  // The forward pass failed.
  RDSEG_INFERENCE_ERROR = 4,
} RdsegStatus;

// Opaque handle to a loaded model, frozen for inference.
typedef struct RdsegModel RdsegModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer is
// valid until the next failing call on the same thread.
const char *rdseg_last_error(void);

// Library version as a static string.
const char *rdseg_version(void);

// Load a model from a run-config TOML and a checkpoint file.
//
// On success writes a handle to `out_model` (free with
// [`rdseg_model_free`]) and returns `RdsegOk`.
//
// # Safety
// `config_path` and `checkpoint_path` must be NUL-terminated strings and
// `out_model` a valid pointer to writable storage.
enum RdsegStatus rdseg_model_load(const char *config_path,
                                  const char *checkpoint_path,
                                  struct RdsegModel **out_model);

// Release a handle returned by [`rdseg_model_load`]. Null is a no-op.
//
// # Safety
// `model` must be a handle from [`rdseg_model_load`] not yet freed.
void rdseg_model_free(struct RdsegModel *model);

// Number of output classes, or -1 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
int32_t rdseg_model_num_classes(const struct RdsegModel *model);

// 1 when the model has a depth branch (predict then requires a depth
// buffer), 0 when RGB-only, -1 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
int32_t rdseg_model_requires_depth(const struct RdsegModel *model);

// Segment one image.
//
// `rgb` is interleaved 8-bit RGB, row-major, `height*width*3` bytes.
// `depth`, when required by the model, is 16-bit row-major with 65535 = 1.0
// (pass null for RGB-only models). `out_labels` receives `height*width`
// class ids.
//
// # Safety
// Buffers must be valid for the stated extents; `model` must be a live
// handle. The handle must not be used from two threads at once.
enum RdsegStatus rdseg_predict(const struct RdsegModel *model,
                               const uint8_t *rgb,
                               const uint16_t *depth,
                               uint32_t height,
                               uint32_t width,
                               uint8_t *out_labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDSEG_H */
