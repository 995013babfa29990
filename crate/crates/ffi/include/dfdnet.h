#ifndef DFDNET_H
#define DFDNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfdnetStatus {
  DFDNET_STATUS_OK = 0,
  DFDNET_STATUS_NULL_POINTER = 1,
  DFDNET_STATUS_INVALID_ARGUMENT = 2,
  DFDNET_STATUS_IO = 3,
  /**
   * Malformed checkpoint, image, dataset or configuration.
   */
  DFDNET_STATUS_FORMAT = 4,
  DFDNET_STATUS_NON_FINITE = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  DFDNET_STATUS_INTERNAL = 6,
} DfdnetStatus;

/**
 * Opaque inference model.
 */
typedef struct DfdnetModel DfdnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *dfdnet_last_error(void);

/**
 * Loads a checkpoint written by `dfdnet train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DfdnetStatus dfdnet_model_load(const char *path, struct DfdnetModel **out);

/**
 * # Safety
 * `model` must come from [`dfdnet_model_load`] and not be used afterwards.
 */
void dfdnet_model_free(struct DfdnetModel *model);

/**
 * Number of network parameters, or 0 for a NULL model.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t dfdnet_model_param_count(const struct DfdnetModel *model);

/**
 * Removes flare from one image. Outputs are clamped to `[0, 1]`; any size
 * is accepted (inputs are reflect-padded internally). `flare_out` may be NULL.
 *
 * # Safety
 * `image` and `restored_out` (and `flare_out` when non-NULL) must hold
 * `3 * height * width` doubles.
 */
enum DfdnetStatus dfdnet_model_restore(const struct DfdnetModel *model,
                                       const double *image,
                                       size_t height,
                                       size_t width,
                                       double *restored_out,
                                       double *flare_out);

/**
 * PSNR in dB, capped at 100 for identical images.
 *
 * # Safety
 * `pred` and `target` must hold `3 * height * width` doubles; `out` must be writable.
 */
enum DfdnetStatus dfdnet_psnr(const double *pred,
                              const double *target,
                              size_t height,
                              size_t width,
                              double *out);

/**
 * Mean SSIM over channels with an 11×11 Gaussian window.
 *
 * # Safety
 * As for [`dfdnet_psnr`].
 */
enum DfdnetStatus dfdnet_ssim(const double *pred,
                              const double *target,
                              size_t height,
                              size_t width,
                              double *out);

/**
 * PSNR over mask pixels. For an empty mask `*applicable` is set to 0 and
 * `*out` is left untouched.
 *
 * # Safety
 * As for [`dfdnet_psnr`]; `mask` must hold `height * width` bytes and
 * `applicable` must be writable.
 */
enum DfdnetStatus dfdnet_masked_psnr(const double *pred,
                                     const double *target,
                                     const uint8_t *mask,
                                     size_t height,
                                     size_t width,
                                     double *out,
                                     int32_t *applicable);

/**
 * Centered log-amplitude spectrum of the image luminance, normalized to
 * `[0, 1]`, written as `height * width` doubles.
 *
 * # Safety
 * `image` must hold `3 * height * width` doubles, `out` `height * width`.
 */
enum DfdnetStatus dfdnet_spectrum(const double *image, size_t height, size_t width, double *out);

/**
 * Synthesizes sample `index` of the procedural dataset with `seed` at
 * `size × size`, identical to what `dfdnet synth` writes before 8-bit
 * quantization. Any output pointer may be NULL to skip it.
 *
 * # Safety
 * Each non-NULL output must hold `3 * size * size` doubles.
 */
enum DfdnetStatus dfdnet_synth_sample(uint64_t seed,
                                      size_t index,
                                      size_t size,
                                      double *input_out,
                                      double *reference_out,
                                      double *flare_out);

/**
 * Writes `n` procedural samples to `out_dir` in the dataset layout.
 *
 * # Safety
 * `out_dir` must be a NUL-terminated string.
 */
enum DfdnetStatus dfdnet_synth_dataset(const char *out_dir, size_t n, uint64_t seed, size_t size);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DFDNET_H */
