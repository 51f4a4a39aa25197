#ifndef CSILAB_H
#define CSILAB_H

/* Generated by cbindgen from the csilab-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every API call. `CSILAB_STATUS_OK` is zero; anything else left
// a message readable through `csilab_last_error_message`.
typedef enum CsilabStatus {
  CSILAB_STATUS_OK = 0,
  // Invalid parameters or configuration.
  CSILAB_STATUS_CONFIG = 1,
  // A documented precondition was violated.
  CSILAB_STATUS_PRECONDITION = 2,
  // An iterative numeric procedure failed.
  CSILAB_STATUS_TRAINING = 3,
  // A persisted artifact is corrupt or has an unsupported layout.
  CSILAB_STATUS_FORMAT = 4,
  // A required artifact file does not exist.
  CSILAB_STATUS_MISSING_ARTIFACT = 5,
  // Operating system level I/O failure.
  CSILAB_STATUS_IO = 6,
  // A null handle or output pointer was passed.
  CSILAB_STATUS_NULL_POINTER = 7,
  // A string argument was not valid UTF-8.
  CSILAB_STATUS_INVALID_UTF8 = 8,
  // The library caught an internal panic.
  CSILAB_STATUS_INTERNAL = 9,
} CsilabStatus;

// A compression scheme ready to encode and decode soundings.
typedef struct CsilabCodec CsilabCodec;

// An in-memory dataset of per-subcarrier steering matrices.
typedef struct CsilabDataset CsilabDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the failure message of the most recent non-OK call on this thread.
//
// Returns the full message length in bytes (excluding the NUL terminator).
// When `buf` is non-null, up to `cap - 1` bytes are copied and terminated.
// Call with a null `buf` to size a buffer first.
//
// # Safety
// `buf` must be null or point to at least `cap` writable bytes.
uintptr_t csilab_last_error_message(char *buf, uintptr_t cap);

// Generate a synthetic dataset.
//
// `n_tx`/`n_rx` describe the arrays, `n_c` the spatial streams, and the
// result holds `n_soundings` independent soundings of `n_sc` subcarriers
// drawn from an `n_fft`-bin OFDM grid.
//
// # Safety
// `out` must point to writable storage for one pointer.
enum CsilabStatus csilab_dataset_generate(uintptr_t n_tx,
                                          uintptr_t n_rx,
                                          uintptr_t n_c,
                                          uintptr_t n_soundings,
                                          uintptr_t n_sc,
                                          uintptr_t n_fft,
                                          uint64_t seed,
                                          struct CsilabDataset **out);

// Load a dataset file (the `.json` sidecar written next to it is required).
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` as in
// [`csilab_dataset_generate`].
enum CsilabStatus csilab_dataset_read(const char *path, struct CsilabDataset **out);

// Persist a dataset (atomically, with its sidecar).
//
// # Safety
// `dataset` must be a live handle; `path` a valid NUL-terminated string.
enum CsilabStatus csilab_dataset_write(const struct CsilabDataset *dataset, const char *path);

// Report the dimensions of a dataset. Null output pointers are skipped.
//
// # Safety
// `dataset` must be a live handle.
enum CsilabStatus csilab_dataset_shape(const struct CsilabDataset *dataset,
                                       uintptr_t *n_soundings,
                                       uintptr_t *n_sc,
                                       uintptr_t *n_r,
                                       uintptr_t *n_c);

// Release a dataset handle. Null is ignored.
//
// # Safety
// `dataset` must have come from this library and not been freed before.
void csilab_dataset_free(struct CsilabDataset *dataset);

// Create a codec for an artifact-free scheme token (`legacy`, `legacy:<n_b>`,
// or `perfect`).
//
// # Safety
// `token` must be a valid NUL-terminated string; `out` must point to
// writable storage for one pointer.
enum CsilabStatus csilab_codec_new(const char *token, struct CsilabCodec **out);

// Create a K-means codec from a trained codebook file (`.cscb`).
//
// # Safety
// As in [`csilab_codec_new`].
enum CsilabStatus csilab_codec_new_kmeans(const char *codebook_path, struct CsilabCodec **out);

// Create a Q-series autoencoder codec from a model container holding the
// encoder and decoder, with latent samples carried at `n_q` bits (16 or 32).
//
// # Safety
// As in [`csilab_codec_new`].
enum CsilabStatus csilab_codec_new_qseries(const char *models_path,
                                           uint8_t n_q,
                                           struct CsilabCodec **out);

// Create an angle autoencoder codec from a model container holding, in
// order, the phi encoder/decoder and the psi encoder/decoder, quantizing
// latents on the `n_b` grids.
//
// # Safety
// As in [`csilab_codec_new`].
enum CsilabStatus csilab_codec_new_angle(const char *models_path,
                                         uint8_t n_b,
                                         struct CsilabCodec **out);

// Copy the codec's canonical scheme token. Same contract as
// [`csilab_last_error_message`].
//
// # Safety
// `codec` must be a live handle.
uintptr_t csilab_codec_token(const struct CsilabCodec *codec, char *buf, uintptr_t cap);

// Release a codec handle. Null is ignored.
//
// # Safety
// `codec` must have come from this library and not been freed before.
void csilab_codec_free(struct CsilabCodec *codec);

// Compress and reconstruct one sounding of a dataset, writing the
// reconstruction error in dB to `nmse_db`.
//
// # Safety
// `codec` and `dataset` must be live handles; `nmse_db` must point to
// writable storage for one double.
enum CsilabStatus csilab_roundtrip_nmse(const struct CsilabCodec *codec,
                                        const struct CsilabDataset *dataset,
                                        uintptr_t sounding,
                                        double *nmse_db);

// Run one Monte-Carlo packet error rate point over `trials` independent
// channel draws at `snr_db`, writing the measured rate to `per`.
//
// # Safety
// `codec` must be a live handle; `per` must point to writable storage for
// one double.
enum CsilabStatus csilab_per_point(const struct CsilabCodec *codec,
                                   uintptr_t n_sc,
                                   uintptr_t trials,
                                   double snr_db,
                                   uint64_t master_seed,
                                   double *per);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CSILAB_H */
