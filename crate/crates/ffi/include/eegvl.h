#ifndef EEGVL_H
#define EEGVL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Packed as major << 16 | minor.
 */
#define EEGVL_ABI_VERSION (1 << 16)

typedef enum EegvlStatus {
  EEGVL_STATUS_OK = 0,
  EEGVL_STATUS_NULL_POINTER = 1,
  EEGVL_STATUS_INVALID_ARGUMENT = 2,
  EEGVL_STATUS_IO = 3,
  EEGVL_STATUS_SIGNAL = 4,
  EEGVL_STATUS_ICA = 5,
  EEGVL_STATUS_BUFFER_TOO_SMALL = 6,
  EEGVL_STATUS_PANIC = 7,
} EegvlStatus;

typedef enum EegvlIcaMethod {
  EEGVL_ICA_METHOD_FASTICA = 0,
  EEGVL_ICA_METHOD_EXTENDED_INFOMAX = 1,
} EegvlIcaMethod;

typedef enum EegvlVerdict {
  EEGVL_VERDICT_KEEP = 0,
  EEGVL_VERDICT_REJECT = 1,
  EEGVL_VERDICT_FLAG = 2,
} EegvlVerdict;

/*
 Label codes; the numeric order is the library's canonical label order.
 */
typedef enum EegvlLabel {
  EEGVL_LABEL_BRAIN = 0,
  EEGVL_LABEL_EYE = 1,
  EEGVL_LABEL_MUSCLE = 2,
  EEGVL_LABEL_HEART = 3,
  EEGVL_LABEL_LINE_NOISE = 4,
  EEGVL_LABEL_CHANNEL_NOISE = 5,
  EEGVL_LABEL_OTHER_ARTIFACT = 6,
} EegvlLabel;

/*
 Opaque fitted ICA model.
 */
typedef struct EegvlModel EegvlModel;

/*
 Opaque multichannel recording.
 */
typedef struct EegvlRecording EegvlRecording;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

uint32_t eegvl_abi_version(void);

/*
 Copies the last error message (NUL-terminated, truncated to `cap - 1`
 bytes) into `buf` and returns its full length. With a null `buf` only the
 length is returned.
 */
size_t eegvl_last_error_message(char *buf, size_t cap);

/*
 Loads an `.edf` file, or any other path as a recording container.
 */
enum EegvlStatus eegvl_recording_load(const char *path, struct EegvlRecording **out);

/*
 Builds a recording from row-major `n_channels × n_samples` data and
 standard 10-20 channel labels.
 */
enum EegvlStatus eegvl_recording_from_data(const double *data,
                                           size_t n_channels,
                                           size_t n_samples,
                                           double sfreq,
                                           const char *const *labels,
                                           struct EegvlRecording **out);

enum EegvlStatus eegvl_recording_save(const struct EegvlRecording *rec, const char *path);

/*
 Releases a recording; null is a no-op.
 */
void eegvl_recording_free(struct EegvlRecording *rec);

/*
 Zero for a null handle.
 */
size_t eegvl_recording_n_channels(const struct EegvlRecording *rec);

/*
 Zero for a null handle.
 */
size_t eegvl_recording_n_samples(const struct EegvlRecording *rec);

/*
 Zero for a null handle.
 */
double eegvl_recording_sfreq(const struct EegvlRecording *rec);

/*
 Copies the row-major samples into `buf`, which must hold
 `n_channels * n_samples` values.
 */
enum EegvlStatus eegvl_recording_copy_data(const struct EegvlRecording *rec,
                                           double *buf,
                                           size_t len);

/*
 Fits ICA. `n_components == 0` picks the default (numerical rank, at most 40).
 */
enum EegvlStatus eegvl_ica_fit(const struct EegvlRecording *rec,
                               enum EegvlIcaMethod method,
                               size_t n_components,
                               uint64_t seed,
                               struct EegvlModel **out);

/*
 Releases a model; null is a no-op.
 */
void eegvl_model_free(struct EegvlModel *model);

/*
 Zero for a null handle.
 */
size_t eegvl_model_n_components(const struct EegvlModel *model);

/*
 Component time courses, row-major `n_components × n_samples`.
 */
enum EegvlStatus eegvl_model_activations(const struct EegvlModel *model,
                                         const struct EegvlRecording *rec,
                                         double *buf,
                                         size_t len);

/*
 Reconstructs `rec` without the listed components into a new handle.
 `rejected` may be null when `n_rejected` is zero.
 */
enum EegvlStatus eegvl_apply_rejection(const struct EegvlModel *model,
                                       const struct EegvlRecording *rec,
                                       const size_t *rejected,
                                       size_t n_rejected,
                                       struct EegvlRecording **out);

/*
 Welch PSD with a Hann window. `freqs` and `psd` must each hold
 `seg_len / 2 + 1` values.
 */
enum EegvlStatus eegvl_welch_psd(const double *signal,
                                 size_t n,
                                 double sfreq,
                                 size_t seg_len,
                                 double overlap,
                                 double *freqs,
                                 double *psd,
                                 size_t n_bins);

/*
 Cohen's kappa between two label-code sequences of length `n`.
 */
enum EegvlStatus eegvl_cohens_kappa(const uint32_t *a, const uint32_t *b, size_t n, double *out);

/*
 Verdict under the default triage policy.
 */
enum EegvlStatus eegvl_triage_decide(uint32_t label, double confidence, enum EegvlVerdict *out);

/*
 List-price estimate for classifying `n_components` at `per_component_usd`.
 */
double eegvl_estimate_cost(size_t n_components, double per_component_usd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGVL_H */
