/* Debiased contrastive weight pruning — C API.
 *
 * All functions return a dcwp_status; DCWP_OK is 0. On failure
 * dcwp_last_error() describes the most recent error of the calling thread.
 * Handles are opaque; every *_create/_load has a matching *_free, and
 * strings returned through char** are released with dcwp_string_free.
 */
#ifndef DCWP_DCWP_H
#define DCWP_DCWP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dcwp_status {
  DCWP_OK = 0,
  DCWP_ERR_INVALID_ARGUMENT = 1,
  DCWP_ERR_SHAPE_MISMATCH = 2,
  DCWP_ERR_DOMAIN = 3,
  DCWP_ERR_IO = 4,
  DCWP_ERR_FORMAT = 5,
  DCWP_ERR_STATE = 6,
  DCWP_ERR_NUMERIC = 7,
  DCWP_ERR_UNKNOWN = 100
} dcwp_status;

/* Message for the calling thread's most recent failure; never NULL. */
const char* dcwp_last_error(void);

void dcwp_string_free(char* s);

/* ------------------------------------------------------------------ */
/* configuration: flat `key = value` pairs (see docs/FORMATS.md)       */

typedef struct dcwp_config dcwp_config;

dcwp_config* dcwp_config_create(void);
void dcwp_config_free(dcwp_config* cfg);
dcwp_status dcwp_config_load_file(dcwp_config* cfg, const char* path);
dcwp_status dcwp_config_set(dcwp_config* cfg, const char* key, const char* value);
/* Canonical text form (sorted keys); validates the configuration. */
dcwp_status dcwp_config_canonical(const dcwp_config* cfg, char** out);

/* ------------------------------------------------------------------ */
/* experiments                                                         */

typedef struct dcwp_report dcwp_report;

/* Runs the configured experiment; writes artifacts when out_dir is set. */
dcwp_status dcwp_run_experiment(const dcwp_config* cfg, dcwp_report** out);
/* Loads a report.json produced by a previous run. */
dcwp_status dcwp_report_load(const char* path, dcwp_report** out);
void dcwp_report_free(dcwp_report* report);

/* Metric by name: unbiased_accuracy, conflicting_accuracy,
 * aligned_accuracy, worst_group_accuracy, mining_precision, mining_recall,
 * pruning_ratio. DCWP_ERR_STATE when the metric was skipped. */
dcwp_status dcwp_report_metric(const dcwp_report* report, const char* name, double* out);
/* compact != 0 gives single-line JSON (for JSONL emission) */
dcwp_status dcwp_report_json(const dcwp_report* report, int compact, char** out);
dcwp_status dcwp_report_csv(const dcwp_report* report, char** out);
dcwp_status dcwp_report_table(const dcwp_report* report, char** out);

/* ------------------------------------------------------------------ */
/* datasets                                                            */

/* Generates the configured train/test pair under out_dir (containers plus
 * a manifest with group counts and content hashes); returns the manifest
 * JSON when counts_json is non-NULL. */
dcwp_status dcwp_data_generate(const dcwp_config* cfg, const char* out_dir, char** counts_json);

/* Deterministic digit-glyph IDX pair (MNIST byte format). */
dcwp_status dcwp_data_synth_digits(const char* images_path, const char* labels_path,
                                   uint64_t count, uint64_t seed);

/* ------------------------------------------------------------------ */
/* theory lab runners: each writes a CSV and reports its checks.       */
/* ok receives 1 when every check passed, 0 otherwise; details_json    */
/* (optional) receives the check summary.                              */

dcwp_status dcwp_theory_bounds(const char* csv_path, const char* p_list, const char* pi_list,
                               size_t spurious_dims, size_t mc_samples,
                               double phi /* < 0: auto, 1 - 1/(2p) per p */, uint64_t seed,
                               int* ok, char** details_json);

dcwp_status dcwp_theory_flow(const char* csv_path, double p, size_t spurious_dims, double w_inv0,
                             double w_sp0, double dt, double target_dev, size_t sample_count,
                             int* ok, char** details_json);

dcwp_status dcwp_theory_ratio(const char* csv_path, const char* p_list, size_t spurious_dims,
                              size_t epochs, size_t batch, size_t train_n, double lr,
                              size_t seeds, uint64_t seed, int* ok, char** details_json);

dcwp_status dcwp_theory_misalign(const char* csv_path, size_t spurious_dims, double p, size_t q,
                                 size_t n_pairs, uint64_t seed, int* ok, char** details_json);

/* Sparsity/accuracy frontier: one experiment per comma-separated l1 value. */
dcwp_status dcwp_sparsity_sweep(const dcwp_config* cfg, const char* l1_list,
                                const char* csv_path, int* ok, char** details_json);

#ifdef __cplusplus
}
#endif

#endif /* DCWP_DCWP_H */
