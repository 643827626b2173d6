#ifndef SCNN_H
#define SCNN_H

/* C interface to the forecasting engine. Every function returns a status
 * code: 0 success, 1 usage error, 2 data or parse error, 3 numeric failure.
 * On failure scnn_last_error() describes what went wrong; the message is
 * thread-local and valid until the next failing call on the same thread.
 * Unexpected internal failures report code 2. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct scnn_config scnn_config;
typedef struct scnn_dataset scnn_dataset;
typedef struct scnn_model scnn_model;
typedef struct scnn_stream scnn_stream;

const char* scnn_last_error(void);

/* Frees strings returned through char** outputs. */
void scnn_string_free(char* s);

/* ---- run configuration ---- */

/* All defaults; never fails except on allocation. */
int scnn_config_create(scnn_config** out);
/* Strict INI file with [model], [train], [data] sections. */
int scnn_config_load(const char* path, scnn_config** out);
/* assignment: "section.key=value", e.g. "model.channels=16". */
int scnn_config_override(scnn_config* cfg, const char* assignment);
/* Writes the fully resolved snapshot; reloading it reproduces the run. */
int scnn_config_write_resolved(const scnn_config* cfg, const char* path);
/* Resolved value as text, addressed like an override ("train.seed"). The
 * caller frees *out_value with scnn_string_free. */
int scnn_config_get(const scnn_config* cfg, const char* section_key, char** out_value);
void scnn_config_free(scnn_config* cfg);

/* ---- datasets ---- */

/* Synthesizes the series described by the [data] section and writes
 * <dir>/<basename>.csv plus the eight <basename>.<component>.<kind>.csv
 * ground-truth factor files. */
int scnn_generate_files(const scnn_config* cfg, const char* dir, const char* basename);

int scnn_dataset_load(const char* path, scnn_dataset** out);
int scnn_dataset_save(const scnn_dataset* data, const char* path);
int scnn_dataset_shape(const scnn_dataset* data, int* n_vars, int64_t* t_steps, int64_t* t0);
/* Adds N(0, sigma^2) noise to every value. */
int scnn_dataset_corrupt_gaussian(const scnn_dataset* data, double sigma, uint64_t seed,
                                  scnn_dataset** out);
/* Masks a Bernoulli(rate) subset of cells, then imputes by carrying the
 * last observation forward. */
int scnn_dataset_corrupt_missing(const scnn_dataset* data, double rate, uint64_t seed,
                                 scnn_dataset** out);
/* Mean-autocorrelation peak over lags 2..max_period. */
int scnn_dataset_detect_cycle(const scnn_dataset* data, int max_period, int* period,
                              double* peak);
void scnn_dataset_free(scnn_dataset* data);

/* ---- models ---- */

/* Builds a fresh model from the [model] section. */
int scnn_model_create(const scnn_config* cfg, uint64_t init_seed, scnn_model** out);
int scnn_model_load(const char* path, scnn_model** out);
int scnn_model_save(const scnn_model* model, const char* path);
int scnn_model_shape(const scnn_model* model, int* n_vars, int* input_steps, int* horizons,
                     int* cycle_length);
int scnn_model_param_count(const scnn_model* model, int64_t* out);

/* Fits on the chronological training split of `data` using the [train]
 * section, early-stopping on validation loss. Writes `epoch,train_loss,
 * val_loss` rows to loss_curve_path when it is non-null. best_epoch and
 * best_val report the restored optimum when non-null. */
int scnn_model_train(scnn_model* model, const scnn_dataset* data, const scnn_config* cfg,
                     const char* loss_curve_path, int* best_epoch, double* best_val);

/* Metrics CSV (`horizon,mae,rmse,mape_pct,n`, aggregate as horizon 0) over
 * the chosen windows in original units. split: "train", "val", "test", or
 * "all". baseline: null for the model, else "persistence",
 * "seasonal_persistence", or "historical_mean". The caller frees *out_csv
 * with scnn_string_free. */
int scnn_model_evaluate(const scnn_model* model, const scnn_dataset* data, double val_frac,
                        double test_frac, const char* split, const char* baseline,
                        char** out_csv);

/* Forecast from origin time `at` (in the dataset's time coordinates; the
 * input window must fit inside the series). mean and std hold
 * n_vars * horizons values, variable-major, original units. */
int scnn_model_forecast(const scnn_model* model, const scnn_dataset* data, int64_t at,
                        double* mean, double* std);

/* Writes per-component channel-mean traces of block `layer` over the whole
 * series: <basename>.block<layer>.<name>.csv for the eight statistics and
 * four normalized residual streams. */
int scnn_model_decompose(const scnn_model* model, const scnn_dataset* data, int layer,
                         const char* dir, const char* basename);

/* Writes <basename>.<stream>.contribution.csv for each learned
 * extrapolator: rows are horizons, columns lag_0..lag_{k-1}, entries the
 * Frobenius norm of the lag's weight block. */
int scnn_model_explain(const scnn_model* model, const char* dir, const char* basename);

/* Mean per-window latencies in milliseconds over up to `samples` windows:
 * one training step (forward, backward, optimizer) and one forecast. The
 * model is restored to its incoming parameters afterwards. */
int scnn_model_bench(scnn_model* model, const scnn_dataset* data, int samples, double* train_ms,
                     double* infer_ms);
void scnn_model_free(scnn_model* model);

/* ---- streaming ---- */

/* The stream borrows the model; keep the model alive until the stream is
 * freed. ema 0 replays the exact trailing window per push, 1 keeps
 * constant-size moving-average component state. */
int scnn_stream_create(const scnn_model* model, int ema, scnn_stream** out);
/* obs: one value per variable, original units. mean/std as in forecast;
 * either may be null when not wanted. */
int scnn_stream_push(scnn_stream* stream, const double* obs, double* mean, double* std);
void scnn_stream_free(scnn_stream* stream);

#ifdef __cplusplus
}
#endif

#endif /* SCNN_H */
