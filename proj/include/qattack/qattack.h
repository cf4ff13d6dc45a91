/* C interface to the qattack library. Every function returns a qat_status;
 * on failure qat_last_error() describes the most recent error on the calling
 * thread. Objects are opaque and owned by the caller until freed. */
#ifndef QATTACK_H
#define QATTACK_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define QAT_API __declspec(dllexport)
#else
#define QAT_API __attribute__((visibility("default")))
#endif

typedef enum qat_status {
  QAT_OK = 0,
  QAT_ERR_VALIDATION = 1,
  QAT_ERR_PARSE = 2,
  QAT_ERR_IO = 3,
  QAT_ERR_MODEL = 4,
  QAT_ERR_TIMEOUT = 5,
  QAT_ERR_HTTP_STATUS = 6,
  QAT_ERR_SCHEMA = 7,
  QAT_ERR_TRANSPORT = 8,
  QAT_ERR_RUNTIME = 9,
  QAT_ERR_ARGUMENT = 10
} qat_status;

typedef enum qat_command {
  QAT_CMD_EXTRACT = 0,
  QAT_CMD_ATTACK = 1,
  QAT_CMD_TRANSFER = 2,
  QAT_CMD_REPORT = 3,
  QAT_CMD_PIPELINE = 4
} qat_command;

typedef struct qat_config qat_config;
typedef struct qat_model qat_model;
typedef struct qat_prediction qat_prediction;

typedef struct qat_span {
  size_t start_token;
  size_t end_token; /* inclusive */
  double probability;
  const char* text; /* valid until the prediction is freed */
} qat_span;

typedef void (*qat_log_fn)(const char* message, void* user_data);

QAT_API const char* qat_last_error(void);
QAT_API const char* qat_status_name(qat_status status);
/* Nonzero for failures of a remote victim (timeout, HTTP, schema, transport). */
QAT_API int qat_status_is_remote(qat_status status);

QAT_API qat_status qat_config_load(const char* path, qat_config** out);
/* Relative paths in `text` resolve against `base_dir` (may be NULL). */
QAT_API qat_status qat_config_parse(const char* text, const char* base_dir, qat_config** out);
/* Overrides one key; relative paths resolve against the working directory. */
QAT_API qat_status qat_config_set(qat_config* config, const char* key, const char* value);
/* Writes 16 hex digits and a terminating NUL. */
QAT_API qat_status qat_config_hash(const qat_config* config, char out[17]);
QAT_API qat_status qat_config_validate(const qat_config* config);
QAT_API void qat_config_free(qat_config* config);

/* `log` may be NULL. */
QAT_API qat_status qat_run(const qat_config* config, qat_command command, qat_log_fn log,
                           void* user_data);

QAT_API qat_status qat_model_overlap(double temperature, qat_model** out);
/* `auth_token` may be NULL. */
QAT_API qat_status qat_model_http(const char* base_url, double timeout_seconds, size_t max_batch,
                                  const char* auth_token, qat_model** out);
QAT_API qat_status qat_model_load_surrogate(const char* path, qat_model** out);
QAT_API void qat_model_free(qat_model* model);

QAT_API qat_status qat_predict(const qat_model* model, const char* question, const char* context,
                               size_t k, qat_prediction** out);
QAT_API size_t qat_prediction_size(const qat_prediction* prediction);
QAT_API qat_status qat_prediction_span(const qat_prediction* prediction, size_t index,
                                       qat_span* out);
QAT_API void qat_prediction_free(qat_prediction* prediction);

QAT_API qat_status qat_token_f1(const char* prediction, const char* const* golds, size_t n_golds,
                                double* out);
QAT_API qat_status qat_exact_match(const char* prediction, const char* const* golds,
                                   size_t n_golds, int* out);

#ifdef __cplusplus
}
#endif

#endif /* QATTACK_H */
