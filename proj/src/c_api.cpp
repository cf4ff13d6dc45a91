#include "qattack/qattack.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "qattack/error.hpp"
#include "qattack/http_model.hpp"
#include "qattack/metrics.hpp"
#include "qattack/pipeline.hpp"
#include "qattack/reference_models.hpp"

struct qat_config {
  qattack::PipelineConfig config;
};

struct qat_model {
  std::unique_ptr<qattack::SpanModel> model;
};

struct qat_prediction {
  qattack::SpanDistribution dist;
};

namespace {

thread_local std::string g_last_error;

qat_status to_status(qattack::ErrorKind kind) {
  using qattack::ErrorKind;
  switch (kind) {
    case ErrorKind::kValidation: return QAT_ERR_VALIDATION;
    case ErrorKind::kParse: return QAT_ERR_PARSE;
    case ErrorKind::kIo: return QAT_ERR_IO;
    case ErrorKind::kModel: return QAT_ERR_MODEL;
    case ErrorKind::kTimeout: return QAT_ERR_TIMEOUT;
    case ErrorKind::kHttpStatus: return QAT_ERR_HTTP_STATUS;
    case ErrorKind::kSchema: return QAT_ERR_SCHEMA;
    case ErrorKind::kTransport: return QAT_ERR_TRANSPORT;
    case ErrorKind::kRuntime: return QAT_ERR_RUNTIME;
  }
  return QAT_ERR_RUNTIME;
}

qat_status fail(qat_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into a status and the thread's last error.
template <typename Fn>
qat_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return QAT_OK;
  } catch (const qattack::Error& e) {
    return fail(to_status(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(QAT_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(QAT_ERR_RUNTIME, e.what());
  }
}

std::vector<std::string> gold_vector(const char* const* golds, size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.emplace_back(golds[i] ? golds[i] : "");
  return out;
}

}  // namespace

extern "C" {

const char* qat_last_error(void) { return g_last_error.c_str(); }

const char* qat_status_name(qat_status status) {
  switch (status) {
    case QAT_OK: return "ok";
    case QAT_ERR_VALIDATION: return "validation";
    case QAT_ERR_PARSE: return "parse";
    case QAT_ERR_IO: return "io";
    case QAT_ERR_MODEL: return "model";
    case QAT_ERR_TIMEOUT: return "timeout";
    case QAT_ERR_HTTP_STATUS: return "http_status";
    case QAT_ERR_SCHEMA: return "schema";
    case QAT_ERR_TRANSPORT: return "transport";
    case QAT_ERR_RUNTIME: return "runtime";
    case QAT_ERR_ARGUMENT: return "argument";
  }
  return "unknown";
}

int qat_status_is_remote(qat_status status) {
  return status == QAT_ERR_TIMEOUT || status == QAT_ERR_HTTP_STATUS || status == QAT_ERR_SCHEMA ||
         status == QAT_ERR_TRANSPORT;
}

qat_status qat_config_load(const char* path, qat_config** out) {
  if (!path || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] { *out = new qat_config{qattack::load_config(path)}; });
}

qat_status qat_config_parse(const char* text, const char* base_dir, qat_config** out) {
  if (!text || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    *out = new qat_config{qattack::parse_config(text, base_dir ? base_dir : "")};
  });
}

qat_status qat_config_set(qat_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return fail(QAT_ERR_ARGUMENT, "null argument");
  return guard([&] { qattack::set_config_value(config->config, key, value); });
}

qat_status qat_config_hash(const qat_config* config, char out[17]) {
  if (!config || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  return guard([&] {
    const std::string h = config->config.config_hash();
    std::memcpy(out, h.c_str(), 17);
  });
}

qat_status qat_config_validate(const qat_config* config) {
  if (!config) return fail(QAT_ERR_ARGUMENT, "null argument");
  return guard([&] { config->config.validate(); });
}

void qat_config_free(qat_config* config) { delete config; }

qat_status qat_run(const qat_config* config, qat_command command, qat_log_fn log,
                   void* user_data) {
  if (!config) return fail(QAT_ERR_ARGUMENT, "null argument");
  qattack::LogFn fn;
  if (log) fn = [log, user_data](const std::string& m) { log(m.c_str(), user_data); };
  if (command < QAT_CMD_EXTRACT || command > QAT_CMD_PIPELINE) {
    return fail(QAT_ERR_ARGUMENT, "unknown command");
  }
  const auto& c = config->config;
  return guard([&] {
    switch (command) {
      case QAT_CMD_EXTRACT: qattack::cmd_extract(c, fn); return;
      case QAT_CMD_ATTACK: qattack::cmd_attack(c, fn); return;
      case QAT_CMD_TRANSFER: qattack::cmd_transfer(c, fn); return;
      case QAT_CMD_REPORT: qattack::cmd_report(c, fn); return;
      case QAT_CMD_PIPELINE: qattack::cmd_pipeline(c, fn); return;
    }
  });
}

qat_status qat_model_overlap(double temperature, qat_model** out) {
  if (!out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    qattack::OverlapModelConfig oc;
    oc.temperature = temperature;
    oc.validate();
    *out = new qat_model{std::make_unique<qattack::OverlapModel>(oc)};
  });
}

qat_status qat_model_http(const char* base_url, double timeout_seconds, size_t max_batch,
                          const char* auth_token, qat_model** out) {
  if (!base_url || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    qattack::ModelEndpoint ep{base_url, timeout_seconds, max_batch, std::nullopt};
    if (auth_token) ep.auth_token = auth_token;
    ep.validate();
    *out = new qat_model{std::make_unique<qattack::HttpModel>(ep)};
  });
}

qat_status qat_model_load_surrogate(const char* path, qat_model** out) {
  if (!path || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    *out = new qat_model{
        std::make_unique<qattack::SurrogateSpanModel>(qattack::load_surrogate(path))};
  });
}

void qat_model_free(qat_model* model) { delete model; }

qat_status qat_predict(const qat_model* model, const char* question, const char* context, size_t k,
                       qat_prediction** out) {
  if (!model || !question || !context || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    const auto q = qattack::tokenize(question);
    const auto c = qattack::tokenize(context);
    *out = new qat_prediction{qattack::predict(*model->model, q, c, k)};
  });
}

size_t qat_prediction_size(const qat_prediction* prediction) {
  return prediction ? prediction->dist.spans().size() : 0;
}

qat_status qat_prediction_span(const qat_prediction* prediction, size_t index, qat_span* out) {
  if (!prediction || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  const auto& spans = prediction->dist.spans();
  if (index >= spans.size()) return fail(QAT_ERR_ARGUMENT, "span index out of range");
  const auto& s = spans[index];
  *out = qat_span{s.start_token, s.end_token, s.probability, s.text.c_str()};
  return QAT_OK;
}

void qat_prediction_free(qat_prediction* prediction) { delete prediction; }

qat_status qat_token_f1(const char* prediction, const char* const* golds, size_t n_golds,
                        double* out) {
  if (!prediction || (!golds && n_golds) || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  return guard([&] { *out = qattack::token_f1(prediction, gold_vector(golds, n_golds)); });
}

qat_status qat_exact_match(const char* prediction, const char* const* golds, size_t n_golds,
                           int* out) {
  if (!prediction || (!golds && n_golds) || !out) return fail(QAT_ERR_ARGUMENT, "null argument");
  return guard([&] { *out = qattack::exact_match(prediction, gold_vector(golds, n_golds)) ? 1 : 0; });
}

}  // extern "C"
