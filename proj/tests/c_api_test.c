/* Exercises the C interface from C: handles, status codes, error text. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "qattack/qattack.h"

static int failures = 0;

#define EXPECT(cond)                                                 \
  do {                                                               \
    if (!(cond)) {                                                   \
      fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                    \
    }                                                                \
  } while (0)

static void count_lines(const char* message, void* user_data) {
  (void)message;
  ++*(int*)user_data;
}

int main(void) {
  const char* golds[] = {"Santa Clara"};
  double f1 = 0;
  int em = 1;
  EXPECT(qat_token_f1("Santa Clara, California", golds, 1, &f1) == QAT_OK);
  EXPECT(fabs(f1 - 0.8) < 1e-12);
  EXPECT(qat_exact_match("santa clara.", golds, 1, &em) == QAT_OK && em == 1);
  EXPECT(qat_token_f1("x", golds, 0, &f1) == QAT_OK && f1 == 0.0);  /* no golds scores 0 */
  EXPECT(qat_token_f1(NULL, golds, 1, &f1) == QAT_ERR_ARGUMENT);
  EXPECT(strlen(qat_last_error()) > 0);

  qat_model* model = NULL;
  EXPECT(qat_model_overlap(1.0, &model) == QAT_OK);
  qat_prediction* pred = NULL;
  EXPECT(qat_predict(model, "Where is the old stadium ?", "The old stadium is in Chicago .", 5,
                     &pred) == QAT_OK);
  size_t n = qat_prediction_size(pred);
  EXPECT(n > 0 && n <= 5);
  double total = 0, prev = 2;
  for (size_t i = 0; i < n; ++i) {
    qat_span s;
    EXPECT(qat_prediction_span(pred, i, &s) == QAT_OK);
    EXPECT(s.start_token <= s.end_token);
    EXPECT(s.probability <= prev);
    prev = s.probability;
    total += s.probability;
  }
  EXPECT(total <= 1.0 + 1e-9);
  qat_span top;
  EXPECT(qat_prediction_span(pred, 0, &top) == QAT_OK && strcmp(top.text, "Chicago") == 0);
  EXPECT(qat_prediction_span(pred, n, &top) == QAT_ERR_ARGUMENT);
  qat_prediction_free(pred);
  EXPECT(qat_predict(model, "Where ?", "", 5, &pred) != QAT_OK);
  qat_model_free(model);

  EXPECT(qat_model_overlap(-1.0, &model) == QAT_ERR_VALIDATION);
  EXPECT(qat_model_http("ftp://nowhere", 1.0, 4, NULL, &model) == QAT_ERR_VALIDATION);
  EXPECT(qat_model_load_surrogate("/nonexistent/model", &model) == QAT_ERR_IO);

  qat_config* cfg = NULL;
  EXPECT(qat_config_parse("budget = 1\nbudget = 2\n", NULL, &cfg) == QAT_ERR_PARSE);
  EXPECT(qat_config_parse("colour = blue\n", NULL, &cfg) == QAT_ERR_VALIDATION);
  EXPECT(qat_config_load("/nonexistent/pipeline.cfg", &cfg) == QAT_ERR_IO);

  EXPECT(qat_config_load(QATTACK_DATA_DIR "/pipeline.cfg", &cfg) == QAT_OK);
  char h1[17], h2[17];
  EXPECT(qat_config_hash(cfg, h1) == QAT_OK && strlen(h1) == 16);
  EXPECT(qat_config_set(cfg, "workers", "2") == QAT_OK);
  EXPECT(qat_config_hash(cfg, h2) == QAT_OK && strcmp(h1, h2) == 0);
  EXPECT(qat_config_set(cfg, "seed", "9") == QAT_OK);
  EXPECT(qat_config_hash(cfg, h2) == QAT_OK && strcmp(h1, h2) != 0);
  EXPECT(qat_config_set(cfg, "budget", "-3") == QAT_ERR_VALIDATION);
  EXPECT(qat_config_validate(cfg) == QAT_OK);
  EXPECT(qat_config_set(cfg, "corpus", "/nonexistent/corpus.txt") == QAT_OK);
  EXPECT(qat_config_validate(cfg) == QAT_ERR_VALIDATION);
  int lines = 0;
  EXPECT(qat_run(cfg, QAT_CMD_PIPELINE, count_lines, &lines) == QAT_ERR_VALIDATION);
  EXPECT(qat_run(cfg, (qat_command)42, NULL, NULL) == QAT_ERR_ARGUMENT);
  qat_config_free(cfg);

  EXPECT(strcmp(qat_status_name(QAT_OK), "ok") == 0);
  EXPECT(qat_status_is_remote(QAT_ERR_TIMEOUT));
  EXPECT(!qat_status_is_remote(QAT_ERR_IO));

  if (failures) fprintf(stderr, "%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
