#ifndef MODCASCADE_H
#define MODCASCADE_H

/* C interface to the moderation cascade and its evaluation harness.
 *
 * Every function returns an mc_status. On failure, mc_last_error() returns a
 * message for the calling thread, valid until that thread's next call.
 * Strings handed out through char** parameters are owned by the caller and
 * released with mc_string_free. Handles are released with their *_free
 * function; passing NULL to any *_free is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(MODCASCADE_BUILDING_LIBRARY)
#define MC_API __attribute__((visibility("default")))
#else
#define MC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mc_status {
  MC_OK = 0,
  MC_ERR_INVALID_ARGUMENT = 1,
  MC_ERR_PARSE = 2,
  MC_ERR_INVARIANT = 3,
  MC_ERR_DUPLICATE_ID = 4,
  MC_ERR_UNKNOWN_IMAGE = 5,
  MC_ERR_BACKEND = 6,
  MC_ERR_MALFORMED_RESPONSE = 7,
  MC_ERR_CONTRACT = 8,
  MC_ERR_EMPTY_MATRIX = 9,
  MC_ERR_UNDEFINED_PRECISION = 10,
  MC_ERR_UNDEFINED_RECALL = 11,
  MC_ERR_EMPTY_SAMPLES = 12,
  MC_ERR_REGIME_MISMATCH = 13,
  MC_ERR_SUBSET_MISMATCH = 14,
  MC_ERR_NON_CONTROL_SUBSET = 15,
  MC_ERR_CONCURRENT_RUN = 16,
  MC_ERR_IO = 17,
  MC_ERR_INTERNAL = 99
} mc_status;

MC_API const char* mc_version(void);
MC_API const char* mc_status_name(mc_status status);
MC_API const char* mc_last_error(void);
MC_API void mc_string_free(char* s);

/* ---- Replay fixtures ---------------------------------------------------- */

typedef struct mc_fixtures mc_fixtures;

MC_API mc_status mc_fixtures_load(const char* path, mc_fixtures** out);
MC_API mc_status mc_fixtures_parse(const char* text, mc_fixtures** out);
MC_API void mc_fixtures_free(mc_fixtures* f);

/* ---- Manifests ---------------------------------------------------------- */

typedef struct mc_manifest mc_manifest;

MC_API mc_status mc_manifest_load(const char* path, mc_manifest** out);
MC_API mc_status mc_manifest_parse(const char* text, mc_manifest** out);
MC_API void mc_manifest_free(mc_manifest* m);

/* kind: full, text_visual, text_only or control_safe. */
MC_API mc_status mc_manifest_filter(const mc_manifest* m, const char* kind, mc_manifest** out);
MC_API mc_status mc_manifest_counts(const mc_manifest* m, size_t* total, size_t* unsafe,
                                    size_t* safe);
/* Sets *pass to 1 when all three counts match. */
MC_API mc_status mc_manifest_validate_counts(const mc_manifest* m, size_t total, size_t unsafe,
                                             size_t safe, int* pass);
MC_API mc_status mc_manifest_to_text(const mc_manifest* m, char** out);

/* ---- Moderation --------------------------------------------------------- */

typedef struct mc_routing_config {
  double tau_low;
  double tau_high;
  int text_trigger;
} mc_routing_config;

MC_API void mc_routing_config_default(mc_routing_config* cfg);

/* Reads a routing configuration file (key = value lines: tau_low, tau_high,
 * text_trigger, regime). *regime_out, if not NULL, receives the regime. */
MC_API mc_status mc_routing_config_load(const char* path, mc_routing_config* cfg,
                                        char** regime_out);

/* regime: vision_only or multimodal. With fake_clock set, timings come from
 * the fixture's declared per-call costs instead of the wall clock.
 * *json_out receives the moderation response body served by POST /moderate. */
MC_API mc_status mc_moderate(const mc_fixtures* f, const char* image_id, const char* regime,
                             const mc_routing_config* cfg, int fake_clock, char** json_out);

/* ---- Confusion-matrix derivation ---------------------------------------- */

typedef struct mc_metric_query {
  int has_accuracy;
  double accuracy;
  int has_precision;
  double precision;
  int has_recall;
  double recall;
  int has_f1;
  double f1;
} mc_metric_query;

typedef enum mc_derivation {
  MC_DERIVATION_UNIQUE = 0,
  MC_DERIVATION_MULTIPLE = 1,
  MC_DERIVATION_INFEASIBLE = 2
} mc_derivation;

/* *json_out: {"status": "...", "candidates": [{"tp":..,"fp":..,"tn":..,
 * "fn":..,"max_gap":..}, ...]}. */
MC_API mc_status mc_derive(int64_t positives, int64_t negatives, const mc_metric_query* query,
                           int decimals, mc_derivation* result, char** json_out);

/* ---- Evaluation ---------------------------------------------------------- */

typedef struct mc_eval_options {
  int warmup;
  int fake_clock;
  int parallel_models;
  mc_routing_config routing;
} mc_eval_options;

MC_API void mc_eval_options_default(mc_eval_options* opts);

/* regime: vision_only, multimodal or both; "both" also appends the Stage-2
 * delta row. *report_out receives the structured report. Models whose
 * backends failed are listed in *failures_out as a JSON array (pass NULL to
 * ignore) and counted in *failure_count. */
MC_API mc_status mc_eval(const mc_fixtures* f, const mc_manifest* m, const char* subset,
                         const char* regime, const mc_eval_options* opts, char** report_out,
                         char** failures_out, size_t* failure_count);

/* Latency benchmark of the regime's suite over the manifest:
 * *json_out: [{"model":..,"mean_ms":..,"count":..,"warmup_discarded":..,
 * "stage2_fraction":..}, ...]. */
MC_API mc_status mc_bench(const mc_fixtures* f, const mc_manifest* m, const char* regime,
                          const mc_eval_options* opts, char** json_out);

/* format: table, delimited (csv) or structured (json). */
MC_API mc_status mc_report_render(const char* structured_report, const char* format,
                                  char** out);
MC_API mc_status mc_plot_data(const char* structured_report, char** precision_recall_out,
                              char** pareto_out);

/* ---- Fixture synthesis --------------------------------------------------- */

MC_API mc_status mc_fixture_generate(const char* spec_json, char** manifest_out,
                                     char** fixture_out);

/* ---- HTTP service -------------------------------------------------------- */

typedef struct mc_server mc_server;

/* Loads the optional JSON service config (path may be NULL), then applies
 * MODCASCADE_LISTEN and MODCASCADE_FIXTURES. *json_out: {"host","port",
 * "fixtures","tau_low","tau_high","text_trigger","regime"}. */
MC_API mc_status mc_service_config_load(const char* path, char** json_out);

MC_API mc_status mc_server_create(const mc_fixtures* f, const mc_routing_config* cfg,
                                  const char* regime, const char* label, mc_server** out);
MC_API mc_status mc_server_bind(mc_server* s, const char* host, int port, int* bound_port);
/* Blocks until mc_server_stop is called from another thread. */
MC_API mc_status mc_server_run(mc_server* s);
MC_API void mc_server_stop(mc_server* s);
MC_API void mc_server_free(mc_server* s);

#ifdef __cplusplus
}
#endif

#endif
