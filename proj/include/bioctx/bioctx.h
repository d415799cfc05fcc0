// Copyright 2026 The bioctx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the bioctx toolkit. Every object is an opaque handle owned
 * by the caller and released with its _free function. Functions return a
 * bioctx_status; on failure bioctx_last_error() describes the problem. */
#ifndef BIOCTX_BIOCTX_H
#define BIOCTX_BIOCTX_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BIOCTX_API __declspec(dllexport)
#else
#define BIOCTX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bioctx_status {
  BIOCTX_OK = 0,
  BIOCTX_E_CONFIG = 2,   /* bad configuration or arguments */
  BIOCTX_E_DATA = 3,     /* unreadable or malformed input, I/O failure */
  BIOCTX_E_INTERNAL = 4
} bioctx_status;

typedef struct bioctx_config bioctx_config;
typedef struct bioctx_model bioctx_model;
typedef struct bioctx_report bioctx_report;

BIOCTX_API const char* bioctx_version(void);

/* Message for the last failure on the calling thread ("" if none). */
BIOCTX_API const char* bioctx_last_error(void);

/* Strings returned through char** out-parameters. */
BIOCTX_API void bioctx_string_free(char* s);

/* ---- configuration ---- */

BIOCTX_API bioctx_status bioctx_config_new(bioctx_config** out);
BIOCTX_API void bioctx_config_free(bioctx_config* cfg);
/* Merges a TOML file of top-level keys; unknown keys fail. */
BIOCTX_API bioctx_status bioctx_config_load_file(bioctx_config* cfg, const char* path);
BIOCTX_API bioctx_status bioctx_config_set(bioctx_config* cfg, const char* key, const char* value);
BIOCTX_API bioctx_status bioctx_config_get(const bioctx_config* cfg, const char* key, char** value);
/* Current settings as TOML. */
BIOCTX_API bioctx_status bioctx_config_dump(const bioctx_config* cfg, char** toml);

BIOCTX_API size_t bioctx_config_key_count(void);
/* choices is "a|b|c" for enumerated keys and "" otherwise. Pointers stay
 * valid for the life of the process. */
BIOCTX_API bioctx_status bioctx_config_key_info(size_t index, const char** name,
                                                const char** default_value,
                                                const char** help, const char** choices);

/* ---- synthetic corpus ---- */

typedef struct bioctx_synth_params {
  int individuals;            /* captive */
  int per_individual;
  int field_individuals;
  int field_per_individual;
  double duration;            /* seconds per recording */
  double na_per_minute;
  double max_activity;
  uint64_t seed;
  int jobs;
} bioctx_synth_params;

BIOCTX_API void bioctx_synth_defaults(bioctx_synth_params* params);
/* Writes WAVs, label tracks, manifest.csv and categories.toml. */
BIOCTX_API bioctx_status bioctx_synth(const bioctx_synth_params* params, const char* out_dir);

/* ---- models ---- */

/* Trains on fold `fold` of the configured scheme, or on the whole manifest
 * when fold < 0. */
BIOCTX_API bioctx_status bioctx_train(const bioctx_config* cfg, int fold, bioctx_model** out);
BIOCTX_API bioctx_status bioctx_model_save(const bioctx_model* model, const char* dir);
BIOCTX_API bioctx_status bioctx_model_load(const char* dir, bioctx_model** out);
BIOCTX_API void bioctx_model_free(bioctx_model* model);

/* Predicts one recording. `labels` (may be NULL) is a raw label track whose
 * NA spans are excluded. Writes `segment_index,class,score` rows to out_csv
 * and the binary decisions as a label track to out_events. */
BIOCTX_API bioctx_status bioctx_infer(const bioctx_model* model, const char* wav,
                                      const char* labels, const char* out_csv,
                                      const char* out_events);

/* ---- evaluation ---- */

BIOCTX_API bioctx_status bioctx_xval(const bioctx_config* cfg, bioctx_report** out);
/* Scores <stem>.csv / <stem>.events.txt files in pred_dir against the
 * manifest labels for one fold's test files (fold < 0: all files). */
BIOCTX_API bioctx_status bioctx_eval(const bioctx_config* cfg, const char* pred_dir, int fold,
                                     bioctx_report** out);
BIOCTX_API size_t bioctx_report_fold_count(const bioctx_report* report);
/* Median across folds of a summary metric: "f", "micro_f",
 * "micro_precision", "micro_recall", "macro_f" or "mean_auc". NaN when
 * undefined or unknown. */
BIOCTX_API double bioctx_report_median(const bioctx_report* report, const char* metric);
BIOCTX_API bioctx_status bioctx_report_json(const bioctx_report* report, char** json);
/* report.json, report.csv and SVG plots. */
BIOCTX_API bioctx_status bioctx_report_write(const bioctx_report* report, const char* dir);
BIOCTX_API void bioctx_report_free(bioctx_report* report);

/* ---- inspection ---- */

/* kind is "mel" (median-clipped, log-compressed) or "erb" (pre-emphasised).
 * cfg may be NULL for defaults. Either output path may be NULL. */
BIOCTX_API bioctx_status bioctx_spectrogram(const char* wav, const char* kind,
                                            const bioctx_config* cfg, const char* out_csv,
                                            const char* out_png);

#ifdef __cplusplus
}
#endif

#endif
