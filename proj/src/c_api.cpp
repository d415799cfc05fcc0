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

#include "bioctx/bioctx.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "bioctx/config.hpp"
#include "bioctx/error.hpp"
#include "bioctx/experiment.hpp"
#include "bioctx/frontend.hpp"
#include "bioctx/report.hpp"
#include "bioctx/synth.hpp"

struct bioctx_config {
  bioctx::Config config;
};

struct bioctx_model {
  bioctx::TrainedSystem system;
};

struct bioctx_report {
  nlohmann::json json;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
bioctx_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return BIOCTX_OK;
  } catch (const bioctx::ConfigError& e) {
    g_last_error = e.what();
    return BIOCTX_E_CONFIG;
  } catch (const bioctx::ArgumentError& e) {
    g_last_error = e.what();
    return BIOCTX_E_CONFIG;
  } catch (const bioctx::DataError& e) {
    g_last_error = e.what();
    return BIOCTX_E_DATA;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return BIOCTX_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return BIOCTX_E_INTERNAL;
  } catch (...) {
    g_last_error = "internal error";
    return BIOCTX_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw bioctx::ArgumentError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* bioctx_version(void) { return "1.0.0"; }

const char* bioctx_last_error(void) { return g_last_error.c_str(); }

void bioctx_string_free(char* s) { std::free(s); }

bioctx_status bioctx_config_new(bioctx_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new bioctx_config();
  });
}

void bioctx_config_free(bioctx_config* cfg) { delete cfg; }

bioctx_status bioctx_config_load_file(bioctx_config* cfg, const char* path) {
  return guard([&] {
    require(cfg, "cfg");
    require(path, "path");
    cfg->config.merge_toml_file(path);
  });
}

bioctx_status bioctx_config_set(bioctx_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->config.set(key, value);
  });
}

bioctx_status bioctx_config_get(const bioctx_config* cfg, const char* key, char** value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    *value = dup_string(cfg->config.get_text(key));
  });
}

bioctx_status bioctx_config_dump(const bioctx_config* cfg, char** toml) {
  return guard([&] {
    require(cfg, "cfg");
    require(toml, "toml");
    *toml = dup_string(cfg->config.to_toml());
  });
}

size_t bioctx_config_key_count(void) { return bioctx::config_keys().size(); }

bioctx_status bioctx_config_key_info(size_t index, const char** name, const char** default_value,
                                     const char** help, const char** choices) {
  static const std::vector<std::string> joined = [] {
    std::vector<std::string> v;
    for (const auto& k : bioctx::config_keys()) {
      std::string s;
      for (const auto& c : k.choices) s += (s.empty() ? "" : "|") + c;
      v.push_back(s);
    }
    return v;
  }();
  return guard([&] {
    const auto& keys = bioctx::config_keys();
    if (index >= keys.size()) throw bioctx::ArgumentError("config key index out of range");
    if (name) *name = keys[index].name.c_str();
    if (default_value) *default_value = keys[index].default_value.c_str();
    if (help) *help = keys[index].help.c_str();
    if (choices) *choices = joined[index].c_str();
  });
}

void bioctx_synth_defaults(bioctx_synth_params* p) {
  if (p == nullptr) return;
  const bioctx::CorpusConfig d;
  p->individuals = d.individuals;
  p->per_individual = d.per_individual;
  p->field_individuals = d.field_individuals;
  p->field_per_individual = d.field_per_individual;
  p->duration = d.duration;
  p->na_per_minute = d.na_per_minute;
  p->max_activity = d.max_activity;
  p->seed = d.seed;
  p->jobs = d.jobs;
}

bioctx_status bioctx_synth(const bioctx_synth_params* p, const char* out_dir) {
  return guard([&] {
    require(p, "params");
    require(out_dir, "out_dir");
    bioctx::CorpusConfig c;
    c.individuals = p->individuals;
    c.per_individual = p->per_individual;
    c.field_individuals = p->field_individuals;
    c.field_per_individual = p->field_per_individual;
    c.duration = p->duration;
    c.na_per_minute = p->na_per_minute;
    c.max_activity = p->max_activity;
    c.seed = p->seed;
    c.jobs = p->jobs;
    if (!(c.duration > 0.0)) throw bioctx::ConfigError("duration must be positive");
    if (!(c.max_activity > 0.0 && c.max_activity <= 1.0))
      throw bioctx::ConfigError("max activity must be in (0, 1]");
    if (c.na_per_minute < 0.0) throw bioctx::ConfigError("NA rate must be >= 0");
    bioctx::generate_corpus(c, out_dir);
  });
}

bioctx_status bioctx_train(const bioctx_config* cfg, int fold, bioctx_model** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    auto m = std::make_unique<bioctx_model>();
    m->system = bioctx::train_fold(cfg->config, fold);
    *out = m.release();
  });
}

bioctx_status bioctx_model_save(const bioctx_model* model, const char* dir) {
  return guard([&] {
    require(model, "model");
    require(dir, "dir");
    bioctx::save_system(dir, model->system);
  });
}

bioctx_status bioctx_model_load(const char* dir, bioctx_model** out) {
  return guard([&] {
    require(dir, "dir");
    require(out, "out");
    auto m = std::make_unique<bioctx_model>();
    m->system = bioctx::load_system(dir);
    *out = m.release();
  });
}

void bioctx_model_free(bioctx_model* model) { delete model; }

bioctx_status bioctx_infer(const bioctx_model* model, const char* wav, const char* labels,
                           const char* out_csv, const char* out_events) {
  return guard([&] {
    require(model, "model");
    require(wav, "wav");
    require(out_csv, "out_csv");
    require(out_events, "out_events");
    const auto& sys = model->system;
    const bioctx::AudioClip clip = bioctx::read_wav(wav);
    const bioctx::Prepared p =
        bioctx::prepare(sys.run, clip, std::filesystem::path(wav).stem().string());
    bioctx::Prediction pred;
    if (labels) {
      bioctx::AnnotationTrack track =
          bioctx::map_labels(bioctx::read_label_track(labels), sys.categories);
      track.duration = p.duration;
      const bioctx::Targets t = bioctx::make_targets(sys.run, sys.classes, p, &track);
      pred = bioctx::predict(sys, p, &t);
    } else {
      pred = bioctx::predict(sys, p, nullptr);
    }
    bioctx::write_prediction(out_csv, out_events, pred);
  });
}

bioctx_status bioctx_xval(const bioctx_config* cfg, bioctx_report** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    auto r = std::make_unique<bioctx_report>();
    r->json = bioctx::run_xval(cfg->config);
    *out = r.release();
  });
}

bioctx_status bioctx_eval(const bioctx_config* cfg, const char* pred_dir, int fold,
                          bioctx_report** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(pred_dir, "pred_dir");
    require(out, "out");
    auto r = std::make_unique<bioctx_report>();
    r->json = bioctx::run_eval(cfg->config, pred_dir, fold);
    *out = r.release();
  });
}

size_t bioctx_report_fold_count(const bioctx_report* report) {
  return report ? report->json.at("folds").size() : 0;
}

double bioctx_report_median(const bioctx_report* report, const char* metric) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (report == nullptr || metric == nullptr) return nan;
  const auto& summary = report->json.at("summary");
  if (!summary.contains(metric) || metric == std::string("classes")) return nan;
  const auto& m = summary.at(metric).at("median");
  return m.is_number() ? m.get<double>() : nan;
}

bioctx_status bioctx_report_json(const bioctx_report* report, char** json) {
  return guard([&] {
    require(report, "report");
    require(json, "json");
    *json = dup_string(report->json.dump(2) + "\n");
  });
}

bioctx_status bioctx_report_write(const bioctx_report* report, const char* dir) {
  return guard([&] {
    require(report, "report");
    require(dir, "dir");
    bioctx::write_report_files(dir, report->json);
  });
}

void bioctx_report_free(bioctx_report* report) { delete report; }

bioctx_status bioctx_spectrogram(const char* wav, const char* kind, const bioctx_config* cfg,
                                 const char* out_csv, const char* out_png) {
  return guard([&] {
    require(wav, "wav");
    require(kind, "kind");
    const bioctx::RunConfig run = bioctx::resolve(cfg ? cfg->config : bioctx::Config());
    const bioctx::AudioClip clip = bioctx::read_wav(wav);
    bioctx::Spectrogram spec;
    const std::string k(kind);
    if (k == "mel")
      spec = bioctx::log_compress(bioctx::median_clip(bioctx::mel_spectrogram(clip, run.mel)));
    else if (k == "erb")
      spec = bioctx::preemphasize(bioctx::erb_spectrogram(clip, run.erb), run.preemphasis);
    else
      throw bioctx::ConfigError("spectrogram kind must be mel or erb");
    if (out_csv) bioctx::write_spectrogram_csv(out_csv, spec);
    if (out_png) bioctx::write_spectrogram_png(out_png, spec);
  });
}

}  // extern "C"
