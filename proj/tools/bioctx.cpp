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

// bioctx command-line front end. Links only against the C API.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "bioctx/bioctx.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  int code;
};

void check(bioctx_status st) {
  if (st != BIOCTX_OK) {
    fmt::print(stderr, "bioctx: {}\n", bioctx_last_error());
    throw Failure{static_cast<int>(st)};
  }
}

class ConfigHandle {
 public:
  ConfigHandle() { check(bioctx_config_new(&cfg_)); }
  ~ConfigHandle() { bioctx_config_free(cfg_); }
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  bioctx_config* get() const { return cfg_; }

  std::string text(const char* key) const {
    char* v = nullptr;
    check(bioctx_config_get(cfg_, key, &v));
    std::string s(v);
    bioctx_string_free(v);
    return s;
  }

 private:
  bioctx_config* cfg_ = nullptr;
};

struct ReportHandle {
  bioctx_report* r = nullptr;
  ~ReportHandle() { bioctx_report_free(r); }
};

struct ModelHandle {
  bioctx_model* m = nullptr;
  ~ModelHandle() { bioctx_model_free(m); }
};

// --config plus one flag per registered key.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "TOML configuration file")->check(CLI::ExistingFile);
    for (size_t i = 0; i < bioctx_config_key_count(); ++i) {
      const char *name, *def, *help, *choices;
      check(bioctx_config_key_info(i, &name, &def, &help, &choices));
      std::string desc = help;
      if (*choices) desc += fmt::format(" {{{}}}", choices);
      desc += fmt::format(" [{}]", def);
      app->add_option(std::string("--") + name, values[name], desc);
      order.push_back(name);
    }
    owner = app;
  }

  void apply(ConfigHandle& cfg) const {
    if (!file.empty()) check(bioctx_config_load_file(cfg.get(), file.c_str()));
    for (const auto& k : order)
      if (owner->count("--" + k) > 0) check(bioctx_config_set(cfg.get(), k.c_str(), values.at(k).c_str()));
  }

  std::vector<std::string> order;
  CLI::App* owner = nullptr;
};

std::string key_listing() {
  std::string out = "Configuration keys (TOML or --key VALUE; flags win):\n";
  for (size_t i = 0; i < bioctx_config_key_count(); ++i) {
    const char *name, *def, *help, *choices;
    check(bioctx_config_key_info(i, &name, &def, &help, &choices));
    out += fmt::format("  {:<22} {} [{}]{}\n", name, help, def,
                       *choices ? fmt::format(" {{{}}}", choices) : std::string());
  }
  return out;
}

void print_summary(const bioctx_report* r) {
  const size_t folds = bioctx_report_fold_count(r);
  fmt::print("{} fold{}\n", folds, folds == 1 ? "" : "s");
  for (const char* m : {"f", "micro_f", "macro_f", "mean_auc"}) {
    const double v = bioctx_report_median(r, m);
    if (std::isnan(v))
      fmt::print("  {:<10} n/a\n", m);
    else
      fmt::print("  {:<10} {:.4f}\n", m, v);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"bioctx: activity annotation for on-animal audio"};
  app.require_subcommand(1);
  app.footer(key_listing());
  app.set_version_flag("--version", std::string(bioctx_version()));

  // synth
  bioctx_synth_params sp;
  bioctx_synth_defaults(&sp);
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
  synth->add_option("--individuals", sp.individuals, "captive individuals")->capture_default_str();
  synth->add_option("--per-ind", sp.per_individual, "recordings per captive individual")->capture_default_str();
  synth->add_option("--field-individuals", sp.field_individuals, "field individuals")->capture_default_str();
  synth->add_option("--field-per-ind", sp.field_per_individual, "recordings per field individual")
      ->capture_default_str();
  synth->add_option("--duration", sp.duration, "seconds per recording")->capture_default_str();
  synth->add_option("--na-rate", sp.na_per_minute, "NA spans per minute")->capture_default_str();
  synth->add_option("--max-activity", sp.max_activity, "cap on per-class active fraction")->capture_default_str();
  synth->add_option("--seed", sp.seed, "corpus seed")->capture_default_str();
  synth->add_option("--jobs", sp.jobs, "worker threads")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  ConfigFlags train_flags;
  int train_fold = -1;
  std::string train_model;
  auto* train = app.add_subcommand("train", "train a model on one fold or the whole manifest");
  train_flags.attach(train);
  train->add_option("--fold", train_fold, "fold index (default: all recordings)");
  train->add_option("--model", train_model, "model directory (default: <output>/model)");

  // infer
  std::string infer_model, infer_out;
  std::vector<std::string> infer_wavs;
  bool infer_no_labels = false;
  auto* infer = app.add_subcommand("infer", "predict activity for recordings");
  infer->add_option("--model", infer_model, "model directory")->required();
  infer->add_option("--out", infer_out, "prediction directory")->required();
  infer->add_flag("--no-labels", infer_no_labels, "ignore sibling label tracks (no NA masking)");
  infer->add_option("wavs", infer_wavs, "WAV files")->required();

  // eval
  ConfigFlags eval_flags;
  std::string eval_pred;
  int eval_fold = -1;
  auto* eval = app.add_subcommand("eval", "score predictions against manifest labels");
  eval_flags.attach(eval);
  eval->add_option("--predictions", eval_pred, "prediction directory")->required();
  eval->add_option("--fold", eval_fold, "fold whose test files are scored (default: all)");

  // xval
  ConfigFlags xval_flags;
  auto* xval = app.add_subcommand("xval", "run a crossvalidation scheme");
  xval_flags.attach(xval);

  // spectrogram
  ConfigFlags spec_flags;
  std::string spec_wav, spec_kind = "mel", spec_csv, spec_png;
  auto* spec = app.add_subcommand("spectrogram", "dump a spectrogram as CSV and/or PNG");
  spec_flags.attach(spec);
  spec->add_option("wav", spec_wav, "WAV file")->required();
  spec->add_option("--kind", spec_kind, "representation")->check(CLI::IsMember({"mel", "erb"}))->capture_default_str();
  spec->add_option("--csv", spec_csv, "CSV output path");
  spec->add_option("--png", spec_png, "PNG output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*synth) {
    check(bioctx_synth(&sp, synth_out.c_str()));
    fmt::print("wrote corpus to {}\n", synth_out);
  } else if (*train) {
    ConfigHandle cfg;
    train_flags.apply(cfg);
    const std::string dir = train_model.empty() ? (fs::path(cfg.text("output")) / "model").string() : train_model;
    ModelHandle m;
    check(bioctx_train(cfg.get(), train_fold, &m.m));
    check(bioctx_model_save(m.m, dir.c_str()));
    fmt::print("wrote model to {}\n", dir);
  } else if (*infer) {
    ModelHandle m;
    check(bioctx_model_load(infer_model.c_str(), &m.m));
    fs::create_directories(infer_out);
    for (const auto& wav : infer_wavs) {
      const fs::path w(wav);
      const fs::path labels = fs::path(w).replace_extension(".txt");
      const bool use_labels = !infer_no_labels && fs::exists(labels);
      const fs::path base = fs::path(infer_out) / w.stem();
      const std::string csv = base.string() + ".csv";
      const std::string events = base.string() + ".events.txt";
      const std::string lab = labels.string();
      check(bioctx_infer(m.m, wav.c_str(), use_labels ? lab.c_str() : nullptr, csv.c_str(), events.c_str()));
    }
    fmt::print("wrote {} prediction(s) to {}\n", infer_wavs.size(), infer_out);
  } else if (*eval || *xval) {
    ConfigHandle cfg;
    ReportHandle r;
    if (*eval) {
      eval_flags.apply(cfg);
      check(bioctx_eval(cfg.get(), eval_pred.c_str(), eval_fold, &r.r));
    } else {
      xval_flags.apply(cfg);
      check(bioctx_xval(cfg.get(), &r.r));
    }
    const std::string out = cfg.text("output");
    check(bioctx_report_write(r.r, out.c_str()));
    print_summary(r.r);
    fmt::print("wrote report to {}\n", out);
  } else if (*spec) {
    ConfigHandle cfg;
    spec_flags.apply(cfg);
    if (spec_csv.empty() && spec_png.empty()) {
      fmt::print(stderr, "bioctx: spectrogram needs --csv or --png\n");
      return 2;
    }
    check(bioctx_spectrogram(spec_wav.c_str(), spec_kind.c_str(), cfg.get(),
                             spec_csv.empty() ? nullptr : spec_csv.c_str(),
                             spec_png.empty() ? nullptr : spec_png.c_str()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    return f.code;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "bioctx: {}\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "bioctx: {}\n", e.what());
    return 4;
  }
}
