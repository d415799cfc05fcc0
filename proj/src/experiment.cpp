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

#include "bioctx/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"
#include "bioctx/metrics.hpp"
#include "bioctx/report.hpp"
#include "bioctx/rng.hpp"
#include "bioctx/serialize.hpp"

namespace bioctx {
namespace {

using nlohmann::json;

// Runs fn(0..n-1) on up to `jobs` threads. Warnings raised inside a task are
// replayed on the calling thread in task order, so collectors there see a
// deterministic sequence.
template <class Fn>
void parallel_tasks(std::size_t n, int jobs, Fn fn) {
  std::vector<std::vector<std::string>> warnings(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      WarningCollector wc;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      warnings[i] = wc.messages();
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& w : warnings[i]) warn(w);
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string stem_of(const std::filesystem::path& p) { return p.stem().string(); }

void zero_masked(ActivationRoll& roll) {
  for (Eigen::Index t = 0; t < roll.n_steps(); ++t)
    if (roll.masked(t)) roll.values.col(t).setZero();
}

// Mean/std summary of each segment clip: S x 2K.
Eigen::MatrixXd segment_features(const FeatureBasis& basis, const std::vector<Spectrogram>& mels) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mels.size()), 2 * basis.k());
  for (std::size_t s = 0; s < mels.size(); ++s) {
    const Eigen::MatrixXd frames = project(mels[s], basis);
    const SegmentFeatures f = summarize(frames, {{0, frames.rows()}}, 0.0);
    out.row(static_cast<Eigen::Index>(s)) = f.vectors.row(0);
  }
  return out;
}

// P(c,t) at the STFT hop. Masked frames are removed from V before the
// decomposition, so P(t) and hence P(c,t) ignore whatever audio they hold.
ActivationRoll plca_frame_scores(const RunConfig& run, const Dictionary& dict,
                                 const Prepared& p, const std::vector<std::uint8_t>& frame_na) {
  Spectrogram v = p.erb;
  for (Eigen::Index t = 0; t < v.n_frames(); ++t)
    if (frame_na[static_cast<std::size_t>(t)]) v.mags.col(t).setZero();
  const PlcaResult r =
      plca_decompose(v, dict, {run.em_iters, derive_seed(run.seed, fnv1a(p.name))});
  ActivationRoll roll(dict.classes, v.hop, v.n_frames());
  roll.values = apply_na(r.p_ct, frame_na);
  roll.na_mask = frame_na;
  return roll;
}

ActivationRoll pool_to_segments(const RunConfig& run, const ActivationRoll& frames,
                                const ActivationRoll& truth) {
  const PoolMode mode = run.pooling == PlcaPooling::kMean ? PoolMode::kMean : PoolMode::kMax;
  ActivationRoll seg = fit_steps(pool_roll(frames, run.segment, mode), truth.n_steps());
  seg.na_mask = truth.na_mask;
  zero_masked(seg);
  return seg;
}

// Frame decisions with duration pruning, max-pooled onto the segment grid
// by time overlap.
ActivationRoll highres_decisions(const RunConfig& run, const ActivationRoll& frames,
                                 const std::vector<double>& thresholds,
                                 const ActivationRoll& truth, AnnotationTrack* events) {
  const ActivationRoll frame_bin = binarize_events(frames, thresholds, run.min_duration);
  AnnotationTrack track = roll_to_track(frame_bin);
  ActivationRoll seg = rasterize(track, frames.classes, run.segment, truth.n_steps());
  seg.na_mask = truth.na_mask;
  zero_masked(seg);
  if (events) *events = std::move(track);
  return seg;
}

ActivationRoll single_class(const ActivationRoll& roll, Eigen::Index c) {
  ActivationRoll out({roll.classes[static_cast<std::size_t>(c)]}, roll.step, roll.n_steps());
  out.values.row(0) = roll.values.row(c);
  out.na_mask = roll.na_mask;
  return out;
}

// Training-set threshold search for highres output: candidates are frame
// score quantiles, the criterion is segment-level F after pruning and pooling.
std::vector<double> choose_highres_thresholds(const RunConfig& run,
                                              const std::vector<ActivationRoll>& frames,
                                              const std::vector<const Targets*>& targets) {
  const auto classes = frames.front().n_classes();
  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::vector<double> thr(static_cast<std::size_t>(classes), kNever);

  auto counts_for = [&](Eigen::Index c, double threshold) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < frames.size(); ++r) {
      const ActivationRoll& truth = targets[r]->segments;
      const ActivationRoll one = single_class(frames[r], c);
      const ActivationRoll one_truth = single_class(truth, c);
      const ActivationRoll dec = highres_decisions(run, one, {threshold}, one_truth, nullptr);
      const FScore f = class_f(dec.values, one_truth.values, truth.na_mask, 0);
      tp += f.tp;
      fp += f.fp;
      fn += f.fn;
    }
    return std::array<std::int64_t, 3>{tp, fp, fn};
  };
  auto values_of = [&](Eigen::Index c, std::vector<double>& out) {
    for (const auto& f : frames)
      for (Eigen::Index t = 0; t < f.n_steps(); ++t)
        if (!f.masked(t)) out.push_back(f.values(c, t));
  };
  std::vector<bool> has_pos(static_cast<std::size_t>(classes), false);
  for (const Targets* tg : targets)
    for (Eigen::Index c = 0; c < classes; ++c)
      for (Eigen::Index t = 0; t < tg->segments.n_steps(); ++t)
        if (!tg->segments.masked(t) && tg->segments.values(c, t) > 0.5)
          has_pos[static_cast<std::size_t>(c)] = true;

  if (!run.single_threshold) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!has_pos[static_cast<std::size_t>(c)]) continue;
      std::vector<double> values;
      values_of(c, values);
      double best = -1.0;
      for (double cand : quantile_candidates(std::move(values))) {
        const auto k = counts_for(c, cand);
        const double f = f_from_counts(k[0], k[1], k[2]).f;
        if (f > best) {
          best = f;
          thr[static_cast<std::size_t>(c)] = cand;
        }
      }
    }
    return thr;
  }
  std::vector<double> values;
  for (Eigen::Index c = 0; c < classes; ++c) values_of(c, values);
  double best = -1.0;
  double best_thr = kNever;
  for (double cand : quantile_candidates(std::move(values))) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!has_pos[static_cast<std::size_t>(c)]) continue;
      const auto k = counts_for(c, cand);
      tp += k[0];
      fp += k[1];
      fn += k[2];
    }
    const double f = f_from_counts(tp, fp, fn).f;
    if (f > best) {
      best = f;
      best_thr = cand;
    }
  }
  for (Eigen::Index c = 0; c < classes; ++c)
    if (has_pos[static_cast<std::size_t>(c)]) thr[static_cast<std::size_t>(c)] = best_thr;
  return thr;
}

bool is_viterbi(PostProc p) {
  return p == PostProc::kJointViterbi || p == PostProc::kPerClassViterbi;
}

HmmKind hmm_kind(PostProc p) {
  return p == PostProc::kJointViterbi || p == PostProc::kJointFilter ? HmmKind::kJoint
                                                                     : HmmKind::kPerClass;
}

// Raw detector output on the segment grid (and the frame grid for PLCA).
struct RawScores {
  ActivationRoll segments;
  ActivationRoll frames;
};

RawScores raw_scores(const TrainedSystem& sys, const Prepared& p, const Targets* targets) {
  const RunConfig& run = sys.run;
  ActivationRoll truth = targets ? targets->segments
                                 : ActivationRoll(sys.classes, run.segment, p.n_segments);
  RawScores out;
  if (run.system == SystemKind::kClassifier) {
    const Eigen::MatrixXd x = segment_features(sys.basis, p.segment_mels);
    out.segments = ActivationRoll(sys.classes, run.segment, p.n_segments);
    out.segments.values = predict_proba(sys.forest, x);
    out.segments.na_mask = truth.na_mask;
    zero_masked(out.segments);
    return out;
  }
  std::vector<std::uint8_t> frame_na =
      targets ? targets->frame_na
              : std::vector<std::uint8_t>(static_cast<std::size_t>(p.erb.n_frames()), 0);
  out.frames = plca_frame_scores(run, sys.dictionary, p, frame_na);
  out.segments = pool_to_segments(run, out.frames, truth);
  return out;
}

Prediction finish(const TrainedSystem& sys, const Prepared& p, RawScores raw,
                  const Targets* targets) {
  const RunConfig& run = sys.run;
  ActivationRoll truth = targets ? targets->segments
                                 : ActivationRoll(sys.classes, run.segment, p.n_segments);
  Prediction out;
  if (run.postproc == PostProc::kNone) {
    out.scores = std::move(raw.segments);
    if (run.system == SystemKind::kPlca && run.pooling == PlcaPooling::kHighRes) {
      out.decisions = highres_decisions(run, raw.frames, sys.thresholds, truth, &out.events);
      out.events.duration = p.duration;
      return out;
    }
    out.decisions = apply_thresholds(out.scores, sys.thresholds);
  } else if (is_viterbi(run.postproc)) {
    out.decisions = smooth(raw.segments, *sys.hmm, DecodeMode::kViterbi);
    out.scores = out.decisions;
  } else {
    out.scores = smooth(raw.segments, *sys.hmm, DecodeMode::kFilter);
    out.decisions = apply_thresholds(out.scores, sys.thresholds);
  }
  zero_masked(out.decisions);
  out.events = roll_to_track(out.decisions);
  out.events.duration = p.duration;
  return out;
}

void warn_scarce(const std::vector<std::string>& classes, const std::vector<const Targets*>& targets) {
  for (std::size_t c = 0; c < classes.size(); ++c) {
    bool any = false;
    for (const Targets* t : targets)
      for (Eigen::Index s = 0; s < t->segments.n_steps() && !any; ++s)
        any = !t->segments.masked(s) && t->segments.values(static_cast<Eigen::Index>(c), s) > 0.5;
    if (!any)
      warn(fmt::format("class '{}' has no positive training segments; it never fires",
                       classes[c]));
  }
}

std::vector<std::uint8_t> window_na(const AnnotationTrack& track,
                                    const std::vector<std::string>& classes, double hop,
                                    Eigen::Index frames) {
  // Frame t reads samples [t*hop, t*hop + 2*hop): it is missing data when
  // NA touches either of its two hops.
  const ActivationRoll r = rasterize(track, classes, hop, frames + 1, NaPolicy::kAny);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(frames), 0);
  for (Eigen::Index t = 0; t < frames; ++t)
    out[static_cast<std::size_t>(t)] = r.na_mask[static_cast<std::size_t>(t)] |
                                       r.na_mask[static_cast<std::size_t>(t + 1)];
  return out;
}

}  // namespace

CategoryMap resolve_category_map(const RunConfig& run) {
  if (!run.categories.empty()) return load_category_map(run.categories);
  if (!run.manifest.empty()) {
    const auto beside = run.manifest.parent_path() / "categories.toml";
    if (std::filesystem::exists(beside)) return load_category_map(beside);
  }
  return default_category_map();
}

LabeledCorpus load_corpus(const RunConfig& run) {
  if (run.manifest.empty()) throw ConfigError("no manifest given (set the manifest key)");
  LabeledCorpus c;
  c.manifest = read_manifest(run.manifest);
  c.categories = resolve_category_map(run);
  c.classes = c.categories.categories;
  if (c.classes.empty()) throw ConfigError("category map defines no categories");
  for (const auto& e : c.manifest.entries) {
    AnnotationTrack t = map_labels(read_label_track(e.labels), c.categories);
    t.duration = read_wav_info(e.audio).duration();
    c.tracks.push_back(std::move(t));
  }
  return c;
}

Prepared prepare(const RunConfig& run, const AudioClip& clip, std::string name) {
  if (clip.samples.empty()) throw DataError(fmt::format("{}: empty audio", name));
  Prepared p;
  p.name = std::move(name);
  p.duration = clip.duration();
  p.n_segments = steps_covering(p.duration, run.segment);
  if (run.system == SystemKind::kClassifier) {
    const std::size_t min_len =
        kFftSize + static_cast<std::size_t>(run.patch_frames - 1) * kHopSize;
    const double sr = clip.sample_rate;
    for (Eigen::Index s = 0; s < p.n_segments; ++s) {
      const auto begin = static_cast<std::size_t>(std::llround(static_cast<double>(s) * run.segment * sr));
      const auto end = std::min(clip.samples.size(),
                                static_cast<std::size_t>(std::llround(static_cast<double>(s + 1) * run.segment * sr)));
      AudioClip part;
      part.sample_rate = clip.sample_rate;
      part.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                          clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
      if (part.samples.size() < min_len) part.samples.resize(min_len, 0.0);
      p.segment_mels.push_back(log_compress(median_clip(mel_spectrogram(part, run.mel))));
    }
  } else {
    p.erb = preemphasize(erb_spectrogram(clip, run.erb), run.preemphasis);
  }
  return p;
}

Targets make_targets(const RunConfig& run, const std::vector<std::string>& classes,
                     const Prepared& p, const AnnotationTrack* track) {
  Targets t;
  const AnnotationTrack empty;
  const AnnotationTrack& tr = track ? *track : empty;
  t.segments = rasterize(tr, classes, run.segment, p.n_segments, run.na_policy);
  if (p.erb.n_frames() > 0) {
    t.frames = rasterize(tr, classes, p.erb.hop, p.erb.n_frames(), NaPolicy::kAny);
    t.frame_na = window_na(tr, classes, p.erb.hop, p.erb.n_frames());
    t.frames.na_mask = t.frame_na;
  }
  return t;
}

ActivationRoll plca_activations(const TrainedSystem& system, const Prepared& p,
                                const std::vector<std::uint8_t>& frame_na) {
  if (system.run.system != SystemKind::kPlca) throw ArgumentError("plca_activations: not a PLCA system");
  if (static_cast<Eigen::Index>(frame_na.size()) != p.erb.n_frames())
    throw ArgumentError("plca_activations: mask length differs from the frame count");
  return plca_frame_scores(system.run, system.dictionary, p, frame_na);
}

std::uint64_t training_seed(std::uint64_t seed, std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  std::string joined;
  for (const auto& n : names) joined += n + '\n';
  return derive_seed(seed, fnv1a(joined));
}

TrainedSystem train_system(const Config& config, const std::vector<std::string>& classes,
                           const std::vector<const Prepared*>& recs,
                           const std::vector<const Targets*>& targets) {
  if (recs.empty()) throw ConfigError("no training recordings");
  if (recs.size() != targets.size()) throw ArgumentError("train_system: misaligned inputs");
  TrainedSystem sys;
  sys.config = config;
  sys.run = resolve(config);
  sys.classes = classes;
  const RunConfig& run = sys.run;
  std::vector<std::string> names;
  for (const Prepared* p : recs) names.push_back(p->name);
  sys.seed = training_seed(run.seed, names);
  warn_scarce(classes, targets);

  std::vector<ActivationRoll> train_scores;
  std::vector<ActivationRoll> train_frames;
  if (run.system == SystemKind::kClassifier) {
    Eigen::Index n_patches = 0;
    for (std::size_t r = 0; r < recs.size(); ++r)
      for (std::size_t s = 0; s < recs[r]->segment_mels.size(); ++s) {
        const Eigen::Index frames = recs[r]->segment_mels[s].n_frames();
        if (!targets[r]->segments.masked(static_cast<Eigen::Index>(s)) && frames >= run.patch_frames)
          n_patches += (frames - run.patch_frames) / run.patch_stride + 1;
      }
    const Eigen::Index dim = static_cast<Eigen::Index>(run.patch_frames) * run.mel.n_bands;
    Eigen::MatrixXd patches(dim, n_patches);
    Eigen::Index at = 0;
    for (std::size_t r = 0; r < recs.size(); ++r)
      for (std::size_t s = 0; s < recs[r]->segment_mels.size(); ++s) {
        const Spectrogram& mel = recs[r]->segment_mels[s];
        if (targets[r]->segments.masked(static_cast<Eigen::Index>(s)) || mel.n_frames() < run.patch_frames)
          continue;
        const Eigen::MatrixXd p = extract_patches(mel, run.patch_frames, run.patch_stride);
        patches.middleCols(at, p.cols()) = p;
        at += p.cols();
      }
    BasisFitOptions bopts;
    bopts.k = run.features;
    bopts.iters = run.kmeans_iters;
    bopts.patch_frames = run.patch_frames;
    bopts.seed = derive_seed(sys.seed, 1);
    sys.basis = fit_basis(patches, bopts);

    std::vector<Eigen::MatrixXd> feats(recs.size());
    parallel_tasks(recs.size(), run.jobs,
                   [&](std::size_t r) { feats[r] = segment_features(sys.basis, recs[r]->segment_mels); });
    std::vector<std::pair<std::size_t, Eigen::Index>> rows;
    for (std::size_t r = 0; r < recs.size(); ++r)
      for (Eigen::Index s = 0; s < feats[r].rows(); ++s)
        if (!targets[r]->segments.masked(s)) rows.emplace_back(r, s);
    if (rows.empty()) throw DataError("every training segment is missing data");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 2 * sys.basis.k());
    Eigen::MatrixXd y(static_cast<Eigen::Index>(classes.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto [r, s] = rows[i];
      x.row(static_cast<Eigen::Index>(i)) = feats[r].row(s);
      y.col(static_cast<Eigen::Index>(i)) = targets[r]->segments.values.col(s);
    }
    ForestOptions fopts;
    fopts.n_trees = run.trees;
    fopts.weighting = run.balanced ? ClassWeighting::kBalanced : ClassWeighting::kUnbalanced;
    fopts.seed = derive_seed(sys.seed, 2);
    fopts.max_features = run.max_features;
    fopts.min_samples_split = run.min_samples_split;
    fopts.jobs = run.jobs;
    ForestFit fit = train_forest(x, y, fopts);
    sys.forest = std::move(fit.model);
    // Out-of-bag scores stand in for held-out training output.
    for (std::size_t r = 0; r < recs.size(); ++r) {
      ActivationRoll roll(classes, run.segment, recs[r]->n_segments);
      roll.na_mask = targets[r]->segments.na_mask;
      train_scores.push_back(std::move(roll));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto [r, s] = rows[i];
      train_scores[r].values.col(s) = fit.oob_scores.col(static_cast<Eigen::Index>(i));
    }
  } else {
    std::vector<Spectrogram> specs;
    std::vector<ActivationRoll> rolls;
    for (std::size_t r = 0; r < recs.size(); ++r) {
      specs.push_back(recs[r]->erb);
      rolls.push_back(targets[r]->frames);
    }
    DictionaryOptions dopts;
    dopts.exemplars = run.exemplars;
    dopts.kmeans_iters = run.dict_kmeans_iters;
    dopts.max_frames = run.dict_max_frames;
    dopts.seed = derive_seed(sys.seed, 3);
    sys.dictionary = build_dictionary(specs, rolls, dopts);
    specs.clear();
    train_frames.resize(recs.size());
    parallel_tasks(recs.size(), run.jobs, [&](std::size_t r) {
      train_frames[r] = plca_frame_scores(run, sys.dictionary, *recs[r], targets[r]->frame_na);
    });
    for (std::size_t r = 0; r < recs.size(); ++r)
      train_scores.push_back(pool_to_segments(run, train_frames[r], targets[r]->segments));
  }

  std::vector<ActivationRoll> truth;
  for (const Targets* t : targets) truth.push_back(t->segments);
  const ThresholdMode mode = run.single_threshold ? ThresholdMode::kSingle : ThresholdMode::kPerClass;
  if (run.postproc == PostProc::kNone) {
    if (run.system == SystemKind::kPlca && run.pooling == PlcaPooling::kHighRes)
      sys.thresholds = choose_highres_thresholds(run, train_frames, targets);
    else
      sys.thresholds = choose_thresholds(concat_rolls(train_scores), concat_rolls(truth), mode);
    return sys;
  }
  HmmTrainOptions hopts;
  hopts.max_components = run.hmm_components;
  hopts.ubm_iters = run.hmm_ubm_iters;
  hopts.state_iters = run.hmm_state_iters;
  hopts.seed = derive_seed(sys.seed, 4);
  sys.hmm = train_hmm(train_scores, truth, hmm_kind(run.postproc), hopts);
  if (!is_viterbi(run.postproc)) {
    std::vector<ActivationRoll> filtered;
    for (const auto& s : train_scores) filtered.push_back(smooth(s, *sys.hmm, DecodeMode::kFilter));
    sys.thresholds = choose_thresholds(concat_rolls(filtered), concat_rolls(truth), mode);
  }
  return sys;
}

Prediction predict(const TrainedSystem& sys, const Prepared& p, const Targets* targets) {
  return finish(sys, p, raw_scores(sys, p, targets), targets);
}

void save_system(const std::filesystem::path& dir, const TrainedSystem& sys) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  json bundle;
  bundle["format"] = "bioctx-model-1";
  bundle["config"] = sys.config.to_toml();
  bundle["classes"] = sys.classes;
  bundle["categories"] = format_category_map(sys.categories);
  bundle["seed"] = sys.seed;
  json thr = json::array();
  for (double t : sys.thresholds) thr.push_back(std::isinf(t) ? json("inf") : json(t));
  bundle["thresholds"] = thr;
  if (sys.run.system == SystemKind::kClassifier) {
    save_basis(dir / "basis.bin", sys.basis);
    save_forest(dir / "forest.bin", sys.forest);
  } else {
    save_dictionary(dir / "dictionary.bin", sys.dictionary);
  }
  if (sys.hmm) save_hmm(dir / "hmm.bin", *sys.hmm);
  std::ofstream out(dir / "bundle.json", std::ios::binary);
  out << bundle.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("cannot write {}", (dir / "bundle.json").string()));
}

TrainedSystem load_system(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bundle.json", std::ios::binary);
  if (!in) throw IoError(fmt::format("no model bundle at {}", dir.string()));
  json bundle;
  try {
    bundle = json::parse(in);
    if (bundle.at("format") != "bioctx-model-1") throw FormatError("unsupported model format");
    TrainedSystem sys;
    sys.config.merge_toml_text(bundle.at("config").get<std::string>(), "bundle.json");
    sys.run = resolve(sys.config);
    sys.classes = bundle.at("classes").get<std::vector<std::string>>();
    sys.categories = parse_category_map(bundle.at("categories").get<std::string>(), "bundle.json");
    sys.seed = bundle.at("seed").get<std::uint64_t>();
    for (const auto& t : bundle.at("thresholds"))
      sys.thresholds.push_back(t.is_string() ? std::numeric_limits<double>::infinity()
                                             : t.get<double>());
    if (sys.run.system == SystemKind::kClassifier) {
      sys.basis = load_basis(dir / "basis.bin");
      sys.forest = load_forest(dir / "forest.bin");
      if (sys.forest.n_classes != static_cast<int>(sys.classes.size()))
        throw FormatError("forest class count does not match the bundle");
    } else {
      sys.dictionary = load_dictionary(dir / "dictionary.bin");
      if (sys.dictionary.classes != sys.classes)
        throw FormatError("dictionary classes do not match the bundle");
    }
    if (sys.run.postproc != PostProc::kNone) sys.hmm = load_hmm(dir / "hmm.bin");
    if (!is_viterbi(sys.run.postproc) && sys.thresholds.size() != sys.classes.size())
      throw FormatError("bundle thresholds do not match the class list");
    return sys;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: malformed bundle.json ({})", dir.string(), e.what()));
  }
}

void write_prediction(const std::filesystem::path& csv, const std::filesystem::path& events,
                      const Prediction& pred) {
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", csv.string()));
  out << "segment_index,class,score\n";
  for (Eigen::Index s = 0; s < pred.scores.n_steps(); ++s)
    for (Eigen::Index c = 0; c < pred.scores.n_classes(); ++c)
      out << fmt::format("{},{},{:.17g}\n", s, pred.scores.classes[static_cast<std::size_t>(c)],
                         pred.scores.values(c, s));
  if (!out) throw IoError(fmt::format("failed writing {}", csv.string()));
  write_label_track(events, pred.events);
}

Prediction read_prediction(const std::filesystem::path& csv, const std::filesystem::path& events,
                           const std::vector<std::string>& classes, double segment,
                           Eigen::Index n_segments) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", csv.string()));
  Prediction p;
  p.scores = ActivationRoll(classes, segment, n_segments);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "segment_index,class,score")
        throw ParseError(1, csv.string() + ": expected header segment_index,class,score");
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    if (a == std::string::npos || a == b) throw ParseError(line_no, csv.string() + ": bad row");
    Eigen::Index s = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      s = static_cast<Eigen::Index>(std::stoll(line.substr(0, a), &used));
      if (used != a) throw std::invalid_argument("index");
      const std::string tail = line.substr(b + 1);
      score = std::stod(tail, &used);
      if (used != tail.size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw ParseError(line_no, csv.string() + ": non-numeric field");
    }
    const std::string cls = line.substr(a + 1, b - a - 1);
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) throw DataError(fmt::format("{}: unknown class '{}'", csv.string(), cls));
    if (s < 0 || s >= n_segments)
      throw DataError(fmt::format("{}: segment index {} out of range", csv.string(), s));
    p.scores.values(it - classes.begin(), s) = score;
  }
  p.events = read_label_track(events);
  p.decisions = rasterize(p.events, classes, segment, n_segments);
  return p;
}

json evaluate_fold(const RunConfig& run, const std::vector<std::string>& classes,
                   const std::vector<Prediction>& preds, const std::vector<const Targets*>& truth_in,
                   const std::vector<double>* thresholds) {
  std::vector<ActivationRoll> scores, decisions, truths;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    truths.push_back(truth_in[i]->segments);
    scores.push_back(preds[i].scores);
    decisions.push_back(preds[i].decisions);
    scores.back().na_mask = truths.back().na_mask;
    decisions.back().na_mask = truths.back().na_mask;
  }
  const ActivationRoll s = concat_rolls(scores);
  const ActivationRoll d = concat_rolls(decisions);
  const ActivationRoll y = concat_rolls(truths);

  json out;
  json per_class = json::array();
  double auc_sum = 0.0, f_sum = 0.0;
  int auc_n = 0, f_n = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const FScore f = class_f(d.values, y.values, y.na_mask, ci);
    const std::optional<double> a = class_auc(s, y, ci);
    json row;
    row["class"] = classes[c];
    row["positives"] = f.tp + f.fn;
    row["auc"] = a ? json(*a) : json(nullptr);
    row["f"] = f.f;
    row["precision"] = f.precision;
    row["recall"] = f.recall;
    row["precision_defined"] = f.precision_defined;
    row["recall_defined"] = f.recall_defined;
    if (thresholds && c < thresholds->size()) {
      const double t = (*thresholds)[c];
      row["threshold"] = std::isinf(t) ? json(nullptr) : json(t);
      row["never_fires"] = std::isinf(t);
    } else {
      row["threshold"] = nullptr;
      row["never_fires"] = false;
    }
    if (a) {
      auc_sum += *a;
      ++auc_n;
    }
    if (f.recall_defined) {
      f_sum += f.f;
      ++f_n;
    }
    per_class.push_back(row);
  }
  const FScore micro = micro_f(d.values, y.values, y.na_mask);
  out["micro"] = {{"f", micro.f},
                  {"precision", micro.precision},
                  {"recall", micro.recall},
                  {"precision_defined", micro.precision_defined},
                  {"recall_defined", micro.recall_defined},
                  {"tp", micro.tp},
                  {"fp", micro.fp},
                  {"fn", micro.fn}};
  out["macro_f"] = f_n ? json(f_sum / f_n) : json(nullptr);
  out["mean_auc"] = auc_n ? json(auc_sum / auc_n) : json(nullptr);
  out["f"] = run.f_average == FAverage::kMicro ? json(micro.f) : out["macro_f"];
  out["classes"] = per_class;
  std::int64_t masked = 0;
  for (auto m : y.na_mask) masked += m;
  out["segments"] = y.n_steps();
  out["masked_segments"] = masked;

  json budget = nullptr;
  try {
    const bool fuzzy = run.postproc == PostProc::kJointFilter || run.postproc == PostProc::kPerClassFilter;
    const TimeBudget bt = time_budget(y, run.budget_interval);
    const TimeBudget bp = time_budget(fuzzy ? s : d, run.budget_interval);
    auto rows = [](const TimeBudget& b) {
      json m = json::array();
      for (Eigen::Index c = 0; c < b.proportion.rows(); ++c) {
        json r = json::array();
        for (Eigen::Index g = 0; g < b.proportion.cols(); ++g) r.push_back(number_or_null(b.proportion(c, g)));
        m.push_back(r);
      }
      return m;
    };
    budget = {{"interval", run.budget_interval}, {"truth", rows(bt)}, {"predicted", rows(bp)}};
  } catch (const ArgumentError&) {
    warn(fmt::format("time budget skipped: interval {} s is not a multiple of the segment", run.budget_interval));
  }
  out["time_budget"] = budget;

  if (!preds.empty()) {
    json tl;
    tl["segment"] = run.segment;
    auto bits = [](const ActivationRoll& r) {
      json m = json::array();
      for (Eigen::Index c = 0; c < r.n_classes(); ++c) {
        std::string row;
        for (Eigen::Index t = 0; t < r.n_steps(); ++t) row += r.values(c, t) > 0.5 ? '1' : '0';
        m.push_back(row);
      }
      return m;
    };
    tl["truth"] = bits(truths.front());
    tl["predicted"] = bits(decisions.front());
    std::string na;
    for (auto m : truths.front().na_mask) na += m ? '1' : '0';
    tl["na"] = na;
    out["timeline"] = tl;
  }
  return out;
}

namespace {

struct Loaded {
  std::vector<Prepared> prepared;
  std::vector<Targets> targets;
};

Loaded load_recordings(const RunConfig& run, const LabeledCorpus& corpus,
                       const std::vector<std::size_t>& which) {
  Loaded l;
  l.prepared.resize(corpus.manifest.entries.size());
  l.targets.resize(corpus.manifest.entries.size());
  parallel_tasks(which.size(), run.jobs, [&](std::size_t k) {
    const std::size_t i = which[k];
    const auto& e = corpus.manifest.entries[i];
    const AudioClip clip = read_wav(e.audio);
    l.prepared[i] = prepare(run, clip, stem_of(e.audio));
    l.targets[i] = make_targets(run, corpus.classes, l.prepared[i], &corpus.tracks[i]);
  });
  return l;
}

std::vector<std::size_t> all_indices(const Manifest& m) {
  std::vector<std::size_t> v(m.entries.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

json path_list(const Manifest& m, const std::vector<std::size_t>& idx) {
  json a = json::array();
  for (std::size_t i : idx) a.push_back(m.entries[i].path);
  return a;
}

}  // namespace

json run_xval(const Config& config) {
  const RunConfig run = resolve(config);
  WarningCollector top;
  const LabeledCorpus corpus = load_corpus(run);
  const Scheme scheme = make_scheme(corpus.manifest, run.scheme);
  std::vector<std::size_t> used;
  for (const auto& f : scheme.folds) {
    used.insert(used.end(), f.train.begin(), f.train.end());
    used.insert(used.end(), f.test.begin(), f.test.end());
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  const Loaded data = load_recordings(run, corpus, used);

  json folds = json::array();
  for (const Fold& fold : scheme.folds) {
    WarningCollector wc;
    std::vector<const Prepared*> tr_p;
    std::vector<const Targets*> tr_t;
    for (std::size_t i : fold.train) {
      tr_p.push_back(&data.prepared[i]);
      tr_t.push_back(&data.targets[i]);
    }
    const TrainedSystem sys = train_system(config, corpus.classes, tr_p, tr_t);
    std::vector<Prediction> preds(fold.test.size());
    std::vector<const Targets*> te_t;
    for (std::size_t i : fold.test) te_t.push_back(&data.targets[i]);
    parallel_tasks(fold.test.size(), run.jobs, [&](std::size_t k) {
      const std::size_t i = fold.test[k];
      preds[k] = predict(sys, data.prepared[i], &data.targets[i]);
    });
    json f = evaluate_fold(run, corpus.classes, preds, te_t,
                           sys.thresholds.empty() ? nullptr : &sys.thresholds);
    f["id"] = fold.id;
    f["train"] = path_list(corpus.manifest, fold.train);
    f["test"] = path_list(corpus.manifest, fold.test);
    f["warnings"] = wc.messages();
    folds.push_back(std::move(f));
  }
  return assemble_report(config, "xval", scheme.name, corpus.classes, std::move(folds), top.messages());
}

TrainedSystem train_fold(const Config& config, int fold) {
  const RunConfig run = resolve(config);
  const LabeledCorpus corpus = load_corpus(run);
  std::vector<std::size_t> train;
  if (fold < 0) {
    train = all_indices(corpus.manifest);
  } else {
    const Scheme scheme = make_scheme(corpus.manifest, run.scheme);
    if (static_cast<std::size_t>(fold) >= scheme.folds.size())
      throw ConfigError(fmt::format("scheme {} has {} folds; fold {} requested", scheme.name,
                                    scheme.folds.size(), fold));
    train = scheme.folds[static_cast<std::size_t>(fold)].train;
  }
  const Loaded data = load_recordings(run, corpus, train);
  std::vector<const Prepared*> p;
  std::vector<const Targets*> t;
  for (std::size_t i : train) {
    p.push_back(&data.prepared[i]);
    t.push_back(&data.targets[i]);
  }
  TrainedSystem sys = train_system(config, corpus.classes, p, t);
  sys.categories = corpus.categories;
  return sys;
}

json run_eval(const Config& config, const std::filesystem::path& pred_dir, int fold) {
  const RunConfig run = resolve(config);
  WarningCollector top;
  const LabeledCorpus corpus = load_corpus(run);
  std::vector<std::size_t> test;
  std::string fold_id = "all";
  std::string scheme_name = "none";
  std::vector<std::size_t> train;
  if (fold < 0) {
    test = all_indices(corpus.manifest);
  } else {
    const Scheme scheme = make_scheme(corpus.manifest, run.scheme);
    if (static_cast<std::size_t>(fold) >= scheme.folds.size())
      throw ConfigError(fmt::format("scheme {} has {} folds; fold {} requested", scheme.name,
                                    scheme.folds.size(), fold));
    test = scheme.folds[static_cast<std::size_t>(fold)].test;
    train = scheme.folds[static_cast<std::size_t>(fold)].train;
    fold_id = scheme.folds[static_cast<std::size_t>(fold)].id;
    scheme_name = scheme.name;
  }
  std::vector<Prediction> preds;
  std::vector<Targets> targets;
  targets.reserve(test.size());
  for (std::size_t i : test) {
    const auto& e = corpus.manifest.entries[i];
    Prepared p;
    p.name = stem_of(e.audio);
    p.duration = corpus.tracks[i].duration;
    p.n_segments = steps_covering(p.duration, run.segment);
    targets.push_back(make_targets(run, corpus.classes, p, &corpus.tracks[i]));
    preds.push_back(read_prediction(pred_dir / (p.name + ".csv"), pred_dir / (p.name + ".events.txt"),
                                    corpus.classes, run.segment, p.n_segments));
  }
  std::vector<const Targets*> tp;
  for (const auto& t : targets) tp.push_back(&t);
  json f = evaluate_fold(run, corpus.classes, preds, tp, nullptr);
  f["id"] = fold_id;
  f["train"] = path_list(corpus.manifest, train);
  f["test"] = path_list(corpus.manifest, test);
  f["warnings"] = json::array();
  json folds = json::array();
  folds.push_back(std::move(f));
  return assemble_report(config, "eval", scheme_name, corpus.classes, std::move(folds), top.messages());
}

}  // namespace bioctx
