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

#include "bioctx/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include <fmt/core.h>

#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"
#include "bioctx/rng.hpp"

namespace bioctx {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// RBJ cookbook second-order section, direct form I.
class Biquad {
 public:
  static Biquad lowpass(double fc, double sr) { return design(fc, sr, false); }
  static Biquad highpass(double fc, double sr) { return design(fc, sr, true); }

  double operator()(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  static Biquad design(double fc, double sr, bool high) {
    fc = std::clamp(fc, 1.0, 0.45 * sr);
    const double w0 = kTwoPi * fc / sr;
    const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad q;
    if (high) {
      q.b0_ = (1.0 + c) / 2.0 / a0;
      q.b1_ = -(1.0 + c) / a0;
    } else {
      q.b0_ = (1.0 - c) / 2.0 / a0;
      q.b1_ = (1.0 - c) / a0;
    }
    q.b2_ = q.b0_;
    q.a1_ = -2.0 * c / a0;
    q.a2_ = (1.0 - alpha) / a0;
    return q;
  }

  double b0_ = 1, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// White noise through a high-pass and a low-pass, scaled to unit RMS.
std::vector<double> band_noise(std::size_t n, double lo, double hi, double sr, Rng& rng) {
  std::vector<double> out(n);
  Biquad hp = Biquad::highpass(lo, sr);
  Biquad lp = Biquad::lowpass(hi, sr);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lp(hp(standard_normal(rng)));
    energy += out[i] * out[i];
  }
  const double rms = std::sqrt(energy / std::max<std::size_t>(n, 1));
  if (rms > 0.0)
    for (double& v : out) v /= rms;
  return out;
}

// Raised-cosine onset and offset ramps.
double ramp(std::size_t i, std::size_t n, std::size_t r) {
  r = std::min(r, n / 2);
  if (r == 0) return 1.0;
  if (i < r) return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / r);
  if (i >= n - r)
    return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / r);
  return 1.0;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double exponential(Rng& rng, double mean) {
  return -mean * std::log(std::max(1e-300, 1.0 - uniform01(rng)));
}

struct Placed {
  double start;
  double end;
  std::string label;
};

class Renderer {
 public:
  Renderer(std::vector<double>& mix, int sr) : mix_(mix), sr_(sr) {}

  std::size_t index(double t) const {
    return std::min(mix_.size(), static_cast<std::size_t>(std::llround(t * sr_)));
  }

  void add(double start, const std::vector<double>& sig) {
    const std::size_t off = index(start);
    for (std::size_t i = 0; i < sig.size() && off + i < mix_.size(); ++i) mix_[off + i] += sig[i];
  }

  // Harmonic sweep from f_start to f_end.
  std::vector<double> chirp(double dur, double f_start, double f_end,
                            const std::vector<double>& harmonics, double sub, double amp) const {
    const auto n = static_cast<std::size_t>(dur * sr_);
    std::vector<double> out(n);
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = f_start + (f_end - f_start) * static_cast<double>(i) / std::max<std::size_t>(n, 1);
      phase += kTwoPi * f / sr_;
      double v = sub * std::sin(0.5 * phase);
      for (std::size_t h = 0; h < harmonics.size(); ++h) {
        if (f * static_cast<double>(h + 1) >= 0.45 * sr_) break;
        v += harmonics[h] * std::sin(static_cast<double>(h + 1) * phase);
      }
      out[i] = amp * v * ramp(i, n, static_cast<std::size_t>(0.02 * sr_));
    }
    return out;
  }

  int rate() const { return sr_; }

 private:
  std::vector<double>& mix_;
  int sr_;
};

// Sequential non-overlapping placements with exponential gaps.
std::vector<std::pair<double, double>> schedule(Rng& rng, double duration, double min_dur,
                                                double max_dur, double mean_gap) {
  std::vector<std::pair<double, double>> out;
  double t = exponential(rng, mean_gap * 0.5);
  for (;;) {
    const double d = uniform(rng, min_dur, max_dur);
    if (t + d > duration - 0.05) break;
    out.emplace_back(t, t + d);
    t += d + 0.2 + exponential(rng, mean_gap);
  }
  return out;
}

// Keeps events in time order while the union stays under the cap.
void cap_activity(std::vector<Placed>& events, double cap_seconds) {
  std::sort(events.begin(), events.end(),
            [](const Placed& a, const Placed& b) { return a.start < b.start; });
  std::vector<Placed> kept;
  double covered = 0.0;
  double reach = -1.0;
  for (auto& e : events) {
    const double add = std::max(0.0, e.end - std::max(e.start, reach));
    if (covered + add > cap_seconds) continue;
    covered += add;
    reach = std::max(reach, e.end);
    kept.push_back(std::move(e));
  }
  events = std::move(kept);
}

}  // namespace

const std::vector<FamilyInfo>& family_table() {
  static const std::vector<FamilyInfo> table{
      {Family::kFocalCall, "Focal call", 300.0, 3000.0},
      {Family::kNonFocalCall, "Non-focal call", 800.0, 4500.0},
      {Family::kFlying, "Flying", 400.0, 8000.0},
      {Family::kWalking, "Walking", 1500.0, 10000.0},
      {Family::kShaking, "Shaking", 800.0, 10000.0},
      {Family::kLooking, "Looking around", 30.0, 350.0},
      {Family::kTraffic, "Noise", 30.0, 800.0},
      {Family::kColony, "Background call", 1200.0, 4500.0},
  };
  return table;
}

CategoryMap synth_category_map() {
  CategoryMap m;
  m.add("Contact call", "Focal call");
  m.add("Non-focal call", "Non-focal call");
  m.add("Flying", "Flying");
  m.add("Walk", "Walking");
  m.add("Run", "Walking");
  m.add("Body", "Shaking");
  m.add("Head", "Shaking");
  m.add("Look", "Looking around");
  m.add("Traffic noise", "Noise");
  m.add("Bg mobbing", "Background call");
  m.add("Missing video", "NA");
  return m;
}

Timbre individual_timbre(std::uint64_t corpus_seed, int individual_index, Condition condition) {
  Rng rng(derive_seed(corpus_seed, 0x7100 + static_cast<std::uint64_t>(individual_index)));
  Timbre t;
  t.pitch = std::exp(uniform(rng, -0.25, 0.25));
  t.call_pitch = std::exp(uniform(rng, -0.18, 0.18));
  for (double& g : t.gain) g = std::pow(10.0, uniform(rng, -4.0, 4.0) / 20.0);
  t.flap_rate = uniform(rng, 10.0, 20.0);
  t.step_rate = uniform(rng, 2.0, 3.1);
  t.click_hp = uniform(rng, 1800.0, 3500.0);
  if (condition == Condition::kField) {
    t.pitch *= 0.9;
    t.call_pitch *= 0.92;
    for (double& g : t.gain) g *= 0.8;
    t.click_hp *= 0.85;
  }
  return t;
}

Scene generate_scene(const SceneConfig& cfg) {
  if (cfg.duration <= 0.0 || cfg.sample_rate <= 0)
    throw ArgumentError("scene duration and sample rate must be positive");
  Rng rng(cfg.seed);
  const double sr = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration * sr));
  const Timbre& tb = cfg.timbre;
  const double p = tb.pitch;
  auto gain = [&](Family f) { return tb.gain[static_cast<int>(f)]; };

  Scene scene;
  scene.bed = band_noise(n, 20.0, 3000.0, sr, rng);
  for (double& v : scene.bed) v = cfg.bed_rms * (v + 0.3 * standard_normal(rng));

  std::vector<double> mix = scene.bed;
  Renderer r(mix, cfg.sample_rate);
  std::vector<std::vector<Placed>> per_family(kFamilyCount);

  // Focal calls come in bouts; some trigger a nearby non-focal call.
  {
    Rng frng(derive_seed(cfg.seed, 1));
    for (auto [bs, be] : schedule(frng, cfg.duration, 2.0, 2.0, 25.0)) {
      (void)be;
      const int calls = 1 + static_cast<int>(uniform_index(frng, 4));
      double t = bs;
      for (int k = 0; k < calls; ++k) {
        const double d = uniform(frng, 0.15, 0.4);
        if (t + d > cfg.duration - 0.05) break;
        per_family[0].push_back({t, t + d, "Contact call"});
        if (uniform01(frng) < 0.3) {
          const double s = t + d + uniform(frng, 0.05, 0.8);
          const double nd = uniform(frng, 0.15, 0.35);
          if (s + nd < cfg.duration - 0.05) per_family[1].push_back({s, s + nd, "Non-focal call"});
        }
        t += d + uniform(frng, 0.25, 0.7);
      }
    }
    for (auto [s, e] : schedule(frng, cfg.duration, 0.15, 0.35, 40.0))
      per_family[1].push_back({s, e, "Non-focal call"});
    // Drop non-focal calls that overlap an earlier one.
    auto& nf = per_family[1];
    std::sort(nf.begin(), nf.end(), [](const Placed& a, const Placed& b) { return a.start < b.start; });
    std::vector<Placed> clean;
    for (auto& e : nf)
      if (clean.empty() || e.start >= clean.back().end + 0.05) clean.push_back(std::move(e));
    nf = std::move(clean);
  }
  {
    Rng frng(derive_seed(cfg.seed, 2));
    for (auto [s, e] : schedule(frng, cfg.duration, 3.0, 15.0, 100.0))
      per_family[2].push_back({s, e, "Flying"});
  }
  {
    Rng frng(derive_seed(cfg.seed, 3));
    for (auto [s, e] : schedule(frng, cfg.duration, 2.0, 10.0, 80.0))
      per_family[3].push_back({s, e, uniform01(frng) < 0.5 ? "Walk" : "Run"});
  }
  {
    Rng frng(derive_seed(cfg.seed, 4));
    for (auto [s, e] : schedule(frng, cfg.duration, 0.25, 0.9, 30.0))
      per_family[4].push_back({s, e, e - s > 0.5 ? "Body" : "Head"});
  }
  {
    Rng frng(derive_seed(cfg.seed, 5));
    for (auto [s, e] : schedule(frng, cfg.duration, 0.6, 2.0, 22.0))
      per_family[5].push_back({s, e, "Look"});
  }
  {
    Rng frng(derive_seed(cfg.seed, 6));
    for (auto [s, e] : schedule(frng, cfg.duration, 6.0, 25.0, 130.0))
      per_family[6].push_back({s, e, "Traffic noise"});
  }
  {
    Rng frng(derive_seed(cfg.seed, 7));
    for (auto [s, e] : schedule(frng, cfg.duration, 1.0, 3.0, 25.0))
      per_family[7].push_back({s, e, "Bg mobbing"});
  }
  const double cap = 0.95 * cfg.max_activity * cfg.duration;
  for (auto& events : per_family) cap_activity(events, cap);

  Rng srng(derive_seed(cfg.seed, 100));
  for (int f = 0; f < kFamilyCount; ++f) {
    const auto fam = static_cast<Family>(f);
    for (const Placed& e : per_family[static_cast<std::size_t>(f)]) {
      const double d = e.end - e.start;
      const auto len = static_cast<std::size_t>(d * sr);
      std::vector<double> sig;
      switch (fam) {
        case Family::kFocalCall: {
          const double f0 = 650.0 * p * tb.call_pitch * uniform(srng, 0.96, 1.04);
          sig = r.chirp(d, f0, 0.8 * f0, {1.0, 0.6, 0.35, 0.2}, 0.3, 0.3 * gain(fam));
          break;
        }
        case Family::kNonFocalCall: {
          const double f0 = 1150.0 * p * uniform(srng, 0.95, 1.05);
          sig = r.chirp(d, f0, 1.17 * f0, {1.0, 0.3}, 0.0, 0.1 * gain(fam));
          break;
        }
        case Family::kFlying: {
          sig = band_noise(len, 500.0 * p, 6000.0 * p, sr, srng);
          const double fm = tb.flap_rate * uniform(srng, 0.95, 1.05);
          const double ph = uniform(srng, 0.0, kTwoPi);
          for (std::size_t i = 0; i < len; ++i)
            sig[i] *= 0.12 * gain(fam) * (0.55 + 0.45 * std::sin(kTwoPi * fm * i / sr + ph)) *
                      ramp(i, len, static_cast<std::size_t>(0.1 * sr));
          break;
        }
        case Family::kWalking: {
          sig.assign(len, 0.0);
          const double rate = tb.step_rate * (e.label == "Run" ? 1.6 : 1.0);
          const auto click_len = static_cast<std::size_t>(0.012 * sr);
          double t = 0.01;
          while (t + 0.012 < d) {
            auto click = band_noise(click_len, tb.click_hp, 9000.0, sr, srng);
            const auto off = static_cast<std::size_t>(t * sr);
            for (std::size_t i = 0; i < click_len && off + i < len; ++i)
              sig[off + i] += 0.45 * gain(fam) * click[i] * std::exp(-static_cast<double>(i) / (0.003 * sr));
            t += uniform(srng, 0.85, 1.15) / rate;
          }
          break;
        }
        case Family::kShaking: {
          sig = band_noise(len, 1000.0 * p, 8000.0, sr, srng);
          const double fm = 28.0 * p;
          for (std::size_t i = 0; i < len; ++i)
            sig[i] *= 0.15 * gain(fam) * (0.5 + 0.5 * std::sin(kTwoPi * fm * i / sr)) *
                      ramp(i, len, static_cast<std::size_t>(0.02 * sr));
          break;
        }
        case Family::kLooking: {
          sig = band_noise(len, 50.0 * p, 250.0 * p, sr, srng);
          for (std::size_t i = 0; i < len; ++i)
            sig[i] *= 0.15 * gain(fam) * ramp(i, len, static_cast<std::size_t>(0.08 * sr));
          break;
        }
        case Family::kTraffic: {
          sig = band_noise(len, 40.0, 600.0 * p, sr, srng);
          for (std::size_t i = 0; i < len; ++i) {
            const double swell = 0.3 + 0.7 * std::sin(std::numbers::pi * static_cast<double>(i) / len);
            sig[i] *= 0.06 * gain(fam) * swell * ramp(i, len, static_cast<std::size_t>(0.2 * sr));
          }
          break;
        }
        case Family::kColony: {
          sig.assign(len, 0.0);
          const int chirps = 3 + static_cast<int>(uniform_index(srng, 6));
          for (int k = 0; k < chirps; ++k) {
            const double cd = uniform(srng, 0.06, 0.12);
            const double at = k == 0 ? 0.0 : (k == chirps - 1 ? d - cd : uniform(srng, 0.0, d - cd));
            const double f0 = uniform(srng, 1600.0, 2600.0) * p;
            auto c = r.chirp(cd, f0, f0 * uniform(srng, 0.9, 1.1), {1.0, 0.25}, 0.0,
                             0.06 * gain(fam));
            const auto off = static_cast<std::size_t>(at * sr);
            for (std::size_t i = 0; i < c.size() && off + i < len; ++i) sig[off + i] += c[i];
          }
          break;
        }
      }
      r.add(e.start, sig);
      scene.track.events.push_back({e.start, e.end, e.label});
    }
  }

  if (cfg.na_per_minute > 0.0) {
    Rng nrng(derive_seed(cfg.seed, 200));
    for (auto [s, e] : schedule(nrng, cfg.duration, 5.0, 20.0, 60.0 / cfg.na_per_minute))
      scene.track.events.push_back({s, e, "Missing video"});
  }

  std::stable_sort(scene.track.events.begin(), scene.track.events.end(),
                   [](const AnnotationEvent& a, const AnnotationEvent& b) { return a.start < b.start; });
  if (scene.track.events.empty()) warn("scene too short for any event; label track is empty");
  for (double& v : mix) v = std::clamp(v, -1.0, 32767.0 / 32768.0);
  scene.clip.samples = std::move(mix);
  scene.clip.sample_rate = cfg.sample_rate;
  scene.track.duration = cfg.duration;
  return scene;
}

double activity_fraction(const std::vector<AnnotationEvent>& events, double duration) {
  if (duration <= 0.0) return 0.0;
  std::vector<std::pair<double, double>> iv;
  for (const auto& e : events) iv.emplace_back(e.start, e.end);
  std::sort(iv.begin(), iv.end());
  double covered = 0.0, s = 0.0, e = -1.0;
  bool open = false;
  for (auto [a, b] : iv) {
    if (!open || a > e) {
      if (open) covered += e - s;
      s = a;
      e = b;
      open = true;
    } else {
      e = std::max(e, b);
    }
  }
  if (open) covered += e - s;
  return covered / duration;
}

Manifest generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.individuals < 0 || cfg.field_individuals < 0 || cfg.individuals + cfg.field_individuals == 0)
    throw ConfigError("corpus needs at least one individual");
  if ((cfg.individuals > 0 && cfg.per_individual < 1) ||
      (cfg.field_individuals > 0 && cfg.field_per_individual < 1))
    throw ConfigError("recordings per individual must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

  struct Job {
    std::string name;
    ManifestEntry entry;
    SceneConfig scene;
  };
  std::vector<Job> jobs;
  auto add_group = [&](Condition cond, int count, int per, char prefix, int index_base) {
    for (int i = 0; i < count; ++i) {
      const std::string ind = fmt::format("{}{:02d}", prefix, i + 1);
      const Timbre timbre = individual_timbre(cfg.seed, index_base + i, cond);
      for (int k = 0; k < per; ++k) {
        Job j;
        j.name = fmt::format("{}_{:02d}", ind, k + 1);
        j.entry.path = j.name + ".wav";
        j.entry.audio = out_dir / j.entry.path;
        j.entry.labels = out_dir / (j.name + ".txt");
        j.entry.individual = ind;
        j.entry.condition = cond;
        j.scene.duration = cfg.duration;
        j.scene.max_activity = cfg.max_activity;
        j.scene.na_per_minute = cfg.na_per_minute;
        j.scene.bed_rms = cond == Condition::kField ? 0.008 : 0.004;
        j.scene.timbre = timbre;
        j.scene.seed = derive_seed(cfg.seed, fnv1a(j.name));
        jobs.push_back(std::move(j));
      }
    }
  };
  add_group(Condition::kCaptive, cfg.individuals, cfg.per_individual, 'C', 0);
  add_group(Condition::kField, cfg.field_individuals, cfg.field_per_individual, 'F', 100);

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Scene s = generate_scene(jobs[i].scene);
        write_wav(jobs[i].entry.audio, s.clip);
        write_label_track(jobs[i].entry.labels, s.track);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(cfg.jobs, 1, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  Manifest m;
  for (auto& j : jobs) m.entries.push_back(std::move(j.entry));
  write_manifest(out_dir / "manifest.csv", m);
  std::ofstream cats(out_dir / "categories.toml", std::ios::binary);
  cats << format_category_map(synth_category_map());
  if (!cats) throw IoError("cannot write categories.toml");
  return m;
}

}  // namespace bioctx
