// Acceptance run: one PASS/FAIL line per criterion. Exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "automiseg/errors.hpp"
#include "automiseg/eval.hpp"
#include "automiseg/image_ops.hpp"
#include "automiseg/mock_backends.hpp"
#include "automiseg/pipeline.hpp"
#include "automiseg/prompt_boost.hpp"
#include "automiseg/tpe.hpp"
#include "oracles.hpp"

using namespace automiseg;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr int kClaheTolerance = 1;
constexpr int kHsvRoundTripTolerance = 1;
constexpr double kBilinearTolerance = 1e-6;
constexpr double kSimilarityTolerance = 1e-9;
constexpr double kSignTestAlpha = 0.05;
constexpr double kDiceMargin = 0.3;
constexpr double kAdaptedDiceFloor = 0.75;
constexpr double kBaseFailureFloor = 0.9;
constexpr double kPearsonFloor = 0.5;
constexpr std::size_t kPearsonMinPairs = 50;
constexpr std::size_t kEndToEndSamples = 50;
constexpr std::size_t kEndToEndTrials = 60;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

int max_abs_diff(const ImageRgb8& a, const ImageRgb8& b) {
  int m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(int(a.data()[i]) - int(b.data()[i])));
  return m;
}

std::vector<Sample> samples_of(const SyntheticBenchmark& b) {
  std::vector<Sample> out;
  for (const auto& s : b.samples) out.push_back({s.id, s.image});
  return out;
}

std::map<std::string, BinaryMask> truths_of(const SyntheticBenchmark& b) {
  std::map<std::string, BinaryMask> out;
  for (const auto& s : b.samples) out.insert_or_assign(s.id, s.truth);
  return out;
}

// --- operator identities -----------------------------------------------------

Outcome operator_identities() {
  std::mt19937_64 rng(11);
  const auto space = default_space(4);
  const auto base = base_config(space);
  int checked = 0;
  for (int i = 0; i < 20; ++i) {
    const auto img = i % 2 ? oracle::random_image(37 + i, 29 + i, rng) : oracle::textured_image(64, 48, rng);
    if (!(apply_transform_chain(img, transform_params_from(base, kGroundingPrefix)) == img)) return {false, "grd base chain"};
    if (!(apply_transform_chain(img, transform_params_from(base, kSegmentationPrefix)) == img)) return {false, "seg base chain"};
    if (!(unsharp_mask(img, 0.0) == img)) return {false, "unsharp(0)"};
    if (!(rgb_shift(img, 0, 0, 0) == img)) return {false, "rgb_shift(0,0,0)"};
    for (int grid : {1, 2, 4, 8})
      if (!(clahe(img, 0.0, grid) == img)) return {false, "clahe(clip=0)"};
    if (!(hsv_shift(img, 0, 0, 0) == img)) return {false, "hsv_shift(0,0,0)"};
    checked += 6;
  }
  // Without the short-circuit the HSV round trip stays within one level.
  int worst = 0;
  for (int r = 0; r < 256; r += 3)
    for (int g = 0; g < 256; g += 5)
      for (int b = 0; b < 256; b += 7) {
        const auto back = detail::hsv_to_rgb(detail::rgb_to_hsv(r, g, b));
        worst = std::max({worst, std::abs(int(std::lround(back[0])) - r), std::abs(int(std::lround(back[1])) - g),
                          std::abs(int(std::lround(back[2])) - b)});
      }
  return {worst <= kHsvRoundTripTolerance,
          std::to_string(checked) + " exact identities, hsv round trip max err " + std::to_string(worst)};
}

// --- oracle equivalence ------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> grid_dim(2, 16), dim_d(1, 32);
  int topk_mismatch = 0, topk_maps = 0;
  for (int t = 0; t < 1000; ++t) {
    const int hc = grid_dim(rng), wc = grid_dim(rng);
    const int iw = wc * std::uniform_int_distribution<int>(2, 10)(rng);
    const int ih = hc * std::uniform_int_distribution<int>(2, 10)(rng);
    const auto fm = oracle::random_feature_map(hc, wc, dim_d(rng), iw, ih, rng);
    int x0 = std::uniform_int_distribution<int>(0, iw - 2)(rng);
    int y0 = std::uniform_int_distribution<int>(0, ih - 2)(rng);
    const int x1 = std::uniform_int_distribution<int>(x0 + 1, iw)(rng);
    const int y1 = std::uniform_int_distribution<int>(y0 + 1, ih)(rng);
    const BBox box{x0, y0, x1, y1};
    const auto anchor = feature_at(fm, anchor_point(box));
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const auto ref = oracle::topk(fm, anchor, box, k);
    std::vector<ScoredPoint> got;
    try {
      got = topk_similar(fm, anchor, box, k);
    } catch (const EmptyBox&) {
      // Only legal when no cell centre lies in the box at all.
      bool any = false;
      for (int r = 0; r < hc && !any; ++r)
        for (int c = 0; c < wc && !any; ++c) {
          const double cx = (c + 0.5) * iw / wc - 0.5, cy = (r + 0.5) * ih / hc - 0.5;
          any = cx >= box.x_min && cx < box.x_max && cy >= box.y_min && cy < box.y_max;
        }
      if (any) ++topk_mismatch;
      ++topk_maps;
      continue;
    }
    bool same = got.size() == ref.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].cell_index == ref[i].cell && std::abs(got[i].similarity - ref[i].sim) <= kSimilarityTolerance;
    if (!same) ++topk_mismatch;
    ++topk_maps;
  }

  int clahe_worst = 0;
  std::uniform_int_distribution<int> side(8, 96), grid(1, 8);
  std::uniform_real_distribution<double> clip(0.5, 8.0);
  for (int t = 0; t < 50; ++t) {
    const auto img = t % 2 ? oracle::textured_image(side(rng), side(rng), rng) : oracle::random_image(side(rng), side(rng), rng);
    const double c = clip(rng);
    const int g = grid(rng);
    clahe_worst = std::max(clahe_worst, max_abs_diff(clahe(img, c, g), oracle::clahe(img, c, g)));
  }

  double bilinear_worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int hc = grid_dim(rng), wc = grid_dim(rng);
    const int iw = wc * 8, ih = hc * 8;
    const auto fm = oracle::random_feature_map(hc, wc, 8, iw, ih, rng);
    for (int q = 0; q < 20; ++q) {
      const Point2D p{std::uniform_real_distribution<double>(0.0, iw - 1.0)(rng),
                      std::uniform_real_distribution<double>(0.0, ih - 1.0)(rng)};
      const auto a = feature_at(fm, p);
      const auto b = oracle::bilinear(fm, p.x, p.y);
      for (std::size_t d = 0; d < a.size(); ++d) bilinear_worst = std::max(bilinear_worst, std::abs(a[d] - b[d]));
    }
  }
  const bool pass = topk_mismatch == 0 && clahe_worst <= kClaheTolerance && bilinear_worst <= kBilinearTolerance;
  return {pass, "topk mismatches " + std::to_string(topk_mismatch) + "/" + std::to_string(topk_maps) +
                    ", clahe max err " + std::to_string(clahe_worst) + ", bilinear max err " +
                    fmt(bilinear_worst * 1e9, 3) + "e-9"};
}

// --- TPE vs random search ----------------------------------------------------

struct Benchmark {
  std::string name;
  SearchSpace space;
  std::function<double(const Configuration&)> f;
};

std::vector<Benchmark> tpe_benchmarks() {
  std::vector<Benchmark> out;
  out.push_back({"bowl",
                 SearchSpace({ParamSpec::Float("x", 0, 1), ParamSpec::Float("y", -5, 5), ParamSpec::Integer("k", 0, 10),
                              ParamSpec::Categorical("c", {"a", "b", "c", "d"})}),
                 [](const Configuration& c) {
                   const double x = c.get_double("x"), y = c.get_double("y");
                   const double k = static_cast<double>(c.get_int("k"));
                   return -4 * std::pow(x - 0.73, 2) - 4 * std::pow((y - 1.2) / 5, 2) - 2 * std::pow((k - 7) / 10, 2) +
                          (c.get_int("c") == 2 ? 0.3 : 0.0);
                 }});
  out.push_back({"two-peaks",
                 SearchSpace({ParamSpec::Float("a", 0, 1), ParamSpec::Float("b", 0, 1), ParamSpec::Float("c", 0, 1),
                              ParamSpec::Float("d", 0, 1), ParamSpec::Integer("n", 1, 20),
                              ParamSpec::Categorical("mode", {"p", "q", "r"})}),
                 [](const Configuration& c) {
                   const double v[4] = {c.get_double("a"), c.get_double("b"), c.get_double("c"), c.get_double("d")};
                   const double m1[4] = {0.2, 0.8, 0.3, 0.6}, m2[4] = {0.9, 0.1, 0.7, 0.4};
                   double d1 = 0, d2 = 0;
                   for (int i = 0; i < 4; ++i) d1 += std::pow(v[i] - m1[i], 2), d2 += std::pow(v[i] - m2[i], 2);
                   const double n = static_cast<double>(c.get_int("n"));
                   const double w = c.get_int("mode") == 1 ? 1.0 : 0.7;
                   return w * std::max(std::exp(-d1 / 0.1), 0.8 * std::exp(-d2 / 0.05)) - std::pow(n - 13, 2) / 400.0;
                 }});
  const auto lta = default_space(4);
  out.push_back({"lta-shaped", lta, [lta](const Configuration& c) {
                   // Separable target inside the adaptation space itself.
                   double f = 0.0;
                   std::size_t i = 0;
                   for (const auto& p : lta.params()) {
                     ++i;
                     if (p.kind == ParamKind::kCategorical) {
                       f += c.get_int(p.name) == static_cast<std::int64_t>(i % p.n_choices()) ? 0.5 : 0.0;
                       continue;
                     }
                     const double v = p.kind == ParamKind::kFloat ? c.get_double(p.name) : double(c.get_int(p.name));
                     const double u = (v - p.lo) / (p.hi - p.lo);
                     const double target = 0.15 + 0.7 * std::fmod(0.37 * i, 1.0);
                     f -= std::pow(u - target, 2);
                   }
                   return f;
                 }});
  return out;
}

double best_tpe(const Benchmark& b, std::uint64_t seed, std::size_t budget) {
  TpeSettings s;
  s.seed = seed;
  TpeOptimizer opt(b.space, s);
  for (std::size_t i = 1; i <= budget; ++i) {
    auto c = opt.suggest();
    const double f = b.f(c);
    opt.observe({static_cast<std::int64_t>(i), std::move(c), f, {f}, 0.0});
  }
  return opt.best().objective;
}

double best_random(const Benchmark& b, std::uint64_t seed, std::size_t budget) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < budget; ++i) best = std::max(best, b.f(sample_uniform(b.space, rng)));
  return best;
}

// P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int i = wins; i <= n; ++i) p += std::exp(std::lgamma(n + 1) - std::lgamma(i + 1) - std::lgamma(n - i + 1) - n * std::log(2.0));
  return p;
}

Outcome tpe_vs_random() {
  bool pass = true;
  std::string detail;
  for (const auto& b : tpe_benchmarks()) {
    int wins = 0, losses = 0;
    double mean_t = 0, mean_r = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const double t = best_tpe(b, seed, 100), r = best_random(b, seed, 100);
      mean_t += t / 20;
      mean_r += r / 20;
      wins += t > r;
      losses += t < r;
    }
    const double p = sign_test_p(wins, wins + losses);
    pass = pass && p < kSignTestAlpha && mean_t >= mean_r;
    detail += b.name + ": tpe " + fmt(mean_t) + " vs random " + fmt(mean_r) + " (" + std::to_string(wins) + "-" +
              std::to_string(losses) + ", p=" + fmt(p, 6) + "); ";
  }
  return {pass, detail};
}

// --- end to end and validator fidelity ---------------------------------------

struct EndToEnd {
  SyntheticBenchmark bench;
  AdaptationResult adapted;
  EvalReport adapted_report;
  EvalReport base_report;
};

const EndToEnd& end_to_end_run() {
  static const EndToEnd run = [] {
    EndToEnd e{generate_synthetic_benchmark(kEndToEndSamples, 1), {}, {}, {}};
    const auto backends = make_mock_backends(e.bench.world);
    const auto samples = samples_of(e.bench);
    AdaptationSettings s;
    s.n_trials = kEndToEndTrials;
    s.subset_size = kEndToEndSamples;
    s.subset_seed = 1;
    s.tpe.seed = 1;
    e.adapted = adapt(samples, e.bench.task, s, backends);
    const auto truths = truths_of(e.bench);
    e.adapted_report = evaluate(run_dataset(samples, e.bench.task, e.adapted.best_config, backends), truths,
                                e.adapted.best_config);
    const auto base = base_config(default_space(e.bench.task.grounding_sentences.size()));
    e.base_report = evaluate(run_dataset(samples, e.bench.task, base, backends), truths, base);
    return e;
  }();
  return run;
}

Outcome end_to_end() {
  const auto& e = end_to_end_run();
  const double adapted = e.adapted_report.mean_dice_all, base = e.base_report.mean_dice_all;
  const bool pass = adapted >= base + kDiceMargin && adapted >= kAdaptedDiceFloor &&
                    e.base_report.failure_rate >= kBaseFailureFloor;
  return {pass, "adapted Dice " + fmt(adapted) + ", base Dice " + fmt(base) + ", base failure rate " +
                    fmt(e.base_report.failure_rate) + ", adapted failure rate " + fmt(e.adapted_report.failure_rate)};
}

Outcome validator_fidelity() {
  // Pool ok (config, sample) evaluations over the configurations the optimizer visited
  // plus uniform random ones, so that s_val and Dice both vary.
  const auto& e = end_to_end_run();
  const auto backends = make_mock_backends(e.bench.world);
  const auto space = default_space(e.bench.task.grounding_sentences.size());
  std::vector<Configuration> configs;
  for (const auto& t : e.adapted.trials) configs.push_back(t.config);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 40; ++i) configs.push_back(sample_uniform(space, rng));
  std::vector<double> s_val, truth_dice;
  for (std::size_t si = 0; si < 10; ++si) {
    const auto& s = e.bench.samples[si];
    for (const auto& c : configs) {
      const auto r = segment_one(s.image, e.bench.task, c, backends, s.id);
      if (r.status != SampleStatus::kOk) continue;
      s_val.push_back(r.score.s_val);
      truth_dice.push_back(dice(*r.mask, s.truth));
    }
  }
  const auto r = pearson(s_val, truth_dice);
  const bool pass = s_val.size() >= kPearsonMinPairs && r && *r >= kPearsonFloor;
  return {pass, "pearson r " + (r ? fmt(*r) : std::string("undefined")) + " over " + std::to_string(s_val.size()) +
                    " ok evaluations from " + std::to_string(configs.size()) + " configs"};
}

// --- batch vs per-sample -----------------------------------------------------

Outcome batch_vs_per_sample() {
  double batch_sum = 0, per_sum = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto bench = generate_synthetic_benchmark(20, 100 + seed);
    const auto backends = make_mock_backends(bench.world);
    const auto samples = samples_of(bench);
    const auto truths = truths_of(bench);
    AdaptationSettings s;
    s.n_trials = 60;
    s.subset_size = 20;
    s.subset_seed = seed;
    s.tpe.seed = seed;
    const auto batch = adapt(samples, bench.task, s, backends);
    const double bd = evaluate(run_dataset(samples, bench.task, batch.best_config, backends), truths, {}).mean_dice_all;
    s.mode = AdaptationMode::kPerSample;
    const auto per = adapt(samples, bench.task, s, backends);
    const double pd = evaluate(run_dataset(samples, bench.task, per.per_sample_configs, backends), truths, {}).mean_dice_all;
    batch_sum += bd;
    per_sum += pd;
    detail += fmt(bd, 3) + "/" + fmt(pd, 3) + " ";
  }
  return {batch_sum >= per_sum, "batch " + fmt(batch_sum / 5) + " vs per-sample " + fmt(per_sum / 5) +
                                    " (per seed batch/per-sample: " + detail + ")"};
}

// --- determinism -------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto bench = generate_synthetic_benchmark(30, 7);
  const auto backends = make_mock_backends(bench.world);
  const auto samples = samples_of(bench);
  const auto space = default_space(bench.task.grounding_sentences.size());
  const auto dir = fs::temp_directory_path() / "automiseg_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  AdaptationSettings s;
  s.n_trials = 40;
  s.subset_size = 15;
  s.subset_seed = 3;
  s.tpe.seed = 3;
  std::vector<std::string> logs, bests;
  for (std::size_t workers : {1, 1, 4}) {
    s.workers = workers;
    const auto r = adapt(samples, bench.task, s, backends);
    const auto log = dir / ("trials_" + std::to_string(logs.size()) + ".jsonl");
    write_trial_log(log, space, r.trials);
    logs.push_back(slurp(log));
    bests.push_back(config_to_json(space, r.best_config).dump());
  }
  const bool logs_equal = logs[0] == logs[1] && logs[0] == logs[2] && !logs[0].empty();
  const bool best_equal = bests[0] == bests[1] && bests[0] == bests[2];

  const auto config = config_from_json(space, nlohmann::json::parse(bests[0]));
  const auto serial = run_dataset(samples, bench.task, config, backends, 1);
  const auto parallel = run_dataset(samples, bench.task, config, backends, 4);
  bool runs_equal = serial.size() == parallel.size();
  for (std::size_t i = 0; runs_equal && i < serial.size(); ++i)
    runs_equal = serial[i].sample_id == parallel[i].sample_id && serial[i].mask == parallel[i].mask &&
                 serial[i].score == parallel[i].score && serial[i].status == parallel[i].status;
  return {logs_equal && best_equal && runs_equal,
          std::string("trial logs ") + (logs_equal ? "identical" : "differ") + ", best config " +
              (best_equal ? "identical" : "differs") + ", workers=4 run " + (runs_equal ? "equals" : "differs from") +
              " serial"};
}

// --- dice edge cases ---------------------------------------------------------

Outcome dice_edges() {
  BinaryMask a(10, 10), disjoint(10, 10), half(10, 10);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) a.set(x, y, true), disjoint.set(x + 6, y + 6, true), half.set(x + 2, y, true);
  const double d1 = dice(a, a), d0 = dice(a, disjoint), dh = dice(a, half), de = dice(BinaryMask(10, 10), BinaryMask(10, 10));
  return {d1 == 1.0 && d0 == 0.0 && dh == 0.5 && de == 1.0,
          "identical " + fmt(d1, 2) + ", disjoint " + fmt(d0, 2) + ", half " + fmt(dh, 2) + ", empty-empty " + fmt(de, 2)};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: run only criteria whose name contains it.
  const std::string filter = argc > 1 ? argv[1] : "";
  spdlog::set_level(spdlog::level::err);
  const std::vector<Criterion> criteria{
      {"operator identities", 5, operator_identities},
      {"oracle equivalence", 60, oracle_equivalence},
      {"tpe beats random search", 120, tpe_vs_random},
      {"end-to-end adaptation", 600, end_to_end},
      {"validator fidelity", 300, validator_fidelity},
      {"batch vs per-sample", 1800, batch_vs_per_sample},
      {"determinism", 900, determinism},
      {"dice edge cases", 5, dice_edges},
  };
  int failures = 0;
  std::size_t ran = 0;
  for (const auto& c : criteria) {
    if (c.name.find(filter) == std::string::npos) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s  %-26s %7.2fs (budget %gs)  %s%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), secs, c.budget_s,
                o.detail.c_str(), in_budget ? "" : " [over budget]");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failures, ran);
  return failures;
}
