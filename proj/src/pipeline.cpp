#include "automiseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "automiseg/errors.hpp"
#include "automiseg/image_ops.hpp"
#include "automiseg/prompt_boost.hpp"

namespace automiseg {

AdaptationMode parse_mode(const std::string& text) {
  if (text == "batch") return AdaptationMode::kBatch;
  if (text == "per-sample" || text == "per_sample") return AdaptationMode::kPerSample;
  throw InvalidArgument("unknown adaptation mode " + text);
}

std::string to_string(AdaptationMode mode) {
  return mode == AdaptationMode::kBatch ? "batch" : "per_sample";
}

std::string to_string(SampleStatus status) {
  switch (status) {
    case SampleStatus::kOk: return "ok";
    case SampleStatus::kGroundingFailed: return "grounding_failed";
    case SampleStatus::kBackendError: return "backend_error";
  }
  return "unknown";
}

SampleStatus parse_status(const std::string& text) {
  if (text == "ok") return SampleStatus::kOk;
  if (text == "grounding_failed") return SampleStatus::kGroundingFailed;
  if (text == "backend_error") return SampleStatus::kBackendError;
  throw InvalidArgument("unknown sample status " + text);
}

void AdaptationSettings::validate() const {
  if (n_trials < 1) throw InvalidArgument("n_trials must be >= 1");
  if (subset_size < 1) throw InvalidArgument("subset_size must be >= 1");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  tpe.validate();
}

SampleResult segment_one(const ImageRgb8& image, const TaskDefinition& task,
                         const Configuration& config, const Backends& backends,
                         std::string sample_id) {
  SampleResult result;
  result.sample_id = std::move(sample_id);

  const auto grd = transform_params_from(config, kGroundingPrefix);
  const auto seg = transform_params_from(config, kSegmentationPrefix);
  const auto prompt_id = config.get_int(kPromptIdParam);
  const auto n_points = config.get_int(kBoostPointsParam);
  if (prompt_id < 0 || static_cast<std::size_t>(prompt_id) >= task.grounding_sentences.size()) {
    throw InvalidConfig(kPromptIdParam, "index outside the grounding sentence list");
  }

  try {
    const ImageRgb8 grounding_input = apply_transform_chain(image, grd);
    const BBox box = backends.grounding->ground(
        grounding_input, task.grounding_sentences[static_cast<std::size_t>(prompt_id)]);
    result.bbox = box;
    result.points = boost(grounding_input, box, static_cast<std::size_t>(n_points), *backends.features);
    const ImageRgb8 segmentation_input = apply_transform_chain(image, seg);
    BinaryMask mask = backends.segmentation->segment(segmentation_input, box, result.points);
    if (mask.width() != image.width() || mask.height() != image.height()) {
      throw ProtocolError("segmentation mask dimensions do not match the image");
    }
    result.score = validate(image, mask, task, *backends.scoring);
    result.mask = std::move(mask);
    result.status = SampleStatus::kOk;
  } catch (const NoDetection& e) {
    result.status = SampleStatus::kGroundingFailed;
    result.score = ValidationScore::floor();
    result.error = e.what();
  } catch (const BackendUnavailable& e) {
    result.status = SampleStatus::kBackendError;
    result.score = ValidationScore::floor();
    result.error = e.what();
  } catch (const ProtocolError& e) {
    result.status = SampleStatus::kBackendError;
    result.score = ValidationScore::floor();
    result.error = e.what();
  }
  if (result.status != SampleStatus::kOk) result.mask.reset();
  return result;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<SampleResult> run_dataset(const std::vector<Sample>& dataset,
                                      const TaskDefinition& task, const Configuration& config,
                                      const Backends& backends, std::size_t workers) {
  std::vector<SampleResult> results(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    results[i] = segment_one(dataset[i].image, task, config, backends, dataset[i].id);
  });
  return results;
}

std::vector<SampleResult> run_dataset(const std::vector<Sample>& dataset,
                                      const TaskDefinition& task,
                                      const std::vector<Configuration>& configs,
                                      const Backends& backends, std::size_t workers) {
  if (configs.size() != dataset.size()) {
    throw InvalidArgument("one configuration per sample is required");
  }
  std::vector<SampleResult> results(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    results[i] = segment_one(dataset[i].image, task, configs[i], backends, dataset[i].id);
  });
  return results;
}

double objective_of(const std::vector<SampleResult>& results) {
  std::vector<double> scores;
  scores.reserve(results.size());
  for (const auto& r : results) scores.push_back(r.status == SampleStatus::kOk ? r.score.s_val : 0.0);
  return mean_of(scores);
}

std::vector<std::size_t> draw_subset(std::size_t n, std::size_t subset_size, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(n, subset_size);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

struct LoopOutcome {
  std::vector<Trial> trials;
  Configuration best;
  bool any_success = false;
};

LoopOutcome optimize(const std::vector<const Sample*>& subset, const TaskDefinition& task,
                     const AdaptationSettings& settings, const Backends& backends,
                     const TpeSettings& tpe, const TrialCallback& on_trial) {
  TpeOptimizer opt(default_space(task.grounding_sentences.size()), tpe);
  LoopOutcome out;
  for (std::size_t t = 0; t < settings.n_trials; ++t) {
    const auto started = std::chrono::steady_clock::now();
    Trial trial;
    trial.id = opt.next_trial_id();
    trial.config = opt.suggest();
    std::vector<SampleResult> results(subset.size());
    parallel_for(subset.size(), settings.workers, [&](std::size_t i) {
      results[i] = segment_one(subset[i]->image, task, trial.config, backends, subset[i]->id);
    });
    trial.per_sample_scores.reserve(results.size());
    for (const auto& r : results) {
      trial.per_sample_scores.push_back(r.status == SampleStatus::kOk ? r.score.s_val : 0.0);
      out.any_success = out.any_success || r.status != SampleStatus::kBackendError;
    }
    trial.objective = mean_of(trial.per_sample_scores);
    trial.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    opt.observe(trial);
    if (on_trial) on_trial(trial);
  }
  out.best = opt.best().config;
  out.trials = opt.history();
  return out;
}

}  // namespace

AdaptationResult adapt(const std::vector<Sample>& samples, const TaskDefinition& task,
                       const AdaptationSettings& settings, const Backends& backends,
                       const TrialCallback& on_trial) {
  if (samples.empty()) throw InvalidArgument("adapt needs at least one sample");
  settings.validate();
  task.validate();

  AdaptationResult result;
  result.subset = draw_subset(samples.size(), settings.subset_size, settings.subset_seed);

  if (settings.mode == AdaptationMode::kBatch) {
    std::vector<const Sample*> subset;
    for (auto i : result.subset) subset.push_back(&samples[i]);
    auto outcome = optimize(subset, task, settings, backends, settings.tpe, on_trial);
    if (!outcome.any_success) {
      throw BackendUnavailable("every sample of every trial failed with a backend error");
    }
    result.best_config = std::move(outcome.best);
    result.trials = std::move(outcome.trials);
    return result;
  }

  // Per-sample mode: an independent optimization for every sample.
  result.subset.resize(samples.size());
  std::iota(result.subset.begin(), result.subset.end(), 0);
  bool any_success = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    TpeSettings tpe = settings.tpe;
    tpe.seed = settings.tpe.seed + i;
    auto outcome = optimize({&samples[i]}, task, settings, backends, tpe, on_trial);
    any_success = any_success || outcome.any_success;
    result.per_sample_configs.push_back(std::move(outcome.best));
    result.per_sample_trials.push_back(std::move(outcome.trials));
  }
  if (!any_success) {
    throw BackendUnavailable("every sample of every trial failed with a backend error");
  }
  // The configuration of the first sample stands in as the representative result.
  result.best_config = result.per_sample_configs.front();
  result.trials = result.per_sample_trials.front();
  return result;
}

}  // namespace automiseg
