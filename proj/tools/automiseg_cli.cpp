// automiseg command-line tool.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "automiseg/errors.hpp"
#include "automiseg/eval.hpp"
#include "automiseg/mock_backends.hpp"
#include "automiseg/pipeline.hpp"
#include "automiseg/wire.hpp"

namespace fs = std::filesystem;
using namespace automiseg;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

Backends backends_for(const std::string& backend, const fs::path& dataset) {
  if (backend == "mock") {
    const fs::path world = dataset / "mock_world.json";
    if (!fs::exists(world)) throw MissingAsset("mock backend needs " + world.string());
    return make_mock_backends(load_mock_world(world));
  }
  BackendEndpoints ep;
  ep.base_url = backend;
  return make_wire_backends(ep);
}

// Writes the results manifest and, when ground truth exists, the report and plots.
void finish_run(const fs::path& out, const DatasetManifest& manifest, const SearchSpace& space,
                const std::vector<SampleResult>& results, const Configuration& config,
                const std::vector<Trial>& trials, const std::vector<std::string>& excluded) {
  write_results(out / "results", results);
  const bool labelled = std::all_of(manifest.samples.begin(), manifest.samples.end(),
                                    [](const ManifestEntry& e) { return e.mask_path.has_value(); });
  if (!labelled || manifest.samples.empty()) return;
  const auto report = evaluate(results, load_truths(manifest), config, excluded);
  write_json(out / "report.json", report_to_json(space, report));
  emit_plots(report, trials, out / "plots");
  std::cout << "mean_dice=" << report.mean_dice_all << " failure_rate=" << report.failure_rate;
  if (report.pearson_r) std::cout << " pearson_r=" << *report.pearson_r;
  std::cout << "\n";
}

struct CommonArgs {
  std::string dataset;
  std::string task;
  std::string backend = "mock";
  std::size_t workers = 1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--dataset", a.dataset, "Dataset directory (images/, masks/)")->required();
  cmd->add_option("--task", a.task, "Task descriptor JSON")->required();
  cmd->add_option("--backend", a.backend, "'mock' or the model service base URL");
  cmd->add_option("--workers", a.workers, "Worker threads per trial")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Output directory")->required();
}

int cmd_gen_bench(std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto bench = generate_synthetic_benchmark(n, seed);
  const auto manifest = write_benchmark(bench, out);
  std::cout << "wrote " << manifest.samples.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_adapt(const CommonArgs& a, AdaptationSettings settings) {
  const auto task = load_task(a.task);
  const auto manifest = scan_dataset(a.dataset);
  const auto samples = load_samples(manifest);
  const auto backends = backends_for(a.backend, a.dataset);
  const auto space = default_space(task.grounding_sentences.size());
  settings.workers = a.workers;
  settings.validate();

  fs::create_directories(a.out);
  std::ofstream timings(fs::path(a.out) / "timings.csv", std::ios::trunc);
  timings << "trial_id,wall_time_s\n";
  auto on_trial = [&](const Trial& t) {
    timings << t.id << "," << t.wall_time << "\n";
    spdlog::info("trial {} objective {:.4f}", t.id, t.objective);
  };
  const auto result = adapt(samples, task, settings, backends, on_trial);

  nlohmann::json subset = nlohmann::json::array();
  std::vector<std::string> subset_ids;
  for (auto i : result.subset) {
    subset.push_back(samples[i].id);
    subset_ids.push_back(samples[i].id);
  }
  write_json(fs::path(a.out) / "subset.json", subset);

  std::vector<SampleResult> results;
  if (settings.mode == AdaptationMode::kBatch) {
    write_trial_log(fs::path(a.out) / "trials.jsonl", space, result.trials);
    write_json(fs::path(a.out) / "best_config.json", config_to_json(space, result.best_config));
    results = run_dataset(samples, task, result.best_config, backends, settings.workers);
  } else {
    const fs::path per = fs::path(a.out) / "per_sample";
    fs::create_directories(per);
    nlohmann::json configs = nlohmann::json::object();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      write_trial_log(per / (samples[i].id + ".jsonl"), space, result.per_sample_trials[i]);
      configs[samples[i].id] = config_to_json(space, result.per_sample_configs[i]);
    }
    write_json(fs::path(a.out) / "per_sample_configs.json", configs);
    write_json(fs::path(a.out) / "best_config.json", config_to_json(space, result.best_config));
    results = run_dataset(samples, task, result.per_sample_configs, backends, settings.workers);
  }
  finish_run(a.out, manifest, space, results, result.best_config, result.trials, subset_ids);
  return 0;
}

int cmd_run(const CommonArgs& a, const std::string& config_path) {
  const auto task = load_task(a.task);
  const auto manifest = scan_dataset(a.dataset);
  const auto samples = load_samples(manifest);
  const auto backends = backends_for(a.backend, a.dataset);
  const auto space = default_space(task.grounding_sentences.size());
  const auto config = config_from_json(space, read_json(config_path));
  fs::create_directories(a.out);
  const auto results = run_dataset(samples, task, config, backends, a.workers);
  finish_run(a.out, manifest, space, results, config, {}, {});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot segmentation with test-time adaptation"};
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log per-trial progress");

  std::size_t gen_n = 50;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-bench", "Write a synthetic benchmark with its mock world");
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  CommonArgs adapt_args;
  AdaptationSettings settings;
  std::string mode = "batch";
  std::uint64_t seed = 1;
  auto* ad = app.add_subcommand("adapt", "Optimize the configuration on an unlabelled subset");
  add_common(ad, adapt_args);
  ad->add_option("--trials", settings.n_trials, "Optimization budget")->check(CLI::PositiveNumber);
  ad->add_option("--subset", settings.subset_size, "Samples per trial")->check(CLI::PositiveNumber);
  ad->add_option("--seed", seed, "Seed for subset draw and optimizer");
  ad->add_option("--mode", mode, "batch or per-sample")->check(CLI::IsMember({"batch", "per-sample"}));

  CommonArgs run_args;
  std::string run_config;
  auto* run = app.add_subcommand("run", "Segment a dataset under a fixed configuration");
  add_common(run, run_args);
  run->add_option("--config", run_config, "Configuration JSON")->required();

  std::string eval_results, eval_dataset, eval_out;
  auto* ev = app.add_subcommand("eval", "Score a results manifest against ground truth");
  ev->add_option("--results", eval_results, "Results directory")->required();
  ev->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  ev->add_option("--out", eval_out, "Output directory")->required();

  CommonArgs abl_args;
  std::string regime_text, abl_config;
  AdaptationSettings abl_settings;
  std::uint64_t abl_seed = 1;
  auto* abl = app.add_subcommand("ablate", "Mix optimal, base and random transform blocks");
  add_common(abl, abl_args);
  abl->add_option("--regime", regime_text, "grd-seg block regime")
      ->required()
      ->check(CLI::IsMember({"optimal-optimal", "optimal-base", "optimal-random", "base-optimal",
                             "random-optimal"}));
  abl->add_option("--config", abl_config, "Optimal configuration JSON; adapts first when absent");
  abl->add_option("--trials", abl_settings.n_trials, "Budget when adapting")->check(CLI::PositiveNumber);
  abl->add_option("--subset", abl_settings.subset_size, "Subset when adapting")->check(CLI::PositiveNumber);
  abl->add_option("--seed", abl_seed, "Seed for adaptation and the random block");

  std::string serve_world, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve-mock", "Serve the mock backends over the wire protocol");
  serve->add_option("--world", serve_world, "mock_world.json (default: synthetic world)");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "TCP port")->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  try {
    if (*gen) return cmd_gen_bench(gen_n, gen_seed, gen_out);
    if (*ad) {
      settings.mode = parse_mode(mode);
      settings.subset_seed = seed;
      settings.tpe.seed = seed;
      return cmd_adapt(adapt_args, settings);
    }
    if (*run) return cmd_run(run_args, run_config);
    if (*ev) {
      const auto manifest = scan_dataset(eval_dataset);
      fs::path results_dir = eval_results;
      // Accept the run output directory as well as its results/ subdirectory.
      if (!fs::exists(results_dir / "results.jsonl") && fs::exists(results_dir / "results" / "results.jsonl")) {
        results_dir /= "results";
      }
      const auto report = evaluate(read_results(results_dir), load_truths(manifest), {});
      fs::create_directories(eval_out);
      write_json(fs::path(eval_out) / "report.json", report_to_json(SearchSpace{}, report));
      emit_plots(report, {}, fs::path(eval_out) / "plots");
      std::cout << "mean_dice=" << report.mean_dice_all << " failure_rate=" << report.failure_rate
                << "\n";
      return 0;
    }
    if (*abl) {
      const auto task = load_task(abl_args.task);
      const auto manifest = scan_dataset(abl_args.dataset);
      const auto samples = load_samples(manifest);
      const auto backends = backends_for(abl_args.backend, abl_args.dataset);
      const auto space = default_space(task.grounding_sentences.size());
      Configuration optimal;
      if (!abl_config.empty()) {
        optimal = config_from_json(space, read_json(abl_config));
      } else {
        abl_settings.subset_seed = abl_seed;
        abl_settings.tpe.seed = abl_seed;
        abl_settings.workers = abl_args.workers;
        optimal = adapt(samples, task, abl_settings, backends).best_config;
      }
      const auto regime = parse_regime(regime_text);
      const auto config = ablation_config(space, optimal, regime, abl_seed);
      fs::create_directories(abl_args.out);
      write_json(fs::path(abl_args.out) / "config.json", config_to_json(space, config));
      const auto results = run_dataset(samples, task, config, backends, abl_args.workers);
      finish_run(abl_args.out, manifest, space, results, config, {}, {});
      return 0;
    }
    if (*serve) {
      const auto world = serve_world.empty() ? synthetic_world() : load_mock_world(serve_world);
      ProtocolServer server(make_mock_backends(world));
      std::cout << "serving mock backends on " << serve_host << ":" << serve_port << std::endl;
      server.listen_blocking(serve_host, serve_port);
      return 0;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
