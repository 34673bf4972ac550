#include "automiseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "automiseg/errors.hpp"
#include "automiseg/png_io.hpp"

namespace automiseg {

namespace fs = std::filesystem;

double dice(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionMismatch("dice of " + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " and " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()) + " masks");
  }
  const auto da = a.data();
  const auto db = b.data();
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    na += da[i];
    nb += db[i];
    both += da[i] & db[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionMismatch("pearson inputs differ in length");
  if (x.size() < 3) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  // Variance at rounding-noise level counts as zero.
  const auto negligible = [n](double ss, double m) { return ss <= 1e-20 * n * std::max(1.0, m * m); };
  if (negligible(sxx, mx) || negligible(syy, my)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

DatasetManifest scan_dataset(const fs::path& root) {
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw IoError("dataset has no images/ directory: " + root.string());
  DatasetManifest manifest{root, {}};
  for (const auto& entry : fs::directory_iterator(images)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    ManifestEntry e{entry.path().stem().string(), entry.path(), std::nullopt};
    const fs::path mask = root / "masks" / entry.path().filename();
    if (fs::is_regular_file(mask)) e.mask_path = mask;
    manifest.samples.push_back(std::move(e));
  }
  std::sort(manifest.samples.begin(), manifest.samples.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return manifest;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample> out;
  out.reserve(manifest.samples.size());
  for (const auto& e : manifest.samples) out.push_back({e.id, load_image(e.image_path)});
  return out;
}

std::map<std::string, BinaryMask> load_truths(const DatasetManifest& manifest) {
  std::map<std::string, BinaryMask> out;
  for (const auto& e : manifest.samples) {
    if (!e.mask_path) throw MissingTruth("no ground-truth mask for sample " + e.id);
    out.emplace(e.id, load_mask(*e.mask_path));
  }
  return out;
}

MockWorldSpec synthetic_world() {
  MockWorldSpec w;
  w.threshold = 200;
  w.target_label = "lesion";
  w.target_band = {125, 155};
  w.class_bands = {{"background", {90, 124}}, {"dark cyst", {40, 89}}, {"bright artifact", {156, 220}}};
  w.feature_window = 8;
  w.logit_scale = 1.0;
  return w;
}

TaskDefinition synthetic_task() {
  TaskDefinition t;
  t.target = "lesion";
  t.whole = "ultrasound phantom";
  t.grounding_sentences = {
      "the faint oval lesion in the phantom",
      "a slightly brighter rounded region inside the tissue",
      "the low contrast lesion",
      "an elliptical area brighter than the surrounding texture",
  };
  t.contrastive_classes = {"dark cyst", "bright artifact", std::string(kBackgroundClass)};
  t.descriptors = {
      "a lesion with homogeneous mid-gray echotexture",
      "smooth elliptical boundary",
      "slightly brighter than the surrounding tissue",
  };
  t.validate();
  return t;
}

namespace {

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(int x, int y) const {
    const double dx = (x - cx) / ax;
    const double dy = (y - cy) / ay;
    return dx * dx + dy * dy <= 1.0;
  }
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Target pixels are clamped into the open interior of the target band.
constexpr int kBandInset = 1;

}  // namespace

SyntheticBenchmark generate_synthetic_benchmark(std::size_t n, std::uint64_t seed,
                                                const MockWorldSpec& world,
                                                const SyntheticSpec& spec) {
  if (n < 1) throw InvalidArgument("benchmark needs at least one sample");
  world.validate();
  const int s = spec.size;
  if (s < 4 * static_cast<int>(spec.max_axis) / 2 || spec.min_axis <= 0 || spec.max_axis < spec.min_axis) {
    throw InvalidArgument("synthetic spec does not fit the image size");
  }
  const auto cyst = world.class_bands.find("dark cyst");
  const auto artifact = world.class_bands.find("bright artifact");

  SyntheticBenchmark bench;
  bench.world = world;
  bench.task = synthetic_task();
  bench.task.target = world.target_label;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::normal_distribution<double> bg(spec.background_mean, spec.background_sd);
  std::normal_distribution<double> tg(spec.target_mean, spec.target_sd);
  std::normal_distribution<double> dark(65.0, 5.0);
  std::normal_distribution<double> bright(172.0, 4.0);
  const double margin = spec.max_axis + 5.0;

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> field(static_cast<std::size_t>(s) * s);
    for (auto& v : field) v = bg(rng);

    const Ellipse target{uniform(margin, s - margin), uniform(margin, s - margin),
                         uniform(spec.min_axis, spec.max_axis), uniform(spec.min_axis, spec.max_axis)};

    // Distractors never overlap the target: centers are rejected until the
    // bounding circles are separated.
    auto place = [&](double amin, double amax) -> std::optional<Ellipse> {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const double ax = uniform(amin, amax), ay = uniform(amin, amax);
        const double r = std::max(ax, ay);
        const Ellipse e{uniform(r + 1, s - r - 1), uniform(r + 1, s - r - 1), ax, ay};
        const double dist = std::hypot(e.cx - target.cx, e.cy - target.cy);
        if (dist > r + std::max(target.ax, target.ay) + 3.0) return e;
      }
      return std::nullopt;
    };
    std::vector<std::pair<Ellipse, bool>> distractors;  // (shape, is_bright)
    if (cyst != world.class_bands.end()) {
      if (auto e = place(6.0, 12.0)) distractors.emplace_back(*e, false);
    }
    if (artifact != world.class_bands.end() && unit(rng) < 0.5) {
      if (auto e = place(4.0, 7.0)) distractors.emplace_back(*e, true);
    }

    BinaryMask truth(s, s);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        double& v = field[static_cast<std::size_t>(y) * s + x];
        for (const auto& [e, is_bright] : distractors) {
          if (!e.contains(x, y)) continue;
          const auto& band = is_bright ? artifact->second : cyst->second;
          v = std::clamp(is_bright ? bright(rng) : dark(rng), double(band[0]), double(band[1]));
        }
        if (target.contains(x, y)) {
          truth.set(x, y, true);
          v = std::clamp(tg(rng), double(world.target_band[0] + kBandInset),
                         double(world.target_band[1] - kBandInset));
        }
      }
    }

    ImageRgb8 image(s, s);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(s) * s * 3);
    for (std::size_t p = 0; p < field.size(); ++p) {
      const auto b = to_byte(field[p]);
      px[3 * p] = px[3 * p + 1] = px[3 * p + 2] = b;
    }
    char id[32];
    std::snprintf(id, sizeof id, "case_%04zu", i);
    bench.samples.push_back({id, ImageRgb8(s, s, std::move(px)), std::move(truth)});
  }
  return bench;
}

DatasetManifest write_benchmark(const SyntheticBenchmark& bench, const fs::path& out_dir) {
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  DatasetManifest manifest{out_dir, {}};
  for (const auto& sample : bench.samples) {
    const fs::path img = out_dir / "images" / (sample.id + ".png");
    const fs::path msk = out_dir / "masks" / (sample.id + ".png");
    save_image(img, sample.image);
    save_mask(msk, sample.truth);
    manifest.samples.push_back({sample.id, img, msk});
  }
  save_task(out_dir / "task.json", bench.task);
  const auto world = mock_world_to_json(bench.world).dump(2) + "\n";
  write_file_bytes(out_dir / "mock_world.json",
                   std::vector<std::uint8_t>(world.begin(), world.end()));
  return manifest;
}

EvalReport evaluate(const std::vector<SampleResult>& results,
                    const std::map<std::string, BinaryMask>& truths, const Configuration& config,
                    const std::vector<std::string>& excluded_ids) {
  EvalReport report;
  report.config = config;
  for (const auto& r : results) {
    const auto it = truths.find(r.sample_id);
    if (it == truths.end()) throw MissingTruth("no ground-truth mask for sample " + r.sample_id);
    SampleEval e{r.sample_id, 0.0, r.score.s_val, r.status};
    if (r.status == SampleStatus::kOk) {
      if (!r.mask) throw InvalidArgument("ok result without a mask: " + r.sample_id);
      e.dice = dice(*r.mask, it->second);
    }
    report.per_sample.push_back(e);
  }
  std::sort(report.per_sample.begin(), report.per_sample.end(),
            [](const SampleEval& a, const SampleEval& b) { return a.id < b.id; });

  const std::set<std::string> excluded(excluded_ids.begin(), excluded_ids.end());
  std::vector<double> ok_dice, ok_sval, all_dice, kept_dice;
  for (const auto& e : report.per_sample) {
    all_dice.push_back(e.dice);
    if (!excluded.count(e.id)) kept_dice.push_back(e.dice);
    if (e.status == SampleStatus::kOk) {
      ok_dice.push_back(e.dice);
      ok_sval.push_back(e.s_val);
    }
  }
  report.mean_dice = mean_of(ok_dice);
  report.mean_s_val = mean_of(ok_sval);
  report.mean_dice_all = mean_of(all_dice);
  if (!excluded.empty() && !kept_dice.empty()) report.mean_dice_excluding = mean_of(kept_dice);
  report.pearson_r = pearson(ok_sval, ok_dice);
  report.failure_rate =
      report.per_sample.empty()
          ? 0.0
          : static_cast<double>(all_dice.size() - ok_dice.size()) / static_cast<double>(all_dice.size());
  return report;
}

nlohmann::json report_to_json(const SearchSpace& space, const EvalReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : report.per_sample) {
    per.push_back({{"id", e.id}, {"dice", e.dice}, {"s_val", e.s_val}, {"status", to_string(e.status)}});
  }
  nlohmann::json j{{"per_sample", per},
                   {"mean_dice", report.mean_dice},
                   {"mean_s_val", report.mean_s_val},
                   {"mean_dice_all", report.mean_dice_all},
                   {"failure_rate", report.failure_rate},
                   {"config", config_to_json(space, report.config)}};
  j["mean_dice_excluding"] =
      report.mean_dice_excluding ? nlohmann::json(*report.mean_dice_excluding) : nlohmann::json();
  j["pearson_r"] = report.pearson_r ? nlohmann::json(*report.pearson_r) : nlohmann::json();
  return j;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

constexpr double kPlotW = 480, kPlotH = 360, kPad = 40;

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2;
  }
};

Axis axis_of(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 1.0};
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  return {*mn, *mx};
}

std::string svg_frame(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPlotW << "\" height=\"" << kPlotH
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kPlotW / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n"
     << "<line x1=\"" << kPad << "\" y1=\"" << kPlotH - kPad << "\" x2=\"" << kPlotW - kPad
     << "\" y2=\"" << kPlotH - kPad << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\""
     << kPlotH - kPad << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kPlotW / 2 << "\" y=\"" << kPlotH - 8 << "\" text-anchor=\"middle\">"
     << xlabel << "</text>\n"
     << "<text x=\"12\" y=\"" << kPlotH / 2 << "\" transform=\"rotate(-90 12 " << kPlotH / 2
     << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  return os.str();
}

std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                         const std::string& color) {
  const Axis ax = axis_of(xs), ay = axis_of(ys);
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << ax.map(xs[i], kPad, kPlotW - kPad) << "," << ay.map(ys[i], kPlotH - kPad, kPad) << " ";
  }
  os << "\"/>\n";
  return os.str();
}

}  // namespace

std::vector<fs::path> emit_plots(const EvalReport& report, const std::vector<Trial>& trials,
                                 const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;

  // Scatter: raw and min-max normalized s_val against Dice, ok samples only.
  std::vector<double> sval, dsc;
  for (const auto& e : report.per_sample) {
    if (e.status != SampleStatus::kOk) continue;
    sval.push_back(e.s_val);
    dsc.push_back(e.dice);
  }
  const Axis sv = axis_of(sval);
  std::vector<double> norm;
  for (double v : sval) norm.push_back(sv.hi > sv.lo ? (v - sv.lo) / (sv.hi - sv.lo) : 0.0);
  {
    std::ostringstream csv;
    csv << "sample_id,s_val,s_val_normalized,dice\n";
    std::size_t k = 0;
    for (const auto& e : report.per_sample) {
      if (e.status != SampleStatus::kOk) continue;
      csv << e.id << "," << num(e.s_val) << "," << num(norm[k]) << "," << num(e.dice) << "\n";
      ++k;
    }
    written.push_back(out_dir / "scatter.csv");
    write_text(written.back(), csv.str());
    std::ostringstream svg;
    svg << svg_frame("validation score vs Dice", "normalized s_val", "Dice");
    for (std::size_t i = 0; i < norm.size(); ++i) {
      svg << "<circle cx=\"" << kPad + norm[i] * (kPlotW - 2 * kPad) << "\" cy=\""
          << (kPlotH - kPad) - dsc[i] * (kPlotH - 2 * kPad) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
    svg << "</svg>\n";
    written.push_back(out_dir / "scatter.svg");
    write_text(written.back(), svg.str());
  }

  std::vector<double> ids, objective, best;
  double running = -std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    running = std::max(running, t.objective);
    ids.push_back(static_cast<double>(t.id));
    objective.push_back(t.objective);
    best.push_back(running);
  }
  std::ostringstream csv;
  csv << "trial_id,objective,best_so_far\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    csv << trials[i].id << "," << num(objective[i]) << "," << num(best[i]) << "\n";
  }
  for (const char* name : {"best_so_far.csv", "trace.csv"}) {
    written.push_back(out_dir / name);
    write_text(written.back(), csv.str());
  }
  {
    std::string svg = svg_frame("best objective so far", "trial", "objective");
    svg += svg_polyline(ids, best, "darkred") + "</svg>\n";
    written.push_back(out_dir / "best_so_far.svg");
    write_text(written.back(), svg);
  }
  {
    std::string svg = svg_frame("objective per trial", "trial", "objective");
    svg += svg_polyline(ids, objective, "gray") + "</svg>\n";
    written.push_back(out_dir / "trace.svg");
    write_text(written.back(), svg);
  }
  return written;
}

namespace {

BlockSetting parse_block(const std::string& text) {
  if (text == "optimal") return BlockSetting::kOptimal;
  if (text == "base") return BlockSetting::kBase;
  if (text == "random") return BlockSetting::kRandom;
  throw InvalidArgument("unknown block setting " + text);
}

const char* block_name(BlockSetting s) {
  switch (s) {
    case BlockSetting::kOptimal: return "optimal";
    case BlockSetting::kBase: return "base";
    case BlockSetting::kRandom: return "random";
  }
  return "?";
}

}  // namespace

AblationRegime parse_regime(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) throw InvalidArgument("regime must look like grd-seg: " + text);
  AblationRegime r{parse_block(text.substr(0, dash)), parse_block(text.substr(dash + 1))};
  if (r.grounding != BlockSetting::kOptimal && r.segmentation != BlockSetting::kOptimal) {
    throw InvalidArgument("one block must stay optimal: " + text);
  }
  return r;
}

std::string to_string(const AblationRegime& regime) {
  return std::string(block_name(regime.grounding)) + "-" + block_name(regime.segmentation);
}

Configuration ablation_config(const SearchSpace& space, const Configuration& optimal,
                              const AblationRegime& regime, std::uint64_t seed) {
  validate(space, optimal);
  const Configuration base = base_config(space);
  std::mt19937_64 rng(seed);
  const Configuration random = sample_uniform(space, rng);
  Configuration out = optimal;
  auto apply = [&](const char* prefix, BlockSetting setting) {
    const Configuration& src = setting == BlockSetting::kBase     ? base
                               : setting == BlockSetting::kRandom ? random
                                                                  : optimal;
    for (const auto& name : transform_param_names()) {
      const std::string full = prefix + name;
      out.set(full, src.values().at(full));
    }
  };
  apply(kGroundingPrefix, regime.grounding);
  apply(kSegmentationPrefix, regime.segmentation);
  return out;
}

void write_results(const fs::path& out_dir, const std::vector<SampleResult>& results) {
  fs::create_directories(out_dir / "masks");
  std::ostringstream lines;
  for (const auto& r : results) {
    nlohmann::json j{{"id", r.sample_id},
                     {"status", to_string(r.status)},
                     {"s_zc", r.score.s_zc},
                     {"s_mt", r.score.s_mt},
                     {"s_val", r.score.s_val}};
    if (r.bbox) j["bbox"] = {r.bbox->x_min, r.bbox->y_min, r.bbox->x_max, r.bbox->y_max};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.points) pts.push_back({p.x, p.y});
    j["points"] = pts;
    if (!r.error.empty()) j["error"] = r.error;
    if (r.mask) {
      const std::string rel = "masks/" + r.sample_id + ".png";
      save_mask(out_dir / rel, *r.mask);
      j["mask"] = rel;
    } else {
      j["mask"] = nullptr;
    }
    lines << j.dump() << "\n";
  }
  write_text(out_dir / "results.jsonl", lines.str());
}

std::vector<SampleResult> read_results(const fs::path& results_dir) {
  std::ifstream in(results_dir / "results.jsonl");
  if (!in) throw IoError("cannot read " + (results_dir / "results.jsonl").string());
  std::vector<SampleResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("results manifest: ") + e.what());
    }
    SampleResult r;
    r.sample_id = j.at("id").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.score = {j.value("s_zc", 0.0), j.value("s_mt", 0.0), j.value("s_val", 0.0)};
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      const auto b = j["bbox"].get<std::vector<int>>();
      if (b.size() != 4) throw DecodeError("results manifest: bbox needs 4 entries");
      r.bbox = BBox{b[0], b[1], b[2], b[3]};
    }
    for (const auto& p : j.value("points", nlohmann::json::array())) {
      r.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    r.error = j.value("error", "");
    if (j.contains("mask") && j["mask"].is_string()) r.mask = load_mask(results_dir / j["mask"].get<std::string>());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace automiseg
