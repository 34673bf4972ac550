#include "automiseg/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "automiseg/errors.hpp"

namespace automiseg {

namespace {

void check_band(const std::string& name, const IntensityBand& band) {
  if (band[0] < 0 || band[1] > 255 || band[0] > band[1]) {
    throw InvalidArgument("band for " + name + " must satisfy 0 <= lo <= hi <= 255");
  }
}

/// 4-connected component labelling of `on` pixels inside a rectangle.
/// Labels are 1-based in scan order; 0 = background.
struct Components {
  std::vector<int> labels;  // size = rect area
  std::vector<std::size_t> sizes;  // sizes[label - 1]
};

template <typename Pred>
Components label_components(int x0, int y0, int w, int h, Pred on) {
  Components cc;
  cc.labels.assign(static_cast<std::size_t>(w) * h, 0);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (cc.labels[idx] != 0 || !on(x0 + x, y0 + y)) continue;
      const int label = static_cast<int>(cc.sizes.size()) + 1;
      cc.sizes.push_back(0);
      cc.labels[idx] = label;
      stack.push_back(idx);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        ++cc.sizes.back();
        const int cx = cur % w, cy = cur / w;
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
          const int n = ny[k] * w + nx[k];
          if (cc.labels[n] != 0 || !on(x0 + nx[k], y0 + ny[k])) continue;
          cc.labels[n] = label;
          stack.push_back(n);
        }
      }
    }
  }
  return cc;
}

int largest_label(const Components& cc) {
  if (cc.sizes.empty()) return 0;
  const auto it = std::max_element(cc.sizes.begin(), cc.sizes.end());
  return static_cast<int>(it - cc.sizes.begin()) + 1;
}

}  // namespace

void MockWorldSpec::validate() const {
  if (threshold < 0 || threshold > 255) throw InvalidArgument("threshold must lie in [0, 255]");
  check_band(target_label, target_band);
  for (const auto& [name, band] : class_bands) check_band(name, band);
  if (feature_window < 1) throw InvalidArgument("feature_window must be >= 1");
  if (!(logit_scale > 0.0)) throw InvalidArgument("logit_scale must be positive");
}

nlohmann::json mock_world_to_json(const MockWorldSpec& spec) {
  nlohmann::json bands = nlohmann::json::object();
  for (const auto& [name, band] : spec.class_bands) bands[name] = band;
  return {{"threshold", spec.threshold},          {"target_label", spec.target_label},
          {"target_band", spec.target_band},      {"class_bands", bands},
          {"feature_window", spec.feature_window}, {"logit_scale", spec.logit_scale}};
}

MockWorldSpec mock_world_from_json(const nlohmann::json& j) {
  MockWorldSpec spec;
  spec.threshold = j.value("threshold", spec.threshold);
  spec.target_label = j.value("target_label", spec.target_label);
  if (j.contains("target_band")) spec.target_band = j["target_band"].get<IntensityBand>();
  if (j.contains("class_bands")) {
    for (const auto& [name, band] : j["class_bands"].items()) {
      spec.class_bands[name] = band.get<IntensityBand>();
    }
  }
  spec.feature_window = j.value("feature_window", spec.feature_window);
  spec.logit_scale = j.value("logit_scale", spec.logit_scale);
  spec.validate();
  return spec;
}

MockWorldSpec load_mock_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return mock_world_from_json(nlohmann::json::parse(in));
}

std::optional<int> otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
  const auto occupied = std::count_if(hist.begin(), hist.end(), [](auto v) { return v > 0; });
  if (occupied < 2) return std::nullopt;
  double total = 0.0, sum_all = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += static_cast<double>(hist[v]);
    sum_all += static_cast<double>(v) * hist[v];
  }
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(hist[t]);
    sum0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

BBox MockGrounding::ground(const ImageRgb8& image, const std::string& sentence) const {
  if (sentence.empty()) throw InvalidArgument("grounding sentence is empty");
  const int w = image.width(), h = image.height();
  const auto cc = label_components(0, 0, w, h, [&](int x, int y) {
    return image.luma(x, y) >= spec_.threshold;
  });
  const int label = largest_label(cc);
  if (label == 0) throw NoDetection("no region above the detection threshold");
  BBox box{w, h, -1, -1};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (cc.labels[static_cast<std::size_t>(y) * w + x] != label) continue;
      box.x_min = std::min(box.x_min, x);
      box.y_min = std::min(box.y_min, y);
      box.x_max = std::max(box.x_max, x + 1);
      box.y_max = std::max(box.y_max, y + 1);
    }
  }
  return box;
}

BinaryMask MockSegmentation::segment(const ImageRgb8& image, const BBox& box,
                                     const std::vector<Point2D>& points) const {
  check_bbox(box, image.width(), image.height());
  BinaryMask mask(image.width(), image.height());
  std::array<std::uint64_t, 256> hist{};
  for (int y = box.y_min; y < box.y_max; ++y) {
    for (int x = box.x_min; x < box.x_max; ++x) ++hist[image.luma(x, y)];
  }
  const auto level = otsu_threshold(hist);
  if (!level) {
    for (int y = box.y_min; y < box.y_max; ++y) {
      for (int x = box.x_min; x < box.x_max; ++x) mask.set(x, y, true);
    }
    return mask;
  }
  const int t = *level;
  const int bw = box.width(), bh = box.height();
  const auto cc = label_components(box.x_min, box.y_min, bw, bh, [&](int x, int y) {
    return image.luma(x, y) > t;
  });

  std::vector<Point2D> seeds{anchor_point(box)};
  seeds.insert(seeds.end(), points.begin(), points.end());
  std::vector<bool> keep(cc.sizes.size() + 1, false);
  bool any = false;
  for (const auto& s : seeds) {
    const int sx = static_cast<int>(std::floor(s.x)) - box.x_min;
    const int sy = static_cast<int>(std::floor(s.y)) - box.y_min;
    if (sx < 0 || sx >= bw || sy < 0 || sy >= bh) continue;
    const int label = cc.labels[static_cast<std::size_t>(sy) * bw + sx];
    if (label > 0) {
      keep[label] = true;
      any = true;
    }
  }
  if (!any) keep[largest_label(cc)] = true;
  for (int y = 0; y < bh; ++y) {
    for (int x = 0; x < bw; ++x) {
      const int label = cc.labels[static_cast<std::size_t>(y) * bw + x];
      if (label > 0 && keep[label]) mask.set(box.x_min + x, box.y_min + y, true);
    }
  }
  return mask;
}

MockFeatures::MockFeatures(int window) : window_(window) {
  if (window < 1) throw InvalidArgument("feature window must be >= 1");
}

FeatureMap MockFeatures::features(const ImageRgb8& image) const {
  const int w = image.width(), h = image.height();
  const int cols = (w + window_ - 1) / window_;
  const int rows = (h + window_ - 1) / window_;
  std::vector<float> data(static_cast<std::size_t>(rows) * cols * kDim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int x0 = c * window_, x1 = std::min(w, x0 + window_);
      const int y0 = r * window_, y1 = std::min(h, y0 + window_);
      double sum[3] = {0, 0, 0};
      double gx = 0.0, gy = 0.0, lsum = 0.0, lsq = 0.0;
      int ngx = 0, ngy = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int k = 0; k < 3; ++k) sum[k] += image.at(x, y, k);
          const double l = image.luma(x, y);
          lsum += l;
          lsq += l * l;
          if (x + 1 < x1) {
            gx += std::abs(static_cast<int>(image.luma(x + 1, y)) - static_cast<int>(image.luma(x, y)));
            ++ngx;
          }
          if (y + 1 < y1) {
            gy += std::abs(static_cast<int>(image.luma(x, y + 1)) - static_cast<int>(image.luma(x, y)));
            ++ngy;
          }
        }
      }
      const double n = static_cast<double>((x1 - x0) * (y1 - y0));
      const double mean_l = lsum / n;
      float* out = data.data() + (static_cast<std::size_t>(r) * cols + c) * kDim;
      out[0] = static_cast<float>(sum[0] / n);
      out[1] = static_cast<float>(sum[1] / n);
      out[2] = static_cast<float>(sum[2] / n);
      out[3] = static_cast<float>(ngx ? gx / ngx : 0.0);
      out[4] = static_cast<float>(ngy ? gy / ngy : 0.0);
      out[5] = static_cast<float>(std::sqrt(std::max(0.0, lsq / n - mean_l * mean_l)));
    }
  }
  return FeatureMap(rows, cols, kDim, std::move(data), w, h);
}

double MockScoring::band_fraction(const ImageRgb8& image, const std::string& label) const {
  const IntensityBand* band = nullptr;
  if (label == spec_.target_label) {
    band = &spec_.target_band;
  } else if (const auto it = spec_.class_bands.find(label); it != spec_.class_bands.end()) {
    band = &it->second;
  }
  const auto px = image.data();
  std::size_t lit = 0, in_band = 0;
  for (std::size_t i = 0; i < px.size(); i += 3) {
    if (px[i] == 0 && px[i + 1] == 0 && px[i + 2] == 0) continue;
    ++lit;
    const int l = rgb_to_luma(px[i], px[i + 1], px[i + 2]);
    if (band && l >= (*band)[0] && l <= (*band)[1]) ++in_band;
  }
  return lit == 0 ? 0.0 : static_cast<double>(in_band) / static_cast<double>(lit);
}

std::vector<double> MockScoring::classify(const ImageRgb8& image,
                                          const std::vector<std::string>& labels) const {
  if (labels.empty()) throw InvalidArgument("classify needs at least one label");
  std::vector<double> logits;
  logits.reserve(labels.size());
  for (const auto& label : labels) logits.push_back(spec_.logit_scale * band_fraction(image, label));
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : logits) v /= total;
  return logits;
}

std::vector<double> MockScoring::match_texts(const ImageRgb8& image,
                                             const std::vector<std::string>& texts) const {
  if (texts.empty()) throw InvalidArgument("match_texts needs at least one text");
  const double f = band_fraction(image, spec_.target_label);
  return std::vector<double>(texts.size(), std::clamp(f, 0.0, 1.0));
}

Backends make_mock_backends(const MockWorldSpec& spec) {
  spec.validate();
  return {std::make_shared<MockGrounding>(spec), std::make_shared<MockSegmentation>(),
          std::make_shared<MockFeatures>(spec.feature_window), std::make_shared<MockScoring>(spec)};
}

}  // namespace automiseg
