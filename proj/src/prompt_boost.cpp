#include "automiseg/prompt_boost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "automiseg/backends.hpp"
#include "automiseg/errors.hpp"

namespace automiseg {

FeatureMap::FeatureMap(int height_cells, int width_cells, int dim, std::vector<float> data,
                       int image_width, int image_height)
    : height_cells_(height_cells),
      width_cells_(width_cells),
      dim_(dim),
      data_(std::move(data)),
      image_width_(image_width),
      image_height_(image_height) {
  if (height_cells < 1 || width_cells < 1 || dim < 1) {
    throw InvalidArgument("feature map dimensions must be positive");
  }
  if (image_width < 1 || image_height < 1) {
    throw InvalidArgument("feature map image size must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height_cells) * width_cells * dim) {
    throw InvalidArgument("feature map data length does not match h*w*d");
  }
  if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); })) {
    throw InvalidArgument("feature map contains non-finite values");
  }
}

Point2D FeatureMap::cell_center(int row, int col) const noexcept {
  return {(col + 0.5) * image_width_ / width_cells_ - 0.5,
          (row + 0.5) * image_height_ / height_cells_ - 0.5};
}

Point2D anchor_point(const BBox& box) noexcept {
  return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0};
}

std::vector<double> feature_at(const FeatureMap& fm, const Point2D& p) {
  if (!(p.x >= 0.0 && p.x <= fm.image_width() && p.y >= 0.0 && p.y <= fm.image_height())) {
    throw OutOfBounds("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") outside the image");
  }
  const double gx = std::clamp((p.x + 0.5) * fm.width_cells() / fm.image_width() - 0.5, 0.0,
                               static_cast<double>(fm.width_cells() - 1));
  const double gy = std::clamp((p.y + 0.5) * fm.height_cells() / fm.image_height() - 0.5, 0.0,
                               static_cast<double>(fm.height_cells() - 1));
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, fm.width_cells() - 1);
  const int y1 = std::min(y0 + 1, fm.height_cells() - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;

  std::vector<double> out(static_cast<std::size_t>(fm.dim()));
  const float* a = fm.cell(y0, x0);
  const float* b = fm.cell(y0, x1);
  const float* c = fm.cell(y1, x0);
  const float* d = fm.cell(y1, x1);
  for (int k = 0; k < fm.dim(); ++k) {
    out[k] = (1 - fy) * ((1 - fx) * a[k] + fx * b[k]) + fy * ((1 - fx) * c[k] + fx * d[k]);
  }
  return out;
}

std::vector<ScoredPoint> topk_similar(const FeatureMap& fm, const std::vector<double>& anchor_feat,
                                      const BBox& box, std::size_t k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (anchor_feat.size() != static_cast<std::size_t>(fm.dim())) {
    throw DimensionMismatch("anchor feature length does not match the feature map");
  }
  const double anchor_norm =
      std::sqrt(std::inner_product(anchor_feat.begin(), anchor_feat.end(), anchor_feat.begin(), 0.0));
  if (anchor_norm <= 0.0) throw InvalidArgument("anchor feature is the zero vector");

  const Point2D anchor = anchor_point(box);
  const int anchor_col = std::clamp(
      static_cast<int>(std::floor(anchor.x * fm.width_cells() / fm.image_width())), 0,
      fm.width_cells() - 1);
  const int anchor_row = std::clamp(
      static_cast<int>(std::floor(anchor.y * fm.height_cells() / fm.image_height())), 0,
      fm.height_cells() - 1);

  std::vector<ScoredPoint> candidates;
  bool any_in_box = false;
  for (int row = 0; row < fm.height_cells(); ++row) {
    for (int col = 0; col < fm.width_cells(); ++col) {
      const Point2D center = fm.cell_center(row, col);
      if (!box.contains(center)) continue;
      any_in_box = true;
      if (row == anchor_row && col == anchor_col) continue;
      const float* f = fm.cell(row, col);
      double dot = 0.0, norm = 0.0;
      for (int i = 0; i < fm.dim(); ++i) {
        dot += anchor_feat[i] * f[i];
        norm += static_cast<double>(f[i]) * f[i];
      }
      const double sim = norm > 0.0 ? dot / (anchor_norm * std::sqrt(norm)) : 0.0;
      candidates.push_back({center, sim, row * fm.width_cells() + col});
    }
  }
  if (!any_in_box) throw EmptyBox("no feature cell center lies inside the box");

  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), [](const ScoredPoint& a, const ScoredPoint& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.cell_index < b.cell_index;
                    });
  candidates.resize(take);
  return candidates;
}

namespace {

double sq_dist(const Point2D& a, const Point2D& b) noexcept {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool yx_less(const Point2D& a, const Point2D& b) noexcept {
  return a.y != b.y ? a.y < b.y : a.x < b.x;
}

}  // namespace

KMeansResult kmeans(const std::vector<Point2D>& points, std::size_t n, std::uint64_t seed) {
  if (points.empty()) throw InvalidArgument("kmeans needs at least one point");
  if (n < 1) throw InvalidArgument("kmeans needs n >= 1");

  KMeansResult result;
  if (points.size() <= n) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return yx_less(points[a], points[b]); });
    result.assignment.resize(points.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      result.centroids.push_back(points[order[r]]);
      result.assignment[order[r]] = static_cast<int>(r);
    }
    result.wcss_trace.push_back(0.0);
    return result;
  }

  std::mt19937_64 rng(seed);
  std::vector<Point2D> centroids;
  centroids.push_back(points[std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng)]);
  std::vector<double> d2(points.size());
  while (centroids.size() < n) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
    }
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick;
    if (total > 0.0) {
      pick = std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, points.size() - 1)(rng);
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> assignment(points.size(), -1);
  constexpr int kMaxIterations = 100;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = false;
    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best_c = 0;
      double best = sq_dist(points[i], centroids[0]);
      for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double d = sq_dist(points[i], centroids[c]);
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      if (assignment[i] != best_c) changed = true;
      assignment[i] = best_c;
      wcss += best;
    }
    result.wcss_trace.push_back(wcss);
    if (!changed) break;

    std::vector<Point2D> sums(centroids.size());
    std::vector<std::size_t> counts(centroids.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[assignment[i]].x += points[i].x;
      sums[assignment[i]].y += points[i].y;
      ++counts[assignment[i]];
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] > 0) centroids[c] = {sums[c].x / counts[c], sums[c].y / counts[c]};
    }
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = sq_dist(points[i], centroids[assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids[c] = points[far];
    }
  }

  std::vector<std::size_t> order(centroids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return yx_less(centroids[a], centroids[b]); });
  std::vector<int> rank(centroids.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    result.centroids.push_back(centroids[order[r]]);
    rank[order[r]] = static_cast<int>(r);
  }
  for (auto& a : assignment) a = rank[a];
  result.assignment = std::move(assignment);
  return result;
}

std::vector<Point2D> kmeans_centroids(const std::vector<Point2D>& points, std::size_t n,
                                      std::uint64_t seed) {
  return kmeans(points, n, seed).centroids;
}

std::vector<Point2D> boost(const ImageRgb8& image_for_features, const BBox& box,
                           std::size_t n_points, const FeatureBackend& feature_backend,
                           std::uint64_t seed) {
  if (n_points > kMaxBoostPoints) {
    throw InvalidArgument("n_points must lie in [0, " + std::to_string(kMaxBoostPoints) + "]");
  }
  if (n_points == 0) return {};
  check_bbox(box, image_for_features.width(), image_for_features.height());

  const FeatureMap fm = feature_backend.features(image_for_features);
  const auto anchor_feat = feature_at(fm, anchor_point(box));
  if (std::all_of(anchor_feat.begin(), anchor_feat.end(), [](double v) { return v == 0.0; })) {
    return {};
  }
  std::vector<ScoredPoint> top;
  try {
    top = topk_similar(fm, anchor_feat, box, kBoostCandidatePool);
  } catch (const EmptyBox&) {
    return {};
  }
  if (top.empty()) return {};
  std::vector<Point2D> pts;
  pts.reserve(top.size());
  for (const auto& s : top) pts.push_back(s.point);
  return kmeans_centroids(pts, n_points, seed);
}

}  // namespace automiseg
