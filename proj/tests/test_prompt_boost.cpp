#include <gtest/gtest.h>

#include <random>

#include "automiseg/errors.hpp"
#include "automiseg/eval.hpp"
#include "automiseg/mock_backends.hpp"
#include "automiseg/prompt_boost.hpp"
#include "oracles.hpp"

using namespace automiseg;

namespace {

FeatureMap constant_map(int hc, int wc, int dim, int iw, int ih) {
  return FeatureMap(hc, wc, dim, std::vector<float>(static_cast<std::size_t>(hc) * wc * dim, 1.0f), iw, ih);
}

class FixedFeatures final : public FeatureBackend {
 public:
  explicit FixedFeatures(FeatureMap fm) : fm_(std::move(fm)) {}
  FeatureMap features(const ImageRgb8&) const override { return fm_; }

 private:
  FeatureMap fm_;
};

}  // namespace

TEST(FeatureMap, RejectsWrongSize) {
  EXPECT_THROW(FeatureMap(2, 2, 3, std::vector<float>(11), 8, 8), InvalidArgument);
}

TEST(Anchor, BoxCenters) {
  EXPECT_EQ(anchor_point({0, 0, 10, 10}), (Point2D{5.0, 5.0}));
  EXPECT_EQ(anchor_point({2, 4, 8, 10}), (Point2D{5.0, 7.0}));
  EXPECT_EQ(anchor_point({0, 0, 1, 1}), (Point2D{0.5, 0.5}));
}

TEST(FeatureAt, CellCenterAndMidpoint) {
  std::mt19937_64 rng(1);
  const auto fm = oracle::random_feature_map(4, 4, 3, 32, 32, rng);
  const auto c = fm.cell_center(1, 2);
  const auto f = feature_at(fm, c);
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(f[d], fm.cell(1, 2)[d], 1e-6);
  const auto a = fm.cell_center(1, 1);
  const auto mid = feature_at(fm, {(a.x + c.x) / 2, a.y});
  for (int d = 0; d < 3; ++d) EXPECT_NEAR(mid[d], 0.5 * (fm.cell(1, 1)[d] + fm.cell(1, 2)[d]), 1e-6);
}

TEST(FeatureAt, MatchesFourTermOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto fm = oracle::random_feature_map(4, 4, 3, 37, 29, rng);
    const Point2D p{u(rng) * 37, u(rng) * 29};
    const auto got = feature_at(fm, p);
    const auto ref = oracle::bilinear(fm, p.x, p.y);
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(got[d], ref[d], 1e-6);
  }
}

TEST(FeatureAt, OutsideImageThrows) {
  const auto fm = constant_map(2, 2, 1, 8, 8);
  EXPECT_THROW(feature_at(fm, {-0.5, 1.0}), OutOfBounds);
  EXPECT_THROW(feature_at(fm, {1.0, 8.5}), OutOfBounds);
}

TEST(TopK, IdenticalFeaturesKeepRowMajorOrder) {
  const auto fm = constant_map(4, 4, 2, 16, 16);
  const auto top = topk_similar(fm, {1.0, 1.0}, {0, 0, 16, 16}, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].cell_index, 0);
  EXPECT_EQ(top[1].cell_index, 1);
  EXPECT_EQ(top[2].cell_index, 2);
  for (const auto& s : top) EXPECT_NEAR(s.similarity, 1.0, 1e-12);
}

TEST(TopK, ParallelCellWins) {
  std::vector<float> data(4 * 4 * 2, 0.0f);
  for (int i = 0; i < 16; ++i) data[2 * i + 1] = 1.0f;  // orthogonal to (1, 0)
  data[2 * 13] = 1.0f;
  data[2 * 13 + 1] = 0.0f;  // cell 13 parallel
  const FeatureMap fm(4, 4, 2, std::move(data), 16, 16);
  const auto top = topk_similar(fm, {1.0, 0.0}, {0, 0, 16, 16}, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].cell_index, 13);
  EXPECT_NEAR(top[0].similarity, 1.0, 1e-12);
}

TEST(TopK, ExcludesAnchorCell) {
  const auto fm = constant_map(4, 4, 1, 16, 16);
  const BBox box{0, 0, 16, 16};  // anchor (8, 8) -> cell (2, 2)
  const auto top = topk_similar(fm, {1.0}, box, 16);
  EXPECT_EQ(top.size(), 15u);
  for (const auto& s : top) EXPECT_NE(s.cell_index, 2 * 4 + 2);
}

TEST(TopK, MatchesExhaustiveSort) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coord(0, 63);
  for (int trial = 0; trial < 100; ++trial) {
    const auto fm = oracle::random_feature_map(8, 8, 16, 64, 64, rng);
    int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const BBox box{x0, y0, x1 + 8, y1 + 8};
    const BBox clipped{box.x_min, box.y_min, std::min(box.x_max, 64), std::min(box.y_max, 64)};
    const auto anchor = feature_at(fm, anchor_point(clipped));
    const auto ref = oracle::topk(fm, anchor, clipped, 10);
    std::vector<ScoredPoint> got;
    try {
      got = topk_similar(fm, anchor, clipped, 10);
    } catch (const EmptyBox&) {
      EXPECT_TRUE(ref.empty());
      continue;
    }
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].cell_index, ref[i].cell);
      EXPECT_NEAR(got[i].similarity, ref[i].sim, 1e-9);
    }
  }
}

TEST(TopK, NoCellCenterInBoxThrows) {
  const auto fm = constant_map(2, 2, 1, 16, 16);  // centers at 3.5 and 11.5
  EXPECT_THROW(topk_similar(fm, {1.0}, {5, 5, 9, 9}, 3), EmptyBox);
}

TEST(KMeans, ExactCoverWhenFewPoints) {
  const std::vector<Point2D> pts{{3, 1}, {1, 2}, {5, 0}};
  auto c = kmeans_centroids(pts, 3, 0);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], (Point2D{5, 0}));
  EXPECT_EQ(c[1], (Point2D{3, 1}));
  EXPECT_EQ(c[2], (Point2D{1, 2}));
}

TEST(KMeans, SeparatedGroups) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> eps(-0.01, 0.01);
  std::vector<Point2D> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({eps(rng), eps(rng)});
  for (int i = 0; i < 5; ++i) pts.push_back({10 + eps(rng), 10 + eps(rng)});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = kmeans_centroids(pts, 2, seed);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_NEAR(c[0].x, 0.0, 0.01);
    EXPECT_NEAR(c[0].y, 0.0, 0.01);
    EXPECT_NEAR(c[1].x, 10.0, 0.01);
    EXPECT_NEAR(c[1].y, 10.0, 0.01);
  }
}

TEST(KMeans, ConvergesToLloydFixedPoint) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2D> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({u(rng), u(rng)});
    const auto res = kmeans(pts, 3, trial);
    const double ours = res.wcss_trace.back();
    EXPECT_NEAR(ours, oracle::wcss(pts, res.assignment, 3), 1e-9);
    // Each point sits with its nearest centroid and each centroid is its cluster mean.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto d = [&](const Point2D& c) { return std::pow(pts[i].x - c.x, 2) + std::pow(pts[i].y - c.y, 2); };
      for (const auto& c : res.centroids) EXPECT_LE(d(res.centroids[res.assignment[i]]), d(c) + 1e-9);
    }
    for (int c = 0; c < 3; ++c) {
      double sx = 0, sy = 0;
      int n = 0;
      for (std::size_t i = 0; i < pts.size(); ++i)
        if (res.assignment[i] == c) sx += pts[i].x, sy += pts[i].y, ++n;
      ASSERT_GT(n, 0);
      EXPECT_NEAR(res.centroids[c].x, sx / n, 1e-9);
      EXPECT_NEAR(res.centroids[c].y, sy / n, 1e-9);
    }
    int worse = 0, total = 0;
    for (int r = 0; r < 1000; ++r) {
      std::vector<int> a(10);
      std::array<int, 3> used{};
      for (auto& v : a) ++used[v = lab(rng)];
      if (used[0] == 0 || used[1] == 0 || used[2] == 0) continue;
      ++total;
      if (ours <= oracle::wcss(pts, a, 3) + 1e-9) ++worse;
    }
    EXPECT_GE(worse, total * 95 / 100);
  }
}

TEST(KMeans, WcssNonIncreasing) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<Point2D> pts;
  for (int i = 0; i < 60; ++i) pts.push_back({u(rng), u(rng)});
  const auto res = kmeans(pts, 5, 9);
  for (std::size_t i = 1; i < res.wcss_trace.size(); ++i) {
    EXPECT_LE(res.wcss_trace[i], res.wcss_trace[i - 1] + 1e-9);
  }
}

TEST(Boost, ZeroPointsDisables) {
  const FixedFeatures fb(constant_map(4, 4, 1, 16, 16));
  EXPECT_TRUE(boost(ImageRgb8(16, 16), {0, 0, 16, 16}, 0, fb).empty());
  EXPECT_THROW(boost(ImageRgb8(16, 16), {0, 0, 16, 16}, 6, fb), InvalidArgument);
}

TEST(Boost, SingleCellBoxGivesAtMostOnePoint) {
  const FixedFeatures fb(constant_map(4, 4, 1, 16, 16));
  const auto pts = boost(ImageRgb8(16, 16), {4, 4, 8, 8}, 3, fb);
  EXPECT_LE(pts.size(), 1u);
}

TEST(Boost, PointsInsideSyntheticTargetBox) {
  const auto bench = generate_synthetic_benchmark(5, 3);
  const MockFeatures features(8);
  for (const auto& s : bench.samples) {
    const auto box = *bbox_of(s.truth);
    const auto pts = boost(s.image, box, 3, features, 1);
    EXPECT_EQ(pts.size(), 3u) << s.id;
    for (const auto& p : pts) EXPECT_TRUE(box.contains(p)) << s.id;
  }
}

TEST(Boost, Deterministic) {
  const auto bench = generate_synthetic_benchmark(1, 4);
  const MockFeatures features(8);
  const auto box = *bbox_of(bench.samples[0].truth);
  EXPECT_EQ(boost(bench.samples[0].image, box, 4, features, 2),
            boost(bench.samples[0].image, box, 4, features, 2));
}
