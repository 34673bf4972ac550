#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "automiseg/errors.hpp"
#include "automiseg/eval.hpp"
#include "automiseg/mock_backends.hpp"
#include "automiseg/pipeline.hpp"
#include "automiseg/wire.hpp"
#include "oracles.hpp"

using namespace automiseg;
namespace fs = std::filesystem;

namespace {

const fs::path kWire = fs::path(AUTOMISEG_GOLDEN_DIR) / "wire";

nlohmann::json load(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Serves canned JSON bodies keyed by path; optionally fails the first N calls with 503.
class FakeService {
 public:
  FakeService() {
    server_.Post(R"(/v1/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        res.set_content("{}", "application/json");
        return;
      }
      std::lock_guard lock(mutex_);
      const auto it = replies_.find(req.path);
      if (it == replies_.end()) {
        res.status = 404;
        res.set_content(R"({"error":{"code":"not_found","message":""}})", "application/json");
        return;
      }
      res.status = it->second.first;
      res.set_content(it->second.second.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  void reply(const std::string& path, nlohmann::json body, int status = 200) {
    std::lock_guard lock(mutex_);
    replies_[path] = {status, std::move(body)};
  }
  void fail_first(int n) { fail_first_ = n; }
  int calls() const { return calls_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::map<std::string, std::pair<int, nlohmann::json>> replies_;
  std::atomic<int> fail_first_{0};
  std::atomic<int> calls_{0};
};

BackendEndpoints endpoints(const std::string& url, int retries = 2) {
  BackendEndpoints ep;
  ep.base_url = url;
  ep.timeout_seconds = 5;
  ep.retries = retries;
  return ep;
}

}  // namespace

TEST(Codec, Base64KnownVectors) {
  const std::string s = "foobar";
  for (std::size_t n = 0; n <= s.size(); ++n) {
    const std::vector<std::uint8_t> bytes(s.begin(), s.begin() + n);
    EXPECT_EQ(wire::base64_decode(wire::base64_encode(bytes)), bytes);
  }
  const std::vector<std::uint8_t> foob{'f', 'o', 'o', 'b'};
  EXPECT_EQ(wire::base64_encode(foob), "Zm9vYg==");
  EXPECT_THROW(wire::base64_decode("abc"), ProtocolError);
}

TEST(Codec, FeatureRoundTripBitIdentical) {
  std::mt19937_64 rng(1);
  const auto fm = oracle::random_feature_map(4, 4, 3, 32, 32, rng);
  const auto back = wire::decode_features(wire::encode_features(fm), 32, 32);
  EXPECT_EQ(back, fm);
}

TEST(Codec, ImageAndMaskRoundTrip) {
  std::mt19937_64 rng(2);
  const auto img = oracle::random_image(9, 7, rng);
  EXPECT_EQ(wire::decode_image(wire::encode_image(img)), img);
  BinaryMask m(9, 7);
  m.set(3, 4, true);
  EXPECT_EQ(wire::decode_mask(wire::encode_mask(m)), m);
  EXPECT_THROW(wire::decode_image(wire::base64_encode(std::vector<std::uint8_t>{1, 2, 3})), ProtocolError);
}

TEST(Repair, ProbabilitiesAndScores) {
  const auto p = wire::repair_probs({1.0, 3.0});
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  EXPECT_NEAR(p[1], 0.75, 1e-12);
  EXPECT_THROW(wire::repair_probs({0.0, 0.0}), ProtocolError);
  EXPECT_EQ(wire::repair_scores({-1.0, 0.3, 2.0}), (std::vector<double>{0.0, 0.3, 1.0}));
}

TEST(Endpoints, Validation) {
  EXPECT_THROW(endpoints("").validate(), InvalidArgument);
  auto ep = endpoints("http://x");
  ep.pool_size = 0;
  EXPECT_THROW(ep.validate(), InvalidArgument);
}

TEST(Golden, ServerCasesAgainstMockHarness) {
  const auto world = mock_world_from_json(load(kWire / "mock_world.json"));
  const ProtocolServer server(make_mock_backends(world));
  for (const auto& c : load(kWire / "server_cases.json")) {
    SCOPED_TRACE(c["name"].get<std::string>());
    const auto [status, body] = server.handle(c["path"], c["request"]);
    ASSERT_EQ(status, c["status"].get<int>()) << body.dump();
    const auto& want = c["response"];
    if (want.contains("error")) {
      EXPECT_EQ(body["error"]["code"], want["error"]["code"]);
    } else if (want.contains("bbox")) {
      EXPECT_EQ(body["bbox"], want["bbox"]);
    } else if (want.contains("mask")) {
      EXPECT_EQ(wire::decode_mask(body["mask"]), wire::decode_mask(want["mask"]));
    } else if (want.contains("data")) {
      EXPECT_EQ(wire::decode_features(body, 16, 16), wire::decode_features(want, 16, 16));
    } else {
      const char* key = want.contains("probs") ? "probs" : "scores";
      const auto got = body[key].get<std::vector<double>>();
      const auto exp = want[key].get<std::vector<double>>();
      ASSERT_EQ(got.size(), exp.size());
      double total = 0;
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_NEAR(got[i], exp[i], 1e-9);
        total += got[i];
      }
      if (std::string(key) == "probs") {
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
    }
  }
}

TEST(Golden, ClientRepairsAgainstFakeService) {
  FakeService svc;
  WireBackend client(endpoints(svc.url()));
  for (const auto& c : load(kWire / "client_cases.json")) {
    const std::string name = c["name"];
    SCOPED_TRACE(name);
    const std::string path = c["path"];
    svc.reply(path, c["raw"]);
    const auto& expect = c["expect"];
    const bool should_fail = expect.contains("error");
    auto call = [&]() -> nlohmann::json {
      if (path == "/v1/ground") {
        const auto b = client.ground(ImageRgb8(c["image_size"][0], c["image_size"][1]), "x");
        return {{"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}};
      }
      if (path == "/v1/segment") {
        const int w = c["image_size"][0], h = c["image_size"][1];
        client.segment(ImageRgb8(w, h), {0, 0, w, h}, {});
        return {};
      }
      if (path == "/v1/features") {
        client.features(ImageRgb8(c["image_size"][0], c["image_size"][1]));
        return {};
      }
      if (path == "/v1/classify") return {{"probs", client.classify(ImageRgb8(2, 2), c["labels"])}};
      return {{"scores", client.match_texts(ImageRgb8(2, 2), c["texts"])}};
    };
    if (should_fail) {
      EXPECT_THROW(call(), ProtocolError);
      continue;
    }
    const auto got = call();
    for (const auto& [key, value] : expect.items()) {
      const auto g = got[key].get<std::vector<double>>();
      const auto e = value.get<std::vector<double>>();
      ASSERT_EQ(g.size(), e.size());
      for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], e[i], 1e-9);
    }
  }
}

TEST(Client, NoDetectionMapsToTypedError) {
  FakeService svc;
  svc.reply("/v1/ground", {{"error", {{"code", "no_detection"}, {"message", "nothing"}}}}, 422);
  WireBackend client(endpoints(svc.url()));
  EXPECT_THROW(client.ground(ImageRgb8(4, 4), "x"), NoDetection);
}

TEST(Client, RetriesTransientFailures) {
  FakeService svc;
  svc.reply("/v1/match", {{"scores", {0.4}}});
  svc.fail_first(2);
  WireBackend client(endpoints(svc.url(), 2));
  EXPECT_EQ(client.match_texts(ImageRgb8(2, 2), {"a"}), std::vector<double>{0.4});
  EXPECT_EQ(svc.calls(), 3);
}

TEST(Client, GivesUpAfterRetries) {
  FakeService svc;
  svc.reply("/v1/match", {{"scores", {0.4}}});
  svc.fail_first(10);
  WireBackend client(endpoints(svc.url(), 1));
  EXPECT_THROW(client.match_texts(ImageRgb8(2, 2), {"a"}), BackendUnavailable);
  EXPECT_EQ(svc.calls(), 2);
}

TEST(Client, UnreachableServiceIsUnavailable) {
  auto ep = endpoints("http://127.0.0.1:1", 1);
  ep.timeout_seconds = 0.5;
  WireBackend client(ep);
  EXPECT_THROW(client.features(ImageRgb8(2, 2)), BackendUnavailable);
}

TEST(Client, ServerErrorIsUnavailable) {
  FakeService svc;
  svc.reply("/v1/features", {{"error", {{"code", "internal"}, {"message", "boom"}}}}, 500);
  WireBackend client(endpoints(svc.url()));
  EXPECT_THROW(client.features(ImageRgb8(2, 2)), BackendUnavailable);
}

TEST(EndToEnd, WireMatchesInProcessMock) {
  const auto bench = generate_synthetic_benchmark(6, 5);
  const auto direct = make_mock_backends(bench.world);
  ProtocolServer server(direct);
  const int port = server.start();
  const auto remote = make_wire_backends(endpoints("http://127.0.0.1:" + std::to_string(port)));

  std::vector<Sample> samples;
  for (const auto& s : bench.samples) samples.push_back({s.id, s.image});
  const auto space = default_space(bench.task.grounding_sentences.size());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 3; ++i) {
    const auto config = sample_uniform(space, rng);
    const auto a = run_dataset(samples, bench.task, config, direct, 1);
    const auto b = run_dataset(samples, bench.task, config, remote, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].status, b[k].status);
      EXPECT_EQ(a[k].mask, b[k].mask);
      EXPECT_EQ(a[k].points, b[k].points);
      EXPECT_NEAR(a[k].score.s_val, b[k].score.s_val, 1e-12);
    }
  }
  httplib::Client probe("127.0.0.1", port);
  const auto health = probe.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(nlohmann::json::parse(health->body)["status"], "ok");
  server.stop();
}
