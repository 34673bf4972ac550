#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "automiseg/backends.hpp"

namespace httplib {
class Client;
class Server;
}  // namespace httplib

namespace automiseg {

struct BackendEndpoints {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  double timeout_seconds = 120.0;
  int retries = 2;
  std::size_t pool_size = 4;

  void validate() const;
};

namespace wire {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string encode_image(const ImageRgb8& image);
ImageRgb8 decode_image(const std::string& b64);
std::string encode_mask(const BinaryMask& mask);
BinaryMask decode_mask(const std::string& b64);

/// {h, w, d, data}, data = base64 of little-endian f32, row-major [h][w][d].
nlohmann::json encode_features(const FeatureMap& fm);
FeatureMap decode_features(const nlohmann::json& j, int image_width, int image_height);

// Response repair helpers, lenient with a logged warning.
BBox repair_bbox(const nlohmann::json& bbox, int image_width, int image_height);
std::vector<double> repair_probs(std::vector<double> probs);
std::vector<double> repair_scores(std::vector<double> scores);

inline constexpr const char* kNoDetectionCode = "no_detection";

}  // namespace wire

/// HTTP client for the model service. Implements all four backend interfaces.
/// Transport failures and 502/503/504 are retried `retries` times.
class WireBackend final : public GroundingBackend,
                          public SegmentationBackend,
                          public FeatureBackend,
                          public ScoringBackend {
 public:
  explicit WireBackend(BackendEndpoints endpoints);
  ~WireBackend() override;

  BBox ground(const ImageRgb8& image, const std::string& sentence) const override;
  BinaryMask segment(const ImageRgb8& image, const BBox& box,
                     const std::vector<Point2D>& points) const override;
  FeatureMap features(const ImageRgb8& image) const override;
  std::vector<double> classify(const ImageRgb8& image,
                               const std::vector<std::string>& labels) const override;
  std::vector<double> match_texts(const ImageRgb8& image,
                                  const std::vector<std::string>& texts) const override;

 private:
  class ClientPool;

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

  BackendEndpoints endpoints_;
  std::unique_ptr<ClientPool> pool_;
};

Backends make_wire_backends(const BackendEndpoints& endpoints);

/// Serves a Backends bundle over the wire protocol. Used as the mock server
/// harness for protocol tests and by `automiseg serve-mock`.
class ProtocolServer {
 public:
  explicit ProtocolServer(Backends backends);
  ~ProtocolServer();

  ProtocolServer(const ProtocolServer&) = delete;
  ProtocolServer& operator=(const ProtocolServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen_blocking(const std::string& host, int port);
  void stop();

  int port() const noexcept { return port_; }

  /// Handles one decoded request; exposed for golden-file conformance checks.
  /// Returns (http status, response body).
  std::pair<int, nlohmann::json> handle(const std::string& path, const nlohmann::json& body) const;

 private:
  void install_routes();

  Backends backends_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace automiseg
