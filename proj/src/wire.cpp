#include "automiseg/wire.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "automiseg/errors.hpp"
#include "automiseg/png_io.hpp"

namespace automiseg {

void BackendEndpoints::validate() const {
  if (base_url.empty()) throw InvalidArgument("backend base_url is empty");
  if (!(timeout_seconds > 0.0)) throw InvalidArgument("backend timeout must be positive");
  if (retries < 0) throw InvalidArgument("backend retries must be non-negative");
  if (pool_size < 1) throw InvalidArgument("backend pool size must be >= 1");
}

namespace wire {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string encode_image(const ImageRgb8& image) { return base64_encode(encode_png(image)); }

ImageRgb8 decode_image(const std::string& b64) {
  try {
    return decode_png(base64_decode(b64));
  } catch (const DecodeError& e) {
    throw ProtocolError(std::string("image payload: ") + e.what());
  }
}

std::string encode_mask(const BinaryMask& mask) { return base64_encode(encode_mask_png(mask)); }

BinaryMask decode_mask(const std::string& b64) {
  try {
    return decode_mask_png(base64_decode(b64));
  } catch (const DecodeError& e) {
    throw ProtocolError(std::string("mask payload: ") + e.what());
  }
}

nlohmann::json encode_features(const FeatureMap& fm) {
  const auto& data = fm.data();
  std::vector<std::uint8_t> bytes(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    bytes[4 * i] = static_cast<std::uint8_t>(bits);
    bytes[4 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
    bytes[4 * i + 2] = static_cast<std::uint8_t>(bits >> 16);
    bytes[4 * i + 3] = static_cast<std::uint8_t>(bits >> 24);
  }
  return {{"h", fm.height_cells()}, {"w", fm.width_cells()}, {"d", fm.dim()},
          {"data", base64_encode(bytes)}};
}

FeatureMap decode_features(const nlohmann::json& j, int image_width, int image_height) {
  const int h = j.at("h").get<int>();
  const int w = j.at("w").get<int>();
  const int d = j.at("d").get<int>();
  if (h < 1 || w < 1 || d < 1) throw ProtocolError("feature grid dimensions must be positive");
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  const std::size_t n = static_cast<std::size_t>(h) * w * d;
  if (bytes.size() != n * 4) {
    throw ProtocolError("feature payload holds " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(n * 4));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    data[i] = std::bit_cast<float>(bits);
  }
  try {
    return FeatureMap(h, w, d, std::move(data), image_width, image_height);
  } catch (const InvalidArgument& e) {
    throw ProtocolError(std::string("feature payload: ") + e.what());
  }
}

BBox repair_bbox(const nlohmann::json& bbox, int image_width, int image_height) {
  if (!bbox.is_array() || bbox.size() != 4) throw ProtocolError("bbox must be an array of 4 numbers");
  std::array<long, 4> raw{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!bbox[i].is_number()) throw ProtocolError("bbox entries must be numbers");
    const double v = bbox[i].get<double>();
    if (!std::isfinite(v)) throw ProtocolError("bbox entries must be finite");
    raw[i] = std::lround(v);
  }
  BBox box{static_cast<int>(std::clamp(raw[0], 0L, static_cast<long>(image_width))),
           static_cast<int>(std::clamp(raw[1], 0L, static_cast<long>(image_height))),
           static_cast<int>(std::clamp(raw[2], 0L, static_cast<long>(image_width))),
           static_cast<int>(std::clamp(raw[3], 0L, static_cast<long>(image_height)))};
  if (box.x_min != raw[0] || box.y_min != raw[1] || box.x_max != raw[2] || box.y_max != raw[3]) {
    spdlog::warn("grounding box [{}, {}, {}, {}] exceeds the {}x{} image, clamped", raw[0], raw[1],
                 raw[2], raw[3], image_width, image_height);
  }
  if (!box.valid_within(image_width, image_height)) {
    throw ProtocolError("grounding box is degenerate after clamping");
  }
  return box;
}

std::vector<double> repair_probs(std::vector<double> probs) {
  bool repaired = false;
  for (auto& p : probs) {
    if (!std::isfinite(p)) throw ProtocolError("probabilities must be finite");
    if (p < 0.0) {
      p = 0.0;
      repaired = true;
    }
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (total <= 0.0) throw ProtocolError("probabilities sum to zero");
  if (std::abs(total - 1.0) > 1e-6) repaired = true;
  if (repaired) {
    spdlog::warn("classify probabilities summed to {}, renormalized", total);
    for (auto& p : probs) p /= total;
  }
  return probs;
}

std::vector<double> repair_scores(std::vector<double> scores) {
  for (auto& s : scores) {
    if (!std::isfinite(s)) throw ProtocolError("match scores must be finite");
    if (s < 0.0 || s > 1.0) {
      spdlog::warn("match score {} outside [0, 1], clamped", s);
      s = std::clamp(s, 0.0, 1.0);
    }
  }
  return scores;
}

}  // namespace wire

class WireBackend::ClientPool {
 public:
  explicit ClientPool(const BackendEndpoints& ep) : endpoints_(ep) {}

  class Lease {
   public:
    Lease(ClientPool& pool, std::unique_ptr<httplib::Client> client)
        : pool_(pool), client_(std::move(client)) {}
    ~Lease() { pool_.release(std::move(client_)); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    httplib::Client& operator*() { return *client_; }
    httplib::Client* operator->() { return client_.get(); }

   private:
    ClientPool& pool_;
    std::unique_ptr<httplib::Client> client_;
  };

  Lease acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !idle_.empty() || created_ < endpoints_.pool_size; });
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return Lease(*this, std::move(c));
    }
    ++created_;
    lock.unlock();
    auto client = std::make_unique<httplib::Client>(endpoints_.base_url);
    const auto secs = static_cast<time_t>(endpoints_.timeout_seconds);
    const auto usecs = static_cast<time_t>((endpoints_.timeout_seconds - secs) * 1e6);
    client->set_connection_timeout(secs, usecs);
    client->set_read_timeout(secs, usecs);
    client->set_write_timeout(secs, usecs);
    client->set_keep_alive(true);
    return Lease(*this, std::move(client));
  }

 private:
  void release(std::unique_ptr<httplib::Client> client) {
    {
      std::lock_guard lock(mutex_);
      idle_.push_back(std::move(client));
    }
    cv_.notify_one();
  }

  BackendEndpoints endpoints_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  std::size_t created_ = 0;
};

WireBackend::WireBackend(BackendEndpoints endpoints) : endpoints_(std::move(endpoints)) {
  endpoints_.validate();
  pool_ = std::make_unique<ClientPool>(endpoints_);
}

WireBackend::~WireBackend() = default;

nlohmann::json WireBackend::post(const std::string& path, const nlohmann::json& body) const {
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= endpoints_.retries; ++attempt) {
    auto client = pool_->acquire();
    auto res = client->Post(path, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 502 || res->status == 503 || res->status == 504) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      if (res->status >= 400) {
        throw BackendUnavailable(path + ": HTTP " + std::to_string(res->status));
      }
      throw ProtocolError(path + ": response is not JSON");
    }
    if (res->status >= 400) {
      const auto err = reply.value("error", nlohmann::json::object());
      const std::string code = err.value("code", "");
      const std::string message = err.value("message", "");
      if (code == wire::kNoDetectionCode) throw NoDetection(message);
      if (res->status >= 500) {
        throw BackendUnavailable(path + ": HTTP " + std::to_string(res->status) + " " + message);
      }
      throw ProtocolError(path + ": HTTP " + std::to_string(res->status) + " " + code + " " + message);
    }
    return reply;
  }
  throw BackendUnavailable(path + ": giving up after " + std::to_string(endpoints_.retries + 1) +
                           " attempts (" + last_error + ")");
}

namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response field ") + key + ": " + e.what());
  }
}

}  // namespace

BBox WireBackend::ground(const ImageRgb8& image, const std::string& sentence) const {
  const auto reply = post("/v1/ground", {{"image", wire::encode_image(image)}, {"sentence", sentence}});
  if (!reply.contains("bbox")) throw ProtocolError("ground response lacks bbox");
  return wire::repair_bbox(reply["bbox"], image.width(), image.height());
}

BinaryMask WireBackend::segment(const ImageRgb8& image, const BBox& box,
                                const std::vector<Point2D>& points) const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({p.x, p.y});
  const auto reply = post("/v1/segment", {{"image", wire::encode_image(image)},
                                          {"bbox", {box.x_min, box.y_min, box.x_max, box.y_max}},
                                          {"points", pts}});
  auto mask = wire::decode_mask(field<std::string>(reply, "mask"));
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw ProtocolError("segment returned a " + std::to_string(mask.width()) + "x" +
                        std::to_string(mask.height()) + " mask for a " +
                        std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                        " image");
  }
  return mask;
}

FeatureMap WireBackend::features(const ImageRgb8& image) const {
  const auto reply = post("/v1/features", {{"image", wire::encode_image(image)}});
  return wire::decode_features(reply, image.width(), image.height());
}

std::vector<double> WireBackend::classify(const ImageRgb8& image,
                                          const std::vector<std::string>& labels) const {
  const auto reply = post("/v1/classify", {{"image", wire::encode_image(image)}, {"labels", labels}});
  auto probs = field<std::vector<double>>(reply, "probs");
  if (probs.size() != labels.size()) throw ProtocolError("classify returned a wrong probability count");
  return wire::repair_probs(std::move(probs));
}

std::vector<double> WireBackend::match_texts(const ImageRgb8& image,
                                             const std::vector<std::string>& texts) const {
  const auto reply = post("/v1/match", {{"image", wire::encode_image(image)}, {"texts", texts}});
  auto scores = field<std::vector<double>>(reply, "scores");
  if (scores.size() != texts.size()) throw ProtocolError("match returned a wrong score count");
  return wire::repair_scores(std::move(scores));
}

Backends make_wire_backends(const BackendEndpoints& endpoints) {
  auto wire = std::make_shared<WireBackend>(endpoints);
  return {wire, wire, wire, wire};
}

ProtocolServer::ProtocolServer(Backends backends)
    : backends_(std::move(backends)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ProtocolServer::~ProtocolServer() { stop(); }

namespace {

nlohmann::json error_body(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

BBox request_bbox(const nlohmann::json& j) {
  const auto v = j.at("bbox").get<std::vector<int>>();
  if (v.size() != 4) throw InvalidArgument("bbox must hold 4 integers");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

std::pair<int, nlohmann::json> ProtocolServer::handle(const std::string& path,
                                                      const nlohmann::json& body) const {
  try {
    if (path == "/v1/ground") {
      const auto image = wire::decode_image(body.at("image").get<std::string>());
      const auto box = backends_.grounding->ground(image, body.at("sentence").get<std::string>());
      return {200, {{"bbox", {box.x_min, box.y_min, box.x_max, box.y_max}}}};
    }
    if (path == "/v1/segment") {
      const auto image = wire::decode_image(body.at("image").get<std::string>());
      std::vector<Point2D> points;
      for (const auto& p : body.value("points", nlohmann::json::array())) {
        points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      const auto mask = backends_.segmentation->segment(image, request_bbox(body), points);
      return {200, {{"mask", wire::encode_mask(mask)}}};
    }
    if (path == "/v1/features") {
      const auto image = wire::decode_image(body.at("image").get<std::string>());
      return {200, wire::encode_features(backends_.features->features(image))};
    }
    if (path == "/v1/classify") {
      const auto image = wire::decode_image(body.at("image").get<std::string>());
      const auto probs =
          backends_.scoring->classify(image, body.at("labels").get<std::vector<std::string>>());
      return {200, {{"probs", probs}}};
    }
    if (path == "/v1/match") {
      const auto image = wire::decode_image(body.at("image").get<std::string>());
      const auto scores =
          backends_.scoring->match_texts(image, body.at("texts").get<std::vector<std::string>>());
      return {200, {{"scores", scores}}};
    }
    return {404, error_body("not_found", "unknown endpoint " + path)};
  } catch (const NoDetection& e) {
    return {422, error_body(wire::kNoDetectionCode, e.what())};
  } catch (const nlohmann::json::exception& e) {
    return {400, error_body("bad_request", e.what())};
  } catch (const InvalidArgument& e) {
    return {400, error_body("bad_request", e.what())};
  } catch (const ProtocolError& e) {
    return {400, error_body("bad_request", e.what())};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what())};
  }
}

void ProtocolServer::install_routes() {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    std::pair<int, nlohmann::json> reply;
    try {
      body = nlohmann::json::parse(req.body);
      reply = handle(req.path, body);
    } catch (const nlohmann::json::exception& e) {
      reply = {400, error_body("bad_request", e.what())};
    }
    res.status = reply.first;
    res.set_content(reply.second.dump(), "application/json");
  };
  for (const char* path : {"/v1/ground", "/v1/segment", "/v1/features", "/v1/classify", "/v1/match"}) {
    server_->Post(path, route);
  }
  server_->Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"status", "ok"}, {"models", {{"backend", "mock"}}}}.dump(),
                    "application/json");
  });
}

int ProtocolServer::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ProtocolServer::listen_blocking(const std::string& host, int port) {
  port_ = port;
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void ProtocolServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace automiseg
