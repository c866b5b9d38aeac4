#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "camannot/digest.hpp"
#include "camannot/embedding.hpp"
#include "camannot/error.hpp"

namespace httplib {
class Server;
}

namespace camannot {

enum class BackendKind { Stub, Remote };

struct BackendConfig {
  BackendKind kind = BackendKind::Stub;
  std::optional<std::string> endpoint;  // e.g. "http://127.0.0.1:8500"; required for Remote
  std::string model_id = "stub";
  double timeout_s = 30;
  std::size_t batch_size = 32;
  std::size_t stub_dim = 256;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};

  void validate() const;
};

enum class InputKind { Text, Image, Caption };

std::string_view to_string(InputKind k);

struct CacheKey {
  std::string backend_id;
  std::string model_id;
  InputKind kind = InputKind::Text;
  Digest256 content_hash{};

  /// Hex digest naming the cache file.
  std::string hex() const;
};

/// Backend failure. Retryable errors (connection failures, 5xx) are retried
/// by the gateway with exponential backoff.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

/// Inconsistent configuration, e.g. a cached vector of another dimension.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct BackendHealth {
  std::string model_id;
  std::size_t dim = 0;
};

/// Raw model access. Vectors need not be normalized; the gateway does that.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::vector<float>> embed_texts(const std::vector<std::string>& texts) = 0;
  virtual std::vector<std::vector<float>> embed_images(const std::vector<std::string>& image_bytes) = 0;
  virtual std::string caption(const std::string& image_bytes, const std::string& prompt, int max_new_tokens) = 0;
  virtual BackendHealth health() = 0;
};

/// Deterministic model-free backend. Text vectors are sums of per-token
/// pseudo-random vectors, so texts sharing tokens have higher cosine.
class StubBackend : public Backend {
 public:
  explicit StubBackend(std::size_t dim = 256, std::string model_id = "stub");
  std::string id() const override { return "stub"; }
  std::vector<std::vector<float>> embed_texts(const std::vector<std::string>& texts) override;
  std::vector<std::vector<float>> embed_images(const std::vector<std::string>& image_bytes) override;
  std::string caption(const std::string& image_bytes, const std::string& prompt, int max_new_tokens) override;
  BackendHealth health() override { return {model_id_, dim_}; }

 private:
  std::size_t dim_;
  std::string model_id_;
};

/// Client for the JSON-over-HTTP embedding protocol.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(const BackendConfig& cfg);
  std::string id() const override { return "remote"; }
  std::vector<std::vector<float>> embed_texts(const std::vector<std::string>& texts) override;
  std::vector<std::vector<float>> embed_images(const std::vector<std::string>& image_bytes) override;
  std::string caption(const std::string& image_bytes, const std::string& prompt, int max_new_tokens) override;
  BackendHealth health() override;

 private:
  std::string post(const std::string& path, const std::string& body);
  std::vector<std::vector<float>> parse_embeddings(const std::string& body, std::size_t expected);

  std::string endpoint_;
  std::string model_id_;
  double timeout_s_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg);

/// Unit-norm stub vector for a text, image bytes (kind Image) or empty input.
EmbeddingVector stub_embed(std::string_view input, std::size_t dim = 256, InputKind kind = InputKind::Text);
/// "stub-caption <first 8 hex digits of the request digest>"
std::string stub_caption(std::string_view image_bytes, std::string_view prompt, int max_new_tokens);

/// Cache file codec: 16-byte header (magic, version, dim/length, reserved)
/// followed by little-endian float32 values or UTF-8 text.
std::string encode_vector_file(const std::vector<float>& v);
std::vector<float> decode_vector_file(std::string_view bytes);
std::string encode_text_file(std::string_view text);
std::string decode_text_file(std::string_view bytes);

/// Content-addressed cache, in memory and optionally on disk.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::optional<std::string> dir = std::nullopt);

  std::optional<std::vector<float>> get_vector(const std::string& key);
  void put_vector(const std::string& key, const std::vector<float>& v);
  std::optional<std::string> get_text(const std::string& key);
  void put_text(const std::string& key, const std::string& text);
  void clear();

 private:
  std::optional<std::string> path_for(const std::string& key) const;

  std::optional<std::string> dir_;
  std::mutex mu_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
  std::unordered_map<std::string, std::string> texts_;
};

struct GatewayStats {
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;
  std::size_t warnings = 0;
};

struct ImageEmbeddingResult {
  std::string image_ref;
  std::optional<EmbeddingVector> vector;
  std::string error;
};

inline constexpr int kDefaultTokenBudgets[] = {5, 10, 20, 40};

/// Uniform, cached, normalizing access to a backend. Safe for concurrent use.
class Gateway {
 public:
  explicit Gateway(BackendConfig cfg, std::optional<std::string> cache_dir = std::nullopt);
  Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend, std::optional<std::string> cache_dir = std::nullopt);

  /// Order-preserving; throws BackendError / ConfigError.
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);
  EmbeddingVector embed_text(const std::string& text);

  /// Per-item results: unreadable files are reported, not thrown.
  std::vector<ImageEmbeddingResult> embed_images(const std::vector<std::string>& image_paths);

  /// Throws on unreadable image or backend failure.
  std::string caption_image(const std::string& image_path, const std::string& prompt, int max_new_tokens);

  GatewayStats stats() const;
  void clear_cache();
  const BackendConfig& config() const { return cfg_; }
  std::string backend_id() const { return backend_id_; }

 private:
  CacheKey key_for(InputKind kind, std::string_view content) const;
  std::vector<std::vector<float>> fetch_vectors(InputKind kind, const std::vector<std::string>& payloads);
  void check_dim(std::size_t dim);
  template <typename F>
  auto with_retry(F&& f) -> decltype(f());

  BackendConfig cfg_;
  std::unique_ptr<Backend> backend_;
  std::string backend_id_;
  EmbeddingCache cache_;
  mutable std::mutex mu_;
  GatewayStats stats_;
  std::optional<std::size_t> dim_;
};

/// Serves /v1/embed_text, /v1/embed_image, /v1/caption and /v1/health on top
/// of a backend. Batches larger than max_batch get 413.
void register_protocol_routes(httplib::Server& server, Backend& backend, std::size_t max_batch = 256);

}  // namespace camannot
