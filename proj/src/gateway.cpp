#include "camannot/gateway.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config and keys

void BackendConfig::validate() const {
  if (kind == BackendKind::Remote && (!endpoint || endpoint->empty())) {
    throw ConfigError("remote backend requires an endpoint");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (stub_dim == 0) throw ConfigError("stub dimension must be positive");
  if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

std::string_view to_string(InputKind k) {
  switch (k) {
    case InputKind::Text: return "text";
    case InputKind::Image: return "image";
    case InputKind::Caption: return "caption";
  }
  return "text";
}

std::string CacheKey::hex() const {
  std::string material = backend_id;
  material.push_back('\0');
  material += model_id;
  material.push_back('\0');
  material += to_string(kind);
  material.push_back('\0');
  material.append(reinterpret_cast<const char*>(content_hash.data()), content_hash.size());
  return to_hex(sha256(material));
}

// ---------------------------------------------------------------------------
// Stub backend

namespace {

std::vector<double> hash_vector(const Digest256& digest, std::size_t dim) {
  const auto rng = CounterRng::from_digest(digest);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = 2.0 * rng.unit(i) - 1.0;
  return v;
}

std::vector<double> stub_raw(std::string_view input, std::size_t dim, InputKind kind) {
  if (kind == InputKind::Image) {
    std::string material = "img";
    material.push_back('\0');
    material.append(input);
    return hash_vector(sha256(material), dim);
  }
  const auto tokens = word_tokens(input);
  std::vector<double> sum(dim, 0.0);
  if (tokens.empty()) {
    sum[0] = 1.0;  // reserved vector for empty input
    return sum;
  }
  for (const auto& t : tokens) {
    std::string material = "tok";
    material.push_back('\0');
    material += t;
    const auto v = hash_vector(sha256(material), dim);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
  }
  return sum;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

StubBackend::StubBackend(std::size_t dim, std::string model_id) : dim_(dim), model_id_(std::move(model_id)) {}

std::vector<std::vector<float>> StubBackend::embed_texts(const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(to_float(stub_raw(t, dim_, InputKind::Text)));
  return out;
}

std::vector<std::vector<float>> StubBackend::embed_images(const std::vector<std::string>& image_bytes) {
  std::vector<std::vector<float>> out;
  out.reserve(image_bytes.size());
  for (const auto& b : image_bytes) out.push_back(to_float(stub_raw(b, dim_, InputKind::Image)));
  return out;
}

std::string StubBackend::caption(const std::string& image_bytes, const std::string& prompt, int max_new_tokens) {
  return stub_caption(image_bytes, prompt, max_new_tokens);
}

EmbeddingVector stub_embed(std::string_view input, std::size_t dim, InputKind kind) {
  const auto raw = to_float(stub_raw(input, dim, kind));
  return {unit_normalized(std::span<const float>(raw)), "stub", "stub"};
}

std::string stub_caption(std::string_view image_bytes, std::string_view prompt, int max_new_tokens) {
  std::string material(image_bytes);
  material.push_back('\0');
  material.append(prompt);
  material.push_back('\0');
  material += std::to_string(max_new_tokens);
  return "stub-caption " + to_hex(sha256(material)).substr(0, 8);
}

// ---------------------------------------------------------------------------
// Remote backend

RemoteBackend::RemoteBackend(const BackendConfig& cfg)
    : endpoint_(cfg.endpoint.value_or("")), model_id_(cfg.model_id), timeout_s_(cfg.timeout_s) {
  cfg.validate();
}

std::string RemoteBackend::post(const std::string& path, const std::string& body) {
  httplib::Client client(endpoint_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    throw BackendError("POST " + endpoint_ + path + " failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status >= 500) {
    throw BackendError("POST " + path + " returned " + std::to_string(res->status) + ": " + res->body, true);
  }
  if (res->status != 200) {
    throw BackendError("POST " + path + " returned " + std::to_string(res->status) + ": " + res->body, false);
  }
  return res->body;
}

std::vector<std::vector<float>> RemoteBackend::parse_embeddings(const std::string& body, std::size_t expected) {
  try {
    const auto doc = json::parse(body);
    const auto dim = doc.at("dim").get<std::size_t>();
    std::vector<std::vector<float>> out;
    for (const auto& row : doc.at("embeddings")) {
      auto v = row.get<std::vector<float>>();
      if (v.size() != dim) {
        throw BackendError("backend returned a ragged embedding (" + std::to_string(v.size()) + " vs dim " +
                               std::to_string(dim) + ")",
                           false);
      }
      out.push_back(std::move(v));
    }
    if (out.size() != expected) {
      throw BackendError("backend returned " + std::to_string(out.size()) + " embeddings for " +
                             std::to_string(expected) + " inputs",
                         false);
    }
    return out;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed backend response: ") + e.what(), false);
  }
}

std::vector<std::vector<float>> RemoteBackend::embed_texts(const std::vector<std::string>& texts) {
  const json body = {{"model_id", model_id_}, {"texts", texts}};
  return parse_embeddings(post("/v1/embed_text", body.dump()), texts.size());
}

std::vector<std::vector<float>> RemoteBackend::embed_images(const std::vector<std::string>& image_bytes) {
  json images = json::array();
  for (const auto& b : image_bytes) images.push_back(base64_encode(b));
  const json body = {{"model_id", model_id_}, {"images", images}};
  return parse_embeddings(post("/v1/embed_image", body.dump()), image_bytes.size());
}

std::string RemoteBackend::caption(const std::string& image_bytes, const std::string& prompt, int max_new_tokens) {
  const json body = {{"model_id", model_id_},
                     {"image", base64_encode(image_bytes)},
                     {"prompt", prompt},
                     {"max_new_tokens", max_new_tokens}};
  try {
    return json::parse(post("/v1/caption", body.dump())).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed caption response: ") + e.what(), false);
  }
}

BackendHealth RemoteBackend::health() {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(static_cast<time_t>(timeout_s_), 0);
  auto res = client.Get("/v1/health");
  if (!res) throw BackendError("GET /v1/health failed: " + httplib::to_string(res.error()), true);
  if (res->status != 200) throw BackendError("GET /v1/health returned " + std::to_string(res->status), res->status >= 500);
  try {
    const auto doc = json::parse(res->body);
    return {doc.at("model_id").get<std::string>(), doc.at("dim").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed health response: ") + e.what(), false);
  }
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == BackendKind::Remote) return std::make_unique<RemoteBackend>(cfg);
  return std::make_unique<StubBackend>(cfg.stub_dim, cfg.model_id);
}

// ---------------------------------------------------------------------------
// Cache files

namespace {

constexpr char kVectorMagic[4] = {'C', 'A', 'E', 'V'};
constexpr char kTextMagic[4] = {'C', 'A', 'C', 'P'};
constexpr std::uint32_t kCacheVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string header(const char (&magic)[4], std::uint32_t length) {
  std::string out(magic, 4);
  put_u32(out, kCacheVersion);
  put_u32(out, length);
  put_u32(out, 0);
  return out;
}

std::uint32_t check_header(std::string_view bytes, const char (&magic)[4]) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), magic, 4) != 0) throw Error("cache file has a bad header");
  if (get_u32(bytes, 4) != kCacheVersion) throw Error("unsupported cache file version");
  return get_u32(bytes, 8);
}

}  // namespace

std::string encode_vector_file(const std::vector<float>& v) {
  std::string out = header(kVectorMagic, static_cast<std::uint32_t>(v.size()));
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

std::vector<float> decode_vector_file(std::string_view bytes) {
  const std::uint32_t dim = check_header(bytes, kVectorMagic);
  if (bytes.size() != 16 + 4 * static_cast<std::size_t>(dim)) throw Error("cache file is truncated");
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint32_t bits = get_u32(bytes, 16 + 4 * i);
    std::memcpy(&v[i], &bits, 4);
  }
  return v;
}

std::string encode_text_file(std::string_view text) {
  return header(kTextMagic, static_cast<std::uint32_t>(text.size())) + std::string(text);
}

std::string decode_text_file(std::string_view bytes) {
  const std::uint32_t len = check_header(bytes, kTextMagic);
  if (bytes.size() != 16 + static_cast<std::size_t>(len)) throw Error("cache file is truncated");
  return std::string(bytes.substr(16));
}

EmbeddingCache::EmbeddingCache(std::optional<std::string> dir) : dir_(std::move(dir)) {
  if (dir_) fs::create_directories(*dir_);
}

std::optional<std::string> EmbeddingCache::path_for(const std::string& key) const {
  if (!dir_) return std::nullopt;
  return (fs::path(*dir_) / key.substr(0, 2) / (key + ".bin")).string();
}

std::optional<std::vector<float>> EmbeddingCache::get_vector(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = vectors_.find(key); it != vectors_.end()) return it->second;
  }
  const auto path = path_for(key);
  if (!path || !fs::exists(*path)) return std::nullopt;
  try {
    auto v = decode_vector_file(read_file(*path));
    std::lock_guard lock(mu_);
    vectors_.emplace(key, v);
    return v;
  } catch (const Error& e) {
    spdlog::warn("ignoring unreadable cache file {}: {}", *path, e.what());
    return std::nullopt;
  }
}

void EmbeddingCache::put_vector(const std::string& key, const std::vector<float>& v) {
  {
    std::lock_guard lock(mu_);
    vectors_.insert_or_assign(key, v);
  }
  if (const auto path = path_for(key)) write_file_atomic(*path, encode_vector_file(v));
}

std::optional<std::string> EmbeddingCache::get_text(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = texts_.find(key); it != texts_.end()) return it->second;
  }
  const auto path = path_for(key);
  if (!path || !fs::exists(*path)) return std::nullopt;
  try {
    auto t = decode_text_file(read_file(*path));
    std::lock_guard lock(mu_);
    texts_.emplace(key, t);
    return t;
  } catch (const Error& e) {
    spdlog::warn("ignoring unreadable cache file {}: {}", *path, e.what());
    return std::nullopt;
  }
}

void EmbeddingCache::put_text(const std::string& key, const std::string& text) {
  {
    std::lock_guard lock(mu_);
    texts_.insert_or_assign(key, text);
  }
  if (const auto path = path_for(key)) write_file_atomic(*path, encode_text_file(text));
}

void EmbeddingCache::clear() {
  std::lock_guard lock(mu_);
  vectors_.clear();
  texts_.clear();
  if (dir_ && fs::exists(*dir_)) {
    for (const auto& entry : fs::directory_iterator(*dir_)) fs::remove_all(entry.path());
  }
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(BackendConfig cfg, std::optional<std::string> cache_dir)
    : Gateway(cfg, make_backend(cfg), std::move(cache_dir)) {}

Gateway::Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend, std::optional<std::string> cache_dir)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), backend_id_(backend_->id()), cache_(std::move(cache_dir)) {
  cfg_.validate();
}

CacheKey Gateway::key_for(InputKind kind, std::string_view content) const {
  return {backend_id_, cfg_.model_id, kind, sha256(content)};
}

template <typename F>
auto Gateway::with_retry(F&& f) -> decltype(f()) {
  auto delay = cfg_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      {
        std::lock_guard lock(mu_);
        ++stats_.backend_calls;
      }
      return f();
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      if (attempt >= cfg_.max_attempts) {
        throw BackendError("backend unreachable after " + std::to_string(attempt) + " attempts: " + e.what(), true);
      }
      spdlog::warn("backend call failed (attempt {}/{}): {}", attempt, cfg_.max_attempts, e.what());
      {
        std::lock_guard lock(mu_);
        ++stats_.retries;
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
}

void Gateway::check_dim(std::size_t dim) {
  std::lock_guard lock(mu_);
  if (!dim_) {
    dim_ = dim;
  } else if (*dim_ != dim) {
    throw ConfigError("embedding dimension mismatch for " + backend_id_ + "/" + cfg_.model_id + ": expected " +
                      std::to_string(*dim_) + ", got " + std::to_string(dim) + " (stale cache?)");
  }
}

std::vector<std::vector<float>> Gateway::fetch_vectors(InputKind kind, const std::vector<std::string>& payloads) {
  std::vector<std::string> keys;
  keys.reserve(payloads.size());
  for (const auto& p : payloads) keys.push_back(key_for(kind, p).hex());

  std::vector<std::optional<std::vector<float>>> found(payloads.size());
  std::vector<std::size_t> miss_items;  // first occurrence of each missing key
  std::unordered_map<std::string, std::size_t> miss_index;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    if (auto v = cache_.get_vector(keys[i])) {
      check_dim(v->size());
      found[i] = std::move(*v);
      ++hits;
    } else if (!miss_index.count(keys[i])) {
      miss_index.emplace(keys[i], miss_items.size());
      miss_items.push_back(i);
    }
  }
  {
    std::lock_guard lock(mu_);
    stats_.cache_hits += hits;
    stats_.cache_misses += miss_items.size();
  }

  for (std::size_t start = 0; start < miss_items.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(miss_items.size(), start + cfg_.batch_size);
    std::vector<std::string> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(payloads[miss_items[k]]);
    auto raw = with_retry([&] {
      return kind == InputKind::Image ? backend_->embed_images(batch) : backend_->embed_texts(batch);
    });
    if (raw.size() != batch.size()) throw BackendError("backend returned a wrong number of embeddings", false);
    for (std::size_t k = start; k < end; ++k) {
      auto& v = raw[k - start];
      if (l2_norm(v) == 0) throw BackendError("backend returned a zero vector", false);
      check_dim(v.size());
      auto unit = unit_normalized(std::span<const float>(v));
      cache_.put_vector(keys[miss_items[k]], unit);
      found[miss_items[k]] = std::move(unit);
    }
  }

  std::vector<std::vector<float>> out(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    out[i] = found[i] ? *found[i] : *found[miss_items[miss_index.at(keys[i])]];
  }
  return out;
}

std::vector<EmbeddingVector> Gateway::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  auto raw = fetch_vectors(InputKind::Text, texts);
  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (auto& v : raw) out.push_back({std::move(v), backend_id_, cfg_.model_id});
  return out;
}

EmbeddingVector Gateway::embed_text(const std::string& text) { return embed_texts({text}).front(); }

std::vector<ImageEmbeddingResult> Gateway::embed_images(const std::vector<std::string>& image_paths) {
  std::vector<ImageEmbeddingResult> out(image_paths.size());
  std::vector<std::string> payloads;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < image_paths.size(); ++i) {
    out[i].image_ref = image_paths[i];
    try {
      payloads.push_back(read_file(image_paths[i]));
      slots.push_back(i);
    } catch (const Error& e) {
      out[i].error = std::string("unreadable image: ") + e.what();
    }
  }
  if (payloads.empty()) return out;
  auto raw = fetch_vectors(InputKind::Image, payloads);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    out[slots[k]].vector = EmbeddingVector{std::move(raw[k]), backend_id_, cfg_.model_id};
  }
  return out;
}

std::string Gateway::caption_image(const std::string& image_path, const std::string& prompt, int max_new_tokens) {
  if (std::find(std::begin(kDefaultTokenBudgets), std::end(kDefaultTokenBudgets), max_new_tokens) ==
      std::end(kDefaultTokenBudgets)) {
    spdlog::warn("max_new_tokens={} is outside the usual {{5, 10, 20, 40}}", max_new_tokens);
    std::lock_guard lock(mu_);
    ++stats_.warnings;
  }
  if (max_new_tokens <= 0) throw Error("max_new_tokens must be positive");
  const std::string bytes = read_file(image_path);
  std::string material = bytes;
  material.push_back('\0');
  material += prompt;
  material.push_back('\0');
  material += std::to_string(max_new_tokens);
  const std::string key = key_for(InputKind::Caption, material).hex();

  if (auto cached = cache_.get_text(key)) {
    std::lock_guard lock(mu_);
    ++stats_.cache_hits;
    return *cached;
  }
  {
    std::lock_guard lock(mu_);
    ++stats_.cache_misses;
  }
  std::string text = with_retry([&] { return backend_->caption(bytes, prompt, max_new_tokens); });
  cache_.put_text(key, text);
  return text;
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Gateway::clear_cache() { cache_.clear(); }

// ---------------------------------------------------------------------------
// Protocol server

void register_protocol_routes(httplib::Server& server, Backend& backend, std::size_t max_batch) {
  auto error = [](httplib::Response& res, int status, const std::string& message, json extra = json::object()) {
    extra["error"] = message;
    res.status = status;
    res.set_content(extra.dump(), "application/json");
  };
  auto check_model = [&backend, error](const json& body, httplib::Response& res) {
    const auto model = body.value("model_id", std::string());
    if (model != backend.health().model_id) {
      error(res, 404, "unknown model_id '" + model + "'");
      return false;
    }
    return true;
  };

  server.Get("/v1/health", [&backend](const httplib::Request&, httplib::Response& res) {
    const auto h = backend.health();
    res.set_content(json{{"model_id", h.model_id}, {"dim", h.dim}}.dump(), "application/json");
  });

  auto embed_route = [&backend, max_batch, error, check_model](bool images) {
    return [&backend, max_batch, error, check_model, images](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
        if (!check_model(body, res)) return;
        std::vector<std::string> inputs;
        for (const auto& item : body.at(images ? "images" : "texts")) {
          inputs.push_back(images ? base64_decode(item.get<std::string>()) : item.get<std::string>());
        }
        if (inputs.size() > max_batch) {
          error(res, 413, "batch too large", {{"max_batch", max_batch}});
          return;
        }
        const auto vectors = images ? backend.embed_images(inputs) : backend.embed_texts(inputs);
        res.set_content(json{{"dim", backend.health().dim}, {"embeddings", vectors}}.dump(), "application/json");
      } catch (const std::exception& e) {
        error(res, 400, e.what());
      }
    };
  };
  server.Post("/v1/embed_text", embed_route(false));
  server.Post("/v1/embed_image", embed_route(true));

  server.Post("/v1/caption", [&backend, error, check_model](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = json::parse(req.body);
      if (!check_model(body, res)) return;
      const auto text = backend.caption(base64_decode(body.at("image").get<std::string>()),
                                        body.at("prompt").get<std::string>(), body.at("max_new_tokens").get<int>());
      res.set_content(json{{"text", text}}.dump(), "application/json");
    } catch (const std::exception& e) {
      error(res, 400, e.what());
    }
  });
}

}  // namespace camannot
