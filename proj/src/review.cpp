#include "camannot/review.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "camannot/error.hpp"
#include "camannot/evaluation.hpp"
#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string Correction::to_json_line() const {
  json j;
  j["image_id"] = image_id;
  j["reviewer_id"] = reviewer_id;
  j["corrected"] = corrected ? std::string(to_string(*corrected)) : std::string("confirm");
  j["at"] = format_iso8601(at);
  j["prior_prediction"] = to_string(prior_prediction);
  return j.dump() + "\n";
}

Correction Correction::from_json_line(std::string_view line) {
  Correction c;
  try {
    const auto j = json::parse(line);
    c.image_id = j.at("image_id").get<std::string>();
    c.reviewer_id = j.at("reviewer_id").get<std::string>();
    const auto corrected = j.at("corrected").get<std::string>();
    if (to_lower(corrected) != "confirm") {
      c.corrected = parse_intensity(corrected);
      if (!c.corrected) throw Error("unknown class '" + corrected + "'");
    }
    const auto at = parse_iso8601(j.at("at").get<std::string>());
    if (!at) throw Error("bad timestamp");
    c.at = *at;
    const auto prior = parse_intensity(j.at("prior_prediction").get<std::string>());
    if (!prior) throw Error("unknown prior prediction");
    c.prior_prediction = *prior;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed correction: ") + e.what());
  }
  return c;
}

std::map<ReviewKey, Correction> latest_corrections(const std::vector<Correction>& log) {
  std::map<ReviewKey, Correction> out;
  for (const auto& c : log) out.insert_or_assign(ReviewKey{c.image_id, c.reviewer_id}, c);
  return out;
}

namespace {

std::optional<double> fraction(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string ReviewProgress::to_json() const {
  json j;
  j["n_reviewed"] = n_reviewed;
  j["n_corrected"] = n_corrected;
  j["fraction_corrected"] = opt(fraction_corrected);
  json classes = json::object();
  for (const auto& [c, p] : by_predicted) {
    classes[std::string(to_string(c))] = {{"n_reviewed", p.n_reviewed},
                                          {"n_corrected", p.n_corrected},
                                          {"fraction_corrected", opt(p.fraction_corrected)}};
  }
  j["by_predicted"] = std::move(classes);
  json m = json::array();
  for (const auto& [k, n] : matrix) {
    m.push_back({{"predicted", to_string(k.first)}, {"corrected", to_string(k.second)}, {"n", n}});
  }
  j["corrections"] = std::move(m);
  return j.dump();
}

ReviewProgress correction_metrics(const std::vector<Correction>& log, const std::map<std::string, Intensity>& predictions) {
  ReviewProgress p;
  for (const auto& [key, c] : latest_corrections(log)) {
    Correction e = c;
    if (auto it = predictions.find(e.image_id); it != predictions.end()) e.prior_prediction = it->second;
    auto& cls = p.by_predicted[e.prior_prediction];
    ++p.n_reviewed;
    ++cls.n_reviewed;
    if (e.changes_prediction()) {
      ++p.n_corrected;
      ++cls.n_corrected;
      ++p.matrix[{e.prior_prediction, *e.corrected}];
    }
  }
  p.fraction_corrected = fraction(p.n_corrected, p.n_reviewed);
  for (auto& [c, cls] : p.by_predicted) cls.fraction_corrected = fraction(cls.n_corrected, cls.n_reviewed);
  return p;
}

// ---------------------------------------------------------------------------
// Log

CorrectionLog::CorrectionLog(std::string path) : path_(std::move(path)) {
  const fs::path p(path_);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void CorrectionLog::append(const Correction& c) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << c.to_json_line() << std::flush;
  if (!out) throw Error("cannot append to correction log " + path_);
}

std::vector<Correction> CorrectionLog::replay() const {
  std::lock_guard lock(mu_);
  std::vector<Correction> out;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(Correction::from_json_line(line));
    } catch (const Error& e) {
      throw Error(path_ + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Service

namespace {

HttpResponse error_response(int status, const std::string& reason) {
  return {status, json{{"error", reason}}.dump()};
}

std::string content_type_for(const std::string& path) {
  const std::string ext = to_lower(fs::path(path).extension().string());
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".ppm" || ext == ".pnm") return "image/x-portable-pixmap";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

}  // namespace

ReviewService::ReviewService(Dataset dataset, std::vector<PredictionRecord> predictions, const std::string& log_path,
                             Clock clock)
    : dataset_(std::move(dataset)), predictions_(std::move(predictions)), log_(log_path), clock_(std::move(clock)) {
  for (std::size_t i = 0; i < dataset_.records.size(); ++i) by_image_.emplace(image_id(dataset_.records[i]), i);
  for (std::size_t i = 0; i < predictions_.size(); ++i) {
    const auto& p = predictions_[i];
    if (!by_image_.count(p.image_id)) spdlog::warn("prediction for unknown image {}", p.image_id);
    if (!prediction_of_.emplace(p.image_id, i).second) throw Error("duplicate prediction for image " + p.image_id);
    if (p.ok() && p.predicted) predicted_[p.image_id] = *p.predicted;
  }
  entries_ = log_.replay();
}

HttpResponse ReviewService::participants() const {
  std::lock_guard lock(mu_);
  std::map<std::string, std::size_t> reviewed;
  for (const auto& [key, c] : latest_corrections(entries_)) {
    const auto it = by_image_.find(key.first);
    if (it != by_image_.end()) ++reviewed[dataset_.records[it->second].participant_id];
  }
  json out = json::array();
  for (const auto& p : dataset_.participants) {
    const auto recs = dataset_.records_of(p.id);
    std::size_t n_pred = 0;
    for (const auto& r : recs) n_pred += predicted_.count(image_id(r));
    out.push_back({{"participant_id", p.id},
                   {"n_images", recs.size()},
                   {"n_predicted", n_pred},
                   {"n_reviewed", reviewed.count(p.id) ? reviewed[p.id] : 0}});
  }
  return {200, out.dump()};
}

HttpResponse ReviewService::timeline(const std::string& participant_id, std::size_t from, std::size_t limit) const {
  if (!dataset_.participant(participant_id)) return error_response(404, "unknown participant '" + participant_id + "'");
  if (limit == 0 || limit > kMaxPageSize) {
    return error_response(400, "limit must be between 1 and " + std::to_string(kMaxPageSize));
  }
  std::lock_guard lock(mu_);
  std::map<std::string, const Correction*> latest;  // by image, across reviewers
  for (const auto& c : entries_) latest[c.image_id] = &c;

  const auto recs = dataset_.records_of(participant_id);
  json items = json::array();
  for (std::size_t i = from; i < recs.size() && i < from + limit; ++i) {
    const auto& r = recs[i];
    const std::string id = image_id(r);
    json item;
    item["image_id"] = id;
    item["timestamp"] = format_iso8601(r.timestamp);
    item["image_url"] = r.image_ref ? json("/api/images/" + id) : json(nullptr);
    item["raw_label"] = r.raw_label;
    item["intensity"] = to_string(r.intensity);
    if (auto it = prediction_of_.find(id); it != prediction_of_.end()) {
      const auto& p = predictions_[it->second];
      json pj;
      pj["predicted"] = p.predicted ? json(to_string(*p.predicted)) : json(nullptr);
      pj["caption"] = p.caption ? json(*p.caption) : json(nullptr);
      pj["mapped_via"] = p.mapped_via ? json(*p.mapped_via) : json(nullptr);
      pj["similarity"] = opt(p.similarity);
      pj["error"] = p.error ? json(*p.error) : json(nullptr);
      item["prediction"] = std::move(pj);
    } else {
      item["prediction"] = nullptr;
    }
    if (auto it = latest.find(id); it != latest.end()) {
      item["correction"] = json::parse(it->second->to_json_line());
    } else {
      item["correction"] = nullptr;
    }
    items.push_back(std::move(item));
  }
  json out;
  out["participant_id"] = participant_id;
  out["from"] = from;
  out["limit"] = limit;
  out["total"] = recs.size();
  out["next"] = from + limit < recs.size() ? json(from + limit) : json(nullptr);
  out["items"] = std::move(items);
  return {200, out.dump()};
}

HttpResponse ReviewService::image(const std::string& id) const {
  const auto it = by_image_.find(id);
  if (it == by_image_.end()) return error_response(404, "unknown image '" + id + "'");
  const auto& r = dataset_.records[it->second];
  if (!r.image_ref || r.image_ref->find("://") != std::string::npos) {
    return error_response(404, "no local image for '" + id + "'");
  }
  const auto path = dataset_.image_path(r);
  if (!path || !fs::is_regular_file(*path)) return error_response(404, "image file missing for '" + id + "'");
  return {200, read_file(*path), content_type_for(*path)};
}

HttpResponse ReviewService::post_correction(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!j.is_object()) return error_response(400, "body must be a JSON object");
  if (!j.contains("image_id") || !j["image_id"].is_string()) return error_response(400, "missing string field 'image_id'");
  if (!j.contains("corrected") || !j["corrected"].is_string()) {
    return error_response(400, "missing string field 'corrected'");
  }
  if (j.contains("reviewer_id") && !j["reviewer_id"].is_string()) {
    return error_response(400, "'reviewer_id' must be a string");
  }
  Correction c;
  c.image_id = j["image_id"].get<std::string>();
  c.reviewer_id = j.value("reviewer_id", std::string("default"));
  if (c.reviewer_id.empty()) return error_response(400, "'reviewer_id' must not be empty");
  const std::string corrected = j["corrected"].get<std::string>();
  if (to_lower(corrected) != "confirm") {
    c.corrected = parse_intensity(corrected);
    if (!c.corrected || *c.corrected == Intensity::Unknown) {
      return error_response(400, "'corrected' must be SB, LIPA, MVPA, Sleep or confirm");
    }
  }
  if (!by_image_.count(c.image_id)) return error_response(404, "unknown image '" + c.image_id + "'");
  const auto pred = predicted_.find(c.image_id);
  if (pred == predicted_.end()) return error_response(400, "image '" + c.image_id + "' has no prediction to review");
  c.prior_prediction = pred->second;

  std::lock_guard lock(mu_);
  c.at = clock_();
  log_.append(c);
  entries_.push_back(c);
  json out;
  out["correction"] = json::parse(c.to_json_line());
  out["progress"] = json::parse(correction_metrics(entries_, predicted_).to_json());
  return {201, out.dump()};
}

ReviewProgress ReviewService::current_progress() const {
  std::lock_guard lock(mu_);
  return correction_metrics(entries_, predicted_);
}

std::vector<Correction> ReviewService::log_snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

HttpResponse ReviewService::progress() const { return {200, current_progress().to_json()}; }

HttpResponse ReviewService::metrics() const {
  Dataset overridden = dataset_;
  {
    std::lock_guard lock(mu_);
    std::map<std::string, Intensity> truth;
    for (const auto& c : entries_) truth[c.image_id] = c.corrected ? *c.corrected : c.prior_prediction;
    for (const auto& [id, cls] : truth) {
      if (auto it = by_image_.find(id); it != by_image_.end()) overridden.records[it->second].intensity = cls;
    }
  }
  return {200, evaluate(overridden, predictions_).to_json()};
}

HttpResponse ReviewService::meta() const {
  json j;
  j["classes"] = json::array({{{"name", "SB"}, {"hotkey", "s"}},
                              {{"name", "LIPA"}, {"hotkey", "l"}},
                              {{"name", "MVPA"}, {"hotkey", "m"}}});
  j["confirm_hotkey"] = "c";
  j["order"] = "chronological";
  j["study_id"] = dataset_.study_id;
  return {200, j.dump()};
}

namespace {

void send(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

std::optional<std::size_t> query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  if (v.empty() || v.size() > 12 || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(std::stoull(v));
}

}  // namespace

void ReviewService::register_routes(httplib::Server& server) {
  server.Get("/api/participants", [this](const httplib::Request&, httplib::Response& res) { send(res, participants()); });
  server.Get(R"(/api/participants/([^/]+)/timeline)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto from = query_size(req, "from", 0);
    const auto limit = query_size(req, "limit", kDefaultPageSize);
    if (!from || !limit) return send(res, error_response(400, "'from' and 'limit' must be non-negative integers"));
    send(res, timeline(req.matches[1].str(), *from, *limit));
  });
  server.Get(R"(/api/images/([^/]+))",
             [this](const httplib::Request& req, httplib::Response& res) { send(res, image(req.matches[1].str())); });
  server.Post("/api/corrections",
              [this](const httplib::Request& req, httplib::Response& res) { send(res, post_correction(req.body)); });
  server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) { send(res, progress()); });
  server.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) { send(res, metrics()); });
  server.Get("/api/meta", [this](const httplib::Request&, httplib::Response& res) { send(res, meta()); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error_response(500, what));
  });
}

void serve(ReviewService& service, const std::string& host, int port) {
  httplib::Server server;
  service.register_routes(server);
  // No SO_REUSEPORT: a second service on a busy port must fail, not share it.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  if (!server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("review service listening on http://{}:{}", host, port);
  if (!server.listen_after_bind()) throw Error("review service stopped unexpectedly");
}

}  // namespace camannot
