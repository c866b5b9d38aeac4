#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "camannot/dataset.hpp"
#include "camannot/intensity.hpp"
#include "camannot/timeutil.hpp"
#include "camannot/zeroshot.hpp"

namespace httplib {
class Server;
}

namespace camannot {

/// A reviewer's verdict on one prediction. corrected == nullopt means "confirm".
struct Correction {
  std::string image_id;
  std::string reviewer_id;
  std::optional<Intensity> corrected;
  UnixSeconds at = 0;
  Intensity prior_prediction = Intensity::Unknown;

  bool is_confirm() const { return !corrected.has_value(); }
  /// A correction counts only when it changes the prediction.
  bool changes_prediction() const { return corrected && *corrected != prior_prediction; }

  std::string to_json_line() const;
  static Correction from_json_line(std::string_view line);
  bool operator==(const Correction&) const = default;
};

using ReviewKey = std::pair<std::string, std::string>;  // (image_id, reviewer_id)

/// Latest entry per (image, reviewer); later log entries win.
std::map<ReviewKey, Correction> latest_corrections(const std::vector<Correction>& log);

struct ClassProgress {
  std::size_t n_reviewed = 0;
  std::size_t n_corrected = 0;
  std::optional<double> fraction_corrected;
};

struct ReviewProgress {
  std::size_t n_reviewed = 0;
  std::size_t n_corrected = 0;
  std::optional<double> fraction_corrected;  // undefined with nothing reviewed
  std::map<Intensity, ClassProgress> by_predicted;
  std::map<std::pair<Intensity, Intensity>, std::size_t> matrix;  // (predicted, corrected) for changes

  std::string to_json() const;
};

/// Counts the latest review of each (image, reviewer). The prediction in
/// `predictions` takes precedence over the prior recorded in the log.
ReviewProgress correction_metrics(const std::vector<Correction>& log,
                                  const std::map<std::string, Intensity>& predictions = {});

/// Append-only JSONL file; appends are serialized.
class CorrectionLog {
 public:
  explicit CorrectionLog(std::string path);
  void append(const Correction& c);
  std::vector<Correction> replay() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Review API over a dataset and one predictions file. The correction log is
/// the only mutable state.
class ReviewService {
 public:
  using Clock = std::function<UnixSeconds()>;

  ReviewService(Dataset dataset, std::vector<PredictionRecord> predictions, const std::string& log_path,
                Clock clock = now_utc);

  HttpResponse participants() const;
  HttpResponse timeline(const std::string& participant_id, std::size_t from, std::size_t limit) const;
  HttpResponse image(const std::string& image_id) const;
  HttpResponse post_correction(const std::string& body);
  HttpResponse progress() const;
  HttpResponse metrics() const;
  HttpResponse meta() const;

  ReviewProgress current_progress() const;
  std::vector<Correction> log_snapshot() const;

  /// GET /api/participants, /api/participants/{id}/timeline?from=&limit=,
  /// /api/images/{image_id}, /api/progress, /api/metrics, /api/meta and
  /// POST /api/corrections.
  void register_routes(httplib::Server& server);

  static constexpr std::size_t kDefaultPageSize = 50;
  static constexpr std::size_t kMaxPageSize = 1000;

 private:
  Dataset dataset_;
  std::vector<PredictionRecord> predictions_;
  std::unordered_map<std::string, std::size_t> by_image_;       // image id -> record index
  std::unordered_map<std::string, std::size_t> prediction_of_;  // image id -> prediction index
  std::map<std::string, Intensity> predicted_;
  CorrectionLog log_;
  Clock clock_;
  mutable std::mutex mu_;
  std::vector<Correction> entries_;
};

/// Blocks serving the API until the server stops. Throws when the address
/// cannot be bound.
void serve(ReviewService& service, const std::string& host, int port);

}  // namespace camannot
