#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "camannot/dataset.hpp"
#include "camannot/intensity.hpp"
#include "camannot/stats.hpp"
#include "camannot/zeroshot.hpp"

namespace camannot {

/// Rows are true classes, columns predicted, both in SB, LIPA, MVPA order.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 3>, 3> counts{};

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t i) const;
  std::uint64_t col_sum(std::size_t j) const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws on a length mismatch or a class outside SB/LIPA/MVPA.
ConfusionMatrix confusion_matrix(const std::vector<Intensity>& truth, const std::vector<Intensity>& pred);

/// (p_o - p_e) / (1 - p_e), evaluated in exact integer arithmetic as
/// (N tr - S) / (N^2 - S) with S = sum_i row_i col_i. Undefined when N = 0
/// or p_e = 1.
std::optional<double> cohens_kappa(const ConfusionMatrix& m);

/// Zero denominators give undefined precision or recall. F1 is
/// 2 TP / (2 TP + FP + FN), which equals 2PR / (P + R) whenever both are
/// defined, is 0 when the class has instances but no true positives, and is
/// undefined only when the class is absent from both truth and predictions.
struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct Metrics {
  std::array<ClassMetrics, 3> per_class;
  std::optional<double> accuracy;
  std::optional<double> macro_recall;  // over classes with at least one true instance
};

Metrics class_metrics(const ConfusionMatrix& m);

struct JoinedRecord {
  std::string participant_id;
  Intensity truth = Intensity::Unknown;
  Intensity predicted = Intensity::Unknown;
};

struct PerParticipantMetrics {
  std::string participant_id;
  ConfusionMatrix matrix;
  std::optional<double> kappa;
  Metrics metrics;
  std::size_t n_records = 0;
};

/// Groups by participant (ascending id). Records outside the three evaluated
/// classes are skipped.
std::vector<PerParticipantMetrics> per_participant(const std::vector<JoinedRecord>& records);

struct EvaluationReport {
  ConfusionMatrix pooled;
  std::optional<double> pooled_kappa;
  Metrics pooled_metrics;
  std::vector<PerParticipantMetrics> participants;
  std::vector<std::string> unmatched;  // prediction image ids without a truth record
  std::size_t n_predictions = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_failed = 0;    // prediction records carrying an error
  std::size_t n_excluded = 0;  // truth or prediction outside SB/LIPA/MVPA

  double unmatched_fraction() const;
  /// Quartile summaries of per-participant values; undefined entries are
  /// dropped and counted.
  std::map<std::string, std::optional<QuartileSummary>> summaries() const;
  std::optional<double> median_kappa() const;

  std::string to_json() const;
  std::string f1_csv() const;     // participant_id,class,f1
  std::string kappa_csv() const;  // participant_id,kappa
};

/// Joins predictions to truth by image id. Throws on duplicate predictions.
EvaluationReport evaluate(const Dataset& truth, const std::vector<PredictionRecord>& predictions);

/// Writes report.json, per_participant_f1.csv and kappa.csv.
void write_report(const EvaluationReport& r, const std::string& out_dir);

/// Median kappa read back from a stored report.json.
std::optional<double> median_kappa_from_report(const std::string& report_json);

}  // namespace camannot
