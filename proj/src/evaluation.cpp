#include "camannot/evaluation.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "camannot/error.hpp"
#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto c : row) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const { return counts[i][0] + counts[i][1] + counts[i][2]; }

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const { return counts[0][j] + counts[1][j] + counts[2][j]; }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) counts[i][j] += o.counts[i][j];
  return *this;
}

ConfusionMatrix confusion_matrix(const std::vector<Intensity>& truth, const std::vector<Intensity>& pred) {
  if (truth.size() != pred.size()) {
    throw Error("confusion_matrix: " + std::to_string(truth.size()) + " truth labels but " +
                std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix m;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!is_evaluated(truth[k]) || !is_evaluated(pred[k])) {
      throw Error("confusion_matrix: class outside SB/LIPA/MVPA at position " + std::to_string(k));
    }
    ++m.counts[class_index(truth[k])][class_index(pred[k])];
  }
  return m;
}

std::optional<double> cohens_kappa(const ConfusionMatrix& m) {
  using i128 = __int128;
  const i128 n = m.total();
  if (n == 0) return std::nullopt;
  i128 s = 0;
  for (std::size_t i = 0; i < 3; ++i) s += static_cast<i128>(m.row_sum(i)) * m.col_sum(i);
  const i128 den = n * n - s;
  if (den == 0) return std::nullopt;
  const i128 num = n * static_cast<i128>(m.trace()) - s;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics class_metrics(const ConfusionMatrix& m) {
  Metrics out;
  double recall_sum = 0;
  int recall_n = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::uint64_t tp = m.counts[c][c];
    const std::uint64_t fp = m.col_sum(c) - tp;
    const std::uint64_t fn = m.row_sum(c) - tp;
    auto& cm = out.per_class[c];
    cm.precision = ratio(tp, tp + fp);
    cm.recall = ratio(tp, tp + fn);
    cm.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    if (cm.recall) {
      recall_sum += *cm.recall;
      ++recall_n;
    }
  }
  out.accuracy = ratio(m.trace(), m.total());
  if (recall_n > 0) out.macro_recall = recall_sum / recall_n;
  return out;
}

std::vector<PerParticipantMetrics> per_participant(const std::vector<JoinedRecord>& records) {
  std::map<std::string, ConfusionMatrix> groups;
  for (const auto& r : records) {
    if (!is_evaluated(r.truth) || !is_evaluated(r.predicted)) continue;
    ++groups[r.participant_id].counts[class_index(r.truth)][class_index(r.predicted)];
  }
  std::vector<PerParticipantMetrics> out;
  out.reserve(groups.size());
  for (const auto& [id, m] : groups) {
    out.push_back({id, m, cohens_kappa(m), class_metrics(m), static_cast<std::size_t>(m.total())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

double EvaluationReport::unmatched_fraction() const {
  return n_predictions ? static_cast<double>(unmatched.size()) / static_cast<double>(n_predictions) : 0;
}

std::map<std::string, std::optional<QuartileSummary>> EvaluationReport::summaries() const {
  std::map<std::string, std::vector<std::optional<double>>> values;
  for (const auto& p : participants) {
    values["kappa"].push_back(p.kappa);
    values["accuracy"].push_back(p.metrics.accuracy);
    values["macro_recall"].push_back(p.metrics.macro_recall);
    for (auto c : kEvaluatedClasses) {
      const auto& cm = p.metrics.per_class[class_index(c)];
      const std::string name(to_string(c));
      values["f1_" + name].push_back(cm.f1);
      values["precision_" + name].push_back(cm.precision);
      values["recall_" + name].push_back(cm.recall);
    }
  }
  std::map<std::string, std::optional<QuartileSummary>> out;
  for (const auto& [k, v] : values) out[k] = quartile_summary_defined(v);
  return out;
}

std::optional<double> EvaluationReport::median_kappa() const {
  std::vector<std::optional<double>> k;
  for (const auto& p : participants) k.push_back(p.kappa);
  const auto s = quartile_summary_defined(k);
  if (!s) return std::nullopt;
  return s->median;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json matrix_json(const ConfusionMatrix& m) {
  json rows = json::array();
  for (const auto& row : m.counts) rows.push_back(json::array({row[0], row[1], row[2]}));
  return rows;
}

json metrics_json(const Metrics& m) {
  json j;
  j["accuracy"] = opt(m.accuracy);
  j["macro_recall"] = opt(m.macro_recall);
  json classes;
  for (auto c : kEvaluatedClasses) {
    const auto& cm = m.per_class[class_index(c)];
    classes[std::string(to_string(c))] = {{"precision", opt(cm.precision)}, {"recall", opt(cm.recall)},
                                          {"f1", opt(cm.f1)}};
  }
  j["classes"] = std::move(classes);
  return j;
}

std::string num(const std::optional<double>& v) { return v ? json(*v).dump() : std::string(); }

}  // namespace

std::string EvaluationReport::to_json() const {
  json j;
  j["schema"] = "camannot-eval/1";
  j["counts"] = {{"predictions", n_predictions}, {"evaluated", n_evaluated}, {"failed", n_failed},
                 {"excluded", n_excluded},       {"unmatched", unmatched.size()}};
  j["unmatched"] = unmatched;
  json pooled_j = metrics_json(pooled_metrics);
  pooled_j["kappa"] = opt(pooled_kappa);
  pooled_j["n_records"] = pooled.total();
  pooled_j["confusion_matrix"] = matrix_json(pooled);
  j["pooled"] = std::move(pooled_j);

  const std::size_t n_participants = participants.size();
  json sums;
  for (const auto& [k, s] : summaries()) {
    if (!s) {
      sums[k] = {{"n", 0}, {"n_undefined", n_participants}};
      continue;
    }
    sums[k] = {{"min", s->min}, {"q1", s->q1},  {"median", s->median},
               {"q3", s->q3},   {"max", s->max}, {"n", s->n},
               {"n_undefined", n_participants - s->n}};
  }
  j["summaries"] = std::move(sums);

  json parts = json::array();
  for (const auto& p : participants) {
    json pj;
    pj["participant_id"] = p.participant_id;
    pj["n_records"] = p.n_records;
    pj["kappa"] = opt(p.kappa);
    const json m = metrics_json(p.metrics);
    for (const auto& [k, v] : m.items()) pj[k] = v;
    pj["confusion_matrix"] = matrix_json(p.matrix);
    parts.push_back(std::move(pj));
  }
  j["participants"] = std::move(parts);
  return j.dump(2) + "\n";
}

std::string EvaluationReport::f1_csv() const {
  std::string out = csv_line({"participant_id", "class", "f1"});
  for (const auto& p : participants)
    for (auto c : kEvaluatedClasses)
      out += csv_line({p.participant_id, std::string(to_string(c)), num(p.metrics.per_class[class_index(c)].f1)});
  return out;
}

std::string EvaluationReport::kappa_csv() const {
  std::string out = csv_line({"participant_id", "kappa"});
  for (const auto& p : participants) out += csv_line({p.participant_id, num(p.kappa)});
  return out;
}

EvaluationReport evaluate(const Dataset& truth, const std::vector<PredictionRecord>& predictions) {
  std::unordered_map<std::string, const ImageRecord*> index;
  index.reserve(truth.records.size());
  for (const auto& r : truth.records) index.emplace(image_id(r), &r);

  EvaluationReport rep;
  rep.n_predictions = predictions.size();
  std::set<std::string> seen;
  std::vector<JoinedRecord> joined;
  for (const auto& p : predictions) {
    if (!seen.insert(p.image_id).second) throw Error("duplicate prediction for image " + p.image_id);
    const auto it = index.find(p.image_id);
    if (it == index.end()) {
      rep.unmatched.push_back(p.image_id);
      continue;
    }
    if (!p.ok() || !p.predicted) {
      ++rep.n_failed;
      continue;
    }
    const ImageRecord& r = *it->second;
    if (!is_evaluated(r.intensity) || !is_evaluated(*p.predicted)) {
      ++rep.n_excluded;
      continue;
    }
    joined.push_back({r.participant_id, r.intensity, *p.predicted});
  }
  std::sort(rep.unmatched.begin(), rep.unmatched.end());
  rep.n_evaluated = joined.size();
  rep.participants = per_participant(joined);
  for (const auto& p : rep.participants) rep.pooled += p.matrix;
  rep.pooled_kappa = cohens_kappa(rep.pooled);
  rep.pooled_metrics = class_metrics(rep.pooled);
  return rep;
}

void write_report(const EvaluationReport& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_file_atomic((dir / "per_participant_f1.csv").string(), r.f1_csv());
  write_file_atomic((dir / "kappa.csv").string(), r.kappa_csv());
  write_file_atomic((dir / "report.json").string(), r.to_json());
}

std::optional<double> median_kappa_from_report(const std::string& report_json) {
  try {
    const auto j = json::parse(report_json);
    if (j.value("schema", std::string()) != "camannot-eval/1") throw Error("not an evaluation report");
    const auto& k = j.at("summaries").at("kappa");
    if (!k.contains("median")) return std::nullopt;
    return k.at("median").get<double>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace camannot
