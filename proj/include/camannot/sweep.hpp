#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camannot/dataset.hpp"
#include "camannot/gateway.hpp"
#include "camannot/stats.hpp"
#include "camannot/taxonomy.hpp"
#include "camannot/zeroshot.hpp"

namespace camannot {

using Json = nlohmann::ordered_json;

struct CategoricalDim {
  std::string name;
  std::vector<Json> values;
};

/// Log-uniform over [lo, hi]; 10^-i with i ~ U(1, 5) is [1e-5, 1e-1].
struct LogUniformDim {
  std::string name;
  double lo = 1e-5;
  double hi = 1e-1;
};

struct SearchSpace {
  std::vector<CategoricalDim> categorical;
  std::vector<LogUniformDim> log_uniform;

  /// Throws on duplicate names, empty lists or bad ranges.
  void validate() const;
  bool empty() const { return categorical.empty() && log_uniform.empty(); }
};

/// Sweep config file:
///   {"pipeline": "generative", "n": 30, "seed": 7,
///    "space": {"mapping_approach": ["direct", "via_clean"],
///              "new_tokens": [5, 10, 20, 40],
///              "learning_rate": {"log_uniform": [1e-5, 0.1]}}}
struct SweepConfig {
  Pipeline pipeline = Pipeline::DualEncoder;
  std::size_t n = 30;
  std::uint64_t seed = 0;
  SearchSpace space;

  static SweepConfig from_json(std::string_view text);
};

struct TrialConfig {
  std::string trial_id;  // "trial-000"
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Json values;  // dimension name -> sampled value, in space order

  std::string to_json() const;
  bool operator==(const TrialConfig&) const = default;
};

/// Each value is drawn from a counter-based generator keyed by (seed,
/// dimension name) at counter = trial index, so any trial can be
/// regenerated on its own. Throws on an empty space or n = 0.
std::vector<TrialConfig> sample_trials(const SearchSpace& space, std::size_t n, std::uint64_t seed);

enum class TrialStatus { Done, Failed };

struct TrialResult {
  std::string trial_id;
  std::size_t index = 0;
  Json values;
  TrialStatus status = TrialStatus::Failed;
  std::optional<double> median_val_kappa;
  std::string report_path;
  std::string error;
  bool skipped = false;  // completed by an earlier run
};

/// Everything a trial needs besides its config.
struct TrialContext {
  const Dataset* dataset = nullptr;
  std::vector<std::string> participant_ids;  // validation split
  Gateway* gateway = nullptr;
  const CleanLabelSet* clean = nullptr;
  const std::vector<PromptSpec>* prompts = nullptr;
  Pipeline pipeline = Pipeline::DualEncoder;
  std::size_t width = 1;
};

/// Runs one trial into <results_dir>/trials/<trial_id>/ and writes the DONE
/// marker last. A trial whose marker records success under an identical
/// config is not rerun. Failures are returned, not thrown.
TrialResult run_trial(const TrialConfig& cfg, const TrialContext& ctx, const std::string& results_dir);

std::vector<TrialResult> run_sweep(const SweepConfig& sweep, const TrialContext& ctx, const std::string& results_dir);

/// Reads every trial with a DONE marker.
std::vector<TrialResult> load_results(const std::string& results_dir);

/// Highest median kappa among done trials; the lowest index wins ties.
/// Throws when no trial is done.
const TrialResult& select_best(const std::vector<TrialResult>& results);

/// A row of an externally produced results CSV, kept verbatim.
struct ExternalRow {
  std::vector<std::pair<std::string, std::string>> fields;
  std::optional<double> median_kappa;
};

/// CSV with at least trial_id and median_kappa columns.
std::vector<ExternalRow> read_external_results(const std::string& path);

struct SweepSummary {
  std::optional<QuartileSummary> overall;
  std::map<std::string, QuartileSummary> by_approach;  // keyed by mapping_approach value
  std::optional<QuartileSummary> external;
  std::optional<std::string> best_trial;

  std::string to_json() const;
};

SweepSummary sweep_summary(const std::vector<TrialResult>& results, const std::vector<ExternalRow>& external = {});

/// trial_id,source,status,median_kappa,<dimensions...>; external rows keep
/// their own values under their own column names.
std::string sweep_listing_csv(const std::vector<TrialResult>& results, const std::vector<ExternalRow>& external = {});

}  // namespace camannot
