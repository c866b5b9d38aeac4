#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camannot/dataset.hpp"
#include "camannot/embedding.hpp"
#include "camannot/gateway.hpp"
#include "camannot/intensity.hpp"
#include "camannot/taxonomy.hpp"

namespace camannot {

enum class MappingApproach { Direct, ViaClean };
enum class Pipeline { DualEncoder, Generative };

std::string_view to_string(MappingApproach a);  // "direct" / "via_clean"
std::optional<MappingApproach> parse_approach(std::string_view s);
std::string_view to_string(Pipeline p);  // "dual_encoder" / "generative"
std::optional<Pipeline> parse_pipeline(std::string_view s);

/// Retrieval targets: phrases with known intensities and their embeddings.
struct TargetSet {
  std::vector<std::string> phrases;
  std::vector<Intensity> intensities;
  std::vector<EmbeddingVector> embeddings;
  MappingApproach approach = MappingApproach::Direct;
  bool reworded = false;

  Intensity intensity_of(std::string_view phrase) const;
};

/// The three intensity phrases, terse ("sedentary", "light", "MVPA") or
/// reworded ("sedentary behavior", ...).
std::vector<std::pair<std::string, Intensity>> direct_phrases(bool reworded);

/// Validates uniqueness and alignment.
TargetSet make_target_set(std::vector<std::string> phrases, std::vector<Intensity> intensities,
                          std::vector<EmbeddingVector> embeddings, MappingApproach approach, bool reworded);

/// Direct targets use direct_phrases(reworded); ViaClean uses every clean
/// label name. All phrases are embedded once through the gateway.
TargetSet build_targets(MappingApproach approach, bool reworded, const CleanLabelSet* clean, Gateway& gateway);

struct Retrieval {
  std::size_t index = 0;
  double similarity = 0;
};

/// Argmax of cosine similarity; the lowest index wins ties.
Retrieval classify_by_retrieval(const EmbeddingVector& query, const TargetSet& targets);

struct PromptSpec {
  std::string id;
  std::string text;
  std::string source = "curated";  // or "llm-suggested"
};

/// JSON list of {id, text, source}.
std::vector<PromptSpec> parse_prompts(std::string_view json_text);
std::vector<PromptSpec> load_prompts(const std::string& path);
const PromptSpec& find_prompt(const std::vector<PromptSpec>& prompts, std::string_view id);

struct PredictionRecord {
  std::string image_id;
  std::string run_id;
  std::optional<Intensity> predicted;
  std::optional<std::string> caption;
  std::optional<std::string> mapped_via;
  std::optional<double> similarity;
  std::optional<std::string> prompt_id;
  std::optional<int> max_new_tokens;
  MappingApproach approach = MappingApproach::Direct;
  bool reworded = false;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  std::string to_json_line() const;
  static PredictionRecord from_json_line(std::string_view line);
  bool operator==(const PredictionRecord&) const = default;
};

/// Trims, collapses whitespace and strips trailing punctuation.
std::string normalize_caption(std::string_view caption);

/// Predictions below the abstain threshold become Unknown (off when nullopt).
PredictionRecord classify_dual_encoder(const std::string& image_path, const TargetSet& targets, Gateway& gateway,
                                       std::optional<double> abstain_below = std::nullopt);
PredictionRecord map_caption(std::string_view caption, const TargetSet& targets, Gateway& gateway,
                             std::optional<double> abstain_below = std::nullopt);

struct BatchConfig {
  Pipeline pipeline = Pipeline::DualEncoder;
  std::string run_id;
  std::optional<PromptSpec> prompt;    // generative only
  std::optional<int> max_new_tokens;   // generative only
  std::size_t width = 1;               // concurrent items
  std::optional<double> abstain_below;
};

struct BatchSummary {
  std::size_t n_items = 0;
  std::size_t n_predicted = 0;
  std::size_t n_failed = 0;
  std::size_t n_skipped = 0;  // already predicted under this run_id

  double failure_rate() const { return n_items ? static_cast<double>(n_failed) / static_cast<double>(n_items) : 0; }
  bool too_many_failures() const { return failure_rate() > 0.10; }
};

/// Predicts every non-Unknown record of the given participants (all when
/// empty) and writes a JSONL predictions file ordered by (participant,
/// timestamp). Completed items are appended to "<out>.partial" as they
/// finish, so an interrupted run resumes where it stopped.
BatchSummary run_batch(const Dataset& dataset, const std::vector<std::string>& participant_ids,
                       const TargetSet& targets, Gateway& gateway, const BatchConfig& cfg, const std::string& out_path);

std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace camannot
