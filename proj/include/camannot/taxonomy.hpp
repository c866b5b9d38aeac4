#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "camannot/embedding.hpp"
#include "camannot/intensity.hpp"

namespace camannot {

// ---------------------------------------------------------------------------
// Compendium label parsing

/// A hierarchical compendium label such as "transportation;walking;12150 running".
struct ParsedLabel {
  std::vector<std::string> segments;  // hierarchy prefixes
  std::optional<std::string> code;    // 4-5 digits, kept verbatim ("0002")
  std::string activity;

  /// Rebuilds the normalized raw string.
  std::string normalized() const;
  std::optional<int> code_value() const;
  bool operator==(const ParsedLabel&) const = default;
};

ParsedLabel parse_label(std::string_view raw);

/// True for the uncodeable/undefined/unknown family and empty labels.
bool is_trivial(std::string_view raw);

/// Tally key for a trivial label: its normalized text, "<empty>" when blank.
std::string trivial_reason(std::string_view raw);

/// Intensity from a MET value. Only used when authoring new dictionary rows;
/// throws camannot::Error when met <= 0.
Intensity met_to_intensity(double met, bool sedentary_posture, bool waking);

// ---------------------------------------------------------------------------
// Label dictionary

struct DictionaryEntry {
  std::string raw_label;  // normalized
  Intensity intensity = Intensity::Unknown;
  std::string source;  // "2011", "2024" or "override"
  std::string reason;
  bool operator==(const DictionaryEntry&) const = default;
};

class LabelDictionary {
 public:
  /// CSV with header raw_label,intensity,source,reason.
  static LabelDictionary read_csv(std::istream& in);
  static LabelDictionary load(const std::string& path);

  /// Rows with source "override" go to the override table.
  void add(DictionaryEntry e);

  /// Override first, then the base entries.
  std::optional<Intensity> find(std::string_view raw) const;
  const DictionaryEntry* find_entry(std::string_view raw) const;

  std::size_t size() const;
  void write_csv(std::ostream& out) const;

 private:
  std::map<std::string, DictionaryEntry> entries_;
  std::map<std::string, DictionaryEntry> overrides_;
};

/// Non-trivial labels that the dictionary could not map, with counts.
class GapLog {
 public:
  void record(const std::string& normalized_label);
  std::map<std::string, std::size_t> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> gaps_;
};

Intensity lookup_intensity(std::string_view raw, const LabelDictionary& dict, GapLog* gaps = nullptr);

// ---------------------------------------------------------------------------
// Clean-label deduplication

/// One agglomeration step. Nodes 0..n-1 are leaves, node n+k is merge k.
struct MergeStep {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0;  // average cosine distance between the two clusters
  std::size_t size = 0;
};

struct Dendrogram {
  std::vector<std::string> labels;
  std::vector<MergeStep> merges;
};

using TextEmbedder = std::function<std::vector<EmbeddingVector>(const std::vector<std::string>&)>;

/// Average-linkage agglomerative clustering on cosine distance. Equal
/// distances are resolved by the lexicographically smallest
/// (min-member, max-member) pair of cluster names.
Dendrogram build_dendrogram(const std::vector<std::string>& labels, const TextEmbedder& embed);

/// Same tree from precomputed vectors (aligned with labels).
Dendrogram build_dendrogram(const std::vector<std::string>& labels, const std::vector<EmbeddingVector>& vectors);

/// Clusters joined by merges with height <= threshold. Members are sorted and
/// clusters are ordered by their first member.
std::vector<std::vector<std::string>> cut_dendrogram(const Dendrogram& d, double threshold);

struct MergeProposal {
  Dendrogram dendrogram;
  double threshold = 0;
  std::vector<std::vector<std::string>> clusters;
};

MergeProposal propose_merges(Dendrogram d, double threshold);

/// Longest common run of activity tokens, else the shortest member's activity.
std::string suggest_clean_name(const std::vector<std::string>& members);

/// Hand-editable review text:
///   CLUSTER 1: shopping miscellaneous
///       [LIPA] 5060 shopping miscellaneous
///       [LIPA] walking;5060 shopping miscellaneous
std::string write_review_file(const MergeProposal& p, const LabelDictionary& dict);

struct ReviewCluster {
  std::string clean_name;
  std::vector<std::string> members;
};

std::vector<ReviewCluster> parse_review_file(std::string_view text);

struct CleanLabel {
  std::string name;
  std::set<std::string> members;
  Intensity intensity = Intensity::Unknown;
  bool operator==(const CleanLabel&) const = default;
};

struct CleanLabelSet {
  std::vector<CleanLabel> labels;
  bool operator==(const CleanLabelSet&) const = default;

  std::string to_json() const;
  static CleanLabelSet from_json(std::string_view text);
};

/// Builds the clean-label set from a reviewed file. Fails on mixed
/// intensities, unmapped members, duplicate membership or duplicate names.
/// When expected_labels is given every one of them must appear exactly once.
CleanLabelSet apply_merges(std::string_view review_text, const LabelDictionary& dict,
                           const std::vector<std::string>* expected_labels = nullptr);

std::string dendrogram_to_json(const Dendrogram& d);

}  // namespace camannot
