#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camannot/intensity.hpp"
#include "camannot/taxonomy.hpp"
#include "camannot/timeutil.hpp"

namespace camannot {

enum class Sex { Female, Male };

struct Participant {
  std::string id;
  std::optional<int> age;  // years, < 500
  std::optional<Sex> sex;
  bool operator==(const Participant&) const = default;
};

struct ImageRecord {
  std::string participant_id;
  UnixSeconds timestamp = 0;
  std::optional<std::string> image_ref;
  std::string raw_label;
  Intensity intensity = Intensity::Unknown;
  bool operator==(const ImageRecord&) const = default;
};

/// Stable identifier "<participant>@<YYYYMMDDTHHMMSSZ>"; unique because
/// (participant, timestamp) pairs are deduplicated at ingest.
std::string image_id(const ImageRecord& r);
std::string image_id(std::string_view participant_id, UnixSeconds timestamp);

/// An ingested study. Records are grouped by participant (ids ascending)
/// and sorted by timestamp within each participant.
struct Dataset {
  std::string study_id;
  std::string image_root;  // base directory for relative image_refs
  std::vector<Participant> participants;
  std::vector<ImageRecord> records;
  std::map<std::string, std::size_t> unmapped_labels;  // dictionary gaps with counts

  bool operator==(const Dataset&) const = default;

  std::span<const ImageRecord> records_of(std::string_view participant_id) const;
  const Participant* participant(std::string_view id) const;
  std::vector<std::string> participant_ids() const;
  /// Resolved filesystem path of a record's image, if it has one.
  std::optional<std::string> image_path(const ImageRecord& r) const;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  Dataset dataset;
  std::vector<RowError> errors;
  std::vector<std::string> warnings;
};

/// Reads an annotation CSV (participant_id, timestamp, raw_label[, image_ref]).
/// Malformed rows become RowErrors; a missing required column throws.
IngestResult ingest_csv(std::istream& annotations, const std::string& study_id, const LabelDictionary& dict,
                        std::istream* participants_csv = nullptr);
IngestResult ingest_csv_file(const std::string& path, const std::string& study_id, const LabelDictionary& dict,
                             const std::optional<std::string>& participants_path = std::nullopt);

/// Inverse of ingest for the annotation columns.
std::string export_annotations_csv(const Dataset& d);

// ---------------------------------------------------------------------------
// Participant splits

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitAssignment {
  std::string participant_id;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  bool operator==(const SplitAssignment&) const = default;
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  bool operator==(const SplitSizes&) const = default;
};

/// n_val = floor(val * N), n_test = floor(test * N), train takes the rest.
SplitSizes split_sizes(std::size_t n, const SplitFractions& f = {});

/// Seeded shuffle of the sorted ids. Output is sorted by participant id.
std::vector<SplitAssignment> split_participants(std::vector<std::string> participant_ids, std::uint64_t seed,
                                                const SplitFractions& f = {});
std::vector<SplitAssignment> split_participants(const Dataset& d, std::uint64_t seed, const SplitFractions& f = {});

std::string splits_to_json(const std::vector<SplitAssignment>& s, const SplitFractions& f);
std::vector<SplitAssignment> splits_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Storage: manifest.json, participants.csv, records/<participant>.jsonl

void persist(const Dataset& d, const std::string& dir);
Dataset load(const std::string& dir);

/// Participants in `split` according to <dir>/splits.json.
std::vector<std::string> load_split(const std::string& dir, Split split);

}  // namespace camannot
