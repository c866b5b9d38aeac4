#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "camannot/dataset.hpp"
#include "camannot/image_io.hpp"
#include "camannot/stats.hpp"

namespace camannot {

/// Log-transformed brightness and contrast of an image:
/// mean_star = ln(1 + sum_c mu_c), variance_star = ln(1 + sum_c sigma^2_c),
/// with per-channel population statistics over values in [0, 255].
struct ImageStats {
  double mean_star = 0;
  double variance_star = 0;
};

/// Throws camannot::Error for an empty image.
ImageStats image_stats(const RgbImage& img);

/// Median of successive differences; nullopt with fewer than 2 timestamps.
std::optional<double> median_dt(const std::vector<UnixSeconds>& sorted_timestamps);
std::optional<QuartileSummary> dt_quartiles(const std::vector<UnixSeconds>& sorted_timestamps);

/// Maximal runs of identical non-trivial labels; trivial labels break runs.
std::size_t count_labelled_events(const std::vector<std::string>& labels);

struct TimeCovered {
  double hours = 0;
  long long rounded_hours = 0;
};

/// n_labelled * median_dt / 3600. Throws when median_dt_s <= 0.
TimeCovered time_covered(std::size_t n_labelled, double median_dt_s);

/// An image known to exist, labelled or not (from an image manifest CSV).
struct ManifestImage {
  std::string participant_id;
  UnixSeconds timestamp = 0;
  std::string image_ref;
};

/// Reads participant_id,timestamp,image_ref. Throws on malformed rows.
std::vector<ManifestImage> read_image_manifest(const std::string& path);

inline constexpr std::string_view kUnlabelledReason = "<unlabelled>";

struct UncodeableTally {
  std::size_t n_images = 0;
  std::map<std::string, std::size_t> counts;  // trivial reason -> images

  double percent(const std::string& reason) const;
};

/// Counts trivial-label families over all images; images present only in the
/// manifest are tallied under "<unlabelled>".
UncodeableTally uncodeable_tally(const Dataset& d, const std::vector<ManifestImage>* manifest = nullptr);

struct ParticipantTimeline {
  std::string participant_id;
  std::vector<UnixSeconds> timestamps;
  std::vector<std::string> labels;
  std::optional<double> median_dt;
  std::size_t n_labelled = 0;
  std::size_t n_events = 0;
};

std::vector<ParticipantTimeline> participant_timelines(const Dataset& d,
                                                       const std::vector<ManifestImage>* manifest = nullptr);

/// Per-class median images per participant, under both conventions for
/// participants that lack the class.
struct ClassMedian {
  std::optional<double> median_observed;  // over participants with >= 1 image; nullopt if none
  std::size_t n_observed = 0;
  std::optional<double> median_with_zeros;  // over all participants
};

struct StudySummary {
  std::string study_id;
  std::size_t n_participants = 0;
  std::size_t n_images = 0;
  std::size_t n_labelled = 0;  // non-trivial labels
  double percent_labelled = 0;
  std::optional<QuartileSummary> dt;  // pooled within-participant intervals (s)
  std::size_t n_unique_labels = 0;
  std::map<Intensity, ClassMedian> class_medians;  // SB, LIPA, MVPA, Sleep
  UncodeableTally uncodeable;
  std::optional<TimeCovered> time_covered;

  std::string to_json() const;
  std::string to_markdown() const;
};

StudySummary study_summary(const Dataset& d, const std::vector<ManifestImage>* manifest = nullptr);

struct ScatterPoint {
  std::string participant_id;
  std::string image_ref;
  bool annotated = false;  // has a non-trivial label
  std::optional<ImageStats> stats;
  std::string error;  // set when the image could not be read
};

/// Image statistics for every image with a reference, from records and the
/// manifest (manifest refs resolve against the dataset's image root).
/// Computed on `width` threads; output order follows (participant, timestamp).
std::vector<ScatterPoint> image_scatter(const Dataset& d, const std::vector<ManifestImage>* manifest = nullptr,
                                        std::size_t width = 1);

/// image_ref,mean_star,variance_star,annotated; unreadable images are skipped.
std::string scatter_csv(const std::vector<ScatterPoint>& points);

/// participant_id,median_dt_s,n_labelled,n_events
std::string timelines_csv(const std::vector<ParticipantTimeline>& t);

}  // namespace camannot
