#include "camannot/quality.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "camannot/error.hpp"
#include "camannot/text.hpp"

namespace camannot {

using json = nlohmann::ordered_json;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json quartiles_json(const std::optional<QuartileSummary>& q) {
  if (!q) return nullptr;
  return {{"n", q->n}, {"min", q->min}, {"q1", q->q1}, {"median", q->median}, {"q3", q->q3}, {"max", q->max}};
}

std::vector<double> intervals(const std::vector<UnixSeconds>& ts) {
  std::vector<double> dts;
  for (std::size_t i = 1; i < ts.size(); ++i) dts.push_back(static_cast<double>(ts[i] - ts[i - 1]));
  return dts;
}

}  // namespace

ImageStats image_stats(const RgbImage& img) {
  const std::size_t n = img.pixel_count();
  if (n == 0 || img.data.size() != n * 3) throw Error("image_stats: empty or malformed image");

  std::uint64_t sum[3] = {0, 0, 0};
  std::uint64_t sumsq[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint64_t v = img.data[i * 3 + c];
      sum[c] += v;
      sumsq[c] += v * v;
    }
  }
  // Exact integer numerators: sum_c mu_c = (sum_r + sum_g + sum_b) / n and
  // sum_c sigma^2_c = (n * sum_c sumsq_c - sum_c sum_c^2) / n^2.
  using i128 = __int128;
  const i128 nn = static_cast<i128>(n);
  i128 mean_num = 0, var_num = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    mean_num += sum[c];
    var_num += nn * static_cast<i128>(sumsq[c]) - static_cast<i128>(sum[c]) * static_cast<i128>(sum[c]);
  }
  const long double mean_total = static_cast<long double>(mean_num) / static_cast<long double>(n);
  const long double var_total = static_cast<long double>(var_num) / (static_cast<long double>(n) * n);
  return {static_cast<double>(std::log1p(mean_total)), static_cast<double>(std::log1p(var_total))};
}

std::optional<double> median_dt(const std::vector<UnixSeconds>& ts) {
  if (ts.size() < 2) return std::nullopt;
  auto dts = intervals(ts);
  std::sort(dts.begin(), dts.end());
  return quantile_sorted(dts, 0.5);
}

std::optional<QuartileSummary> dt_quartiles(const std::vector<UnixSeconds>& ts) {
  if (ts.size() < 2) return std::nullopt;
  return quartile_summary(intervals(ts));
}

std::size_t count_labelled_events(const std::vector<std::string>& labels) {
  std::size_t events = 0;
  std::optional<std::string> current;
  for (const auto& raw : labels) {
    if (is_trivial(raw)) {
      current.reset();
      continue;
    }
    std::string n = normalize_label(raw);
    if (!current || *current != n) {
      ++events;
      current = std::move(n);
    }
  }
  return events;
}

TimeCovered time_covered(std::size_t n_labelled, double median_dt_s) {
  if (!(median_dt_s > 0)) throw Error("time_covered: median interval must be positive");
  TimeCovered t;
  t.hours = static_cast<double>(n_labelled) * median_dt_s / 3600.0;
  t.rounded_hours = std::llround(t.hours);
  return t;
}

std::vector<ManifestImage> read_image_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image manifest " + path);
  const auto rows = read_csv(in);
  if (rows.empty()) throw Error("image manifest " + path + " has no header");
  std::optional<std::size_t> c_pid, c_ts, c_ref;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
    const auto h = to_lower(trim(rows[0].fields[i]));
    if (h == "participant_id") c_pid = i;
    if (h == "timestamp") c_ts = i;
    if (h == "image_ref") c_ref = i;
  }
  if (!c_pid || !c_ts) throw Error("image manifest needs participant_id and timestamp columns");
  std::vector<ManifestImage> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    auto get = [&](std::optional<std::size_t> c) { return c && *c < f.size() ? f[*c] : std::string(); };
    const auto ts = parse_iso8601(get(c_ts));
    if (!ts) throw Error(path + " line " + std::to_string(rows[r].line) + ": malformed timestamp");
    out.push_back({trim(get(c_pid)), *ts, trim(get(c_ref))});
  }
  return out;
}

double UncodeableTally::percent(const std::string& reason) const {
  if (n_images == 0) return 0.0;
  auto it = counts.find(reason);
  return it == counts.end() ? 0.0 : 100.0 * static_cast<double>(it->second) / static_cast<double>(n_images);
}

namespace {

/// Per participant: timestamp -> raw label, or nullopt for manifest-only images.
using ImageIndex = std::map<std::string, std::map<UnixSeconds, std::optional<std::string>>>;

ImageIndex index_images(const Dataset& d, const std::vector<ManifestImage>* manifest) {
  ImageIndex idx;
  for (const auto& p : d.participants) idx[p.id];
  for (const auto& r : d.records) idx[r.participant_id][r.timestamp] = r.raw_label;
  if (manifest) {
    for (const auto& m : *manifest) idx[m.participant_id].try_emplace(m.timestamp, std::nullopt);
  }
  return idx;
}

}  // namespace

UncodeableTally uncodeable_tally(const Dataset& d, const std::vector<ManifestImage>* manifest) {
  UncodeableTally t;
  for (const auto& [_, images] : index_images(d, manifest)) {
    for (const auto& [ts, label] : images) {
      ++t.n_images;
      if (!label) {
        ++t.counts[std::string(kUnlabelledReason)];
      } else if (is_trivial(*label)) {
        ++t.counts[trivial_reason(*label)];
      }
    }
  }
  return t;
}

std::vector<ParticipantTimeline> participant_timelines(const Dataset& d, const std::vector<ManifestImage>* manifest) {
  std::vector<ParticipantTimeline> out;
  for (const auto& [pid, images] : index_images(d, manifest)) {
    ParticipantTimeline t;
    t.participant_id = pid;
    for (const auto& [ts, label] : images) {
      t.timestamps.push_back(ts);
      t.labels.push_back(label.value_or(""));
      if (label && !is_trivial(*label)) ++t.n_labelled;
    }
    t.median_dt = median_dt(t.timestamps);
    t.n_events = count_labelled_events(t.labels);
    out.push_back(std::move(t));
  }
  return out;
}

StudySummary study_summary(const Dataset& d, const std::vector<ManifestImage>* manifest) {
  StudySummary s;
  s.study_id = d.study_id;
  const auto timelines = participant_timelines(d, manifest);
  s.n_participants = timelines.size();
  s.uncodeable = uncodeable_tally(d, manifest);
  s.n_images = s.uncodeable.n_images;

  std::set<std::string> unique;
  for (const auto& r : d.records) {
    if (is_trivial(r.raw_label)) continue;
    ++s.n_labelled;
    unique.insert(normalize_label(r.raw_label));
  }
  s.n_unique_labels = unique.size();
  s.percent_labelled = s.n_images ? 100.0 * static_cast<double>(s.n_labelled) / static_cast<double>(s.n_images) : 0.0;

  std::vector<double> all_dts;
  for (const auto& t : timelines) {
    auto dts = intervals(t.timestamps);
    all_dts.insert(all_dts.end(), dts.begin(), dts.end());
  }
  if (!all_dts.empty()) s.dt = quartile_summary(all_dts);
  if (s.dt && s.dt->median > 0) s.time_covered = time_covered(s.n_labelled, s.dt->median);

  for (Intensity cls : {Intensity::SB, Intensity::LIPA, Intensity::MVPA, Intensity::Sleep}) {
    std::vector<double> observed, with_zeros;
    for (const auto& p : d.participants) {
      const auto recs = d.records_of(p.id);
      const auto n = std::count_if(recs.begin(), recs.end(), [cls](const ImageRecord& r) { return r.intensity == cls; });
      with_zeros.push_back(static_cast<double>(n));
      if (n > 0) observed.push_back(static_cast<double>(n));
    }
    ClassMedian m;
    m.n_observed = observed.size();
    if (!observed.empty()) m.median_observed = quartile_summary(observed).median;
    if (!with_zeros.empty()) m.median_with_zeros = quartile_summary(with_zeros).median;
    s.class_medians[cls] = m;
  }
  return s;
}

std::string StudySummary::to_json() const {
  json doc;
  doc["schema"] = "camannot-audit/1";
  doc["study_id"] = study_id;
  doc["n_participants"] = n_participants;
  doc["n_images"] = n_images;
  doc["n_labelled"] = n_labelled;
  doc["percent_labelled"] = percent_labelled;
  doc["dt_seconds"] = quartiles_json(dt);
  doc["n_unique_labels"] = n_unique_labels;
  json medians = json::object();
  for (const auto& [cls, m] : class_medians) {
    medians[std::string(to_string(cls))] = {{"median_observed", optional_number(m.median_observed)},
                                            {"n_observed", m.n_observed},
                                            {"median_with_zeros", optional_number(m.median_with_zeros)}};
  }
  doc["median_instances_per_participant"] = medians;
  json tallies = json::object();
  for (const auto& [reason, n] : uncodeable.counts)
    tallies[reason] = {{"count", n}, {"percent", uncodeable.percent(reason)}};
  doc["uncodeable"] = tallies;
  if (time_covered) {
    doc["time_covered_hours"] = {{"hours", time_covered->hours}, {"rounded", time_covered->rounded_hours}};
  } else {
    doc["time_covered_hours"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

std::string StudySummary::to_markdown() const {
  std::ostringstream out;
  out << "| Statistic | " << study_id << " |\n|---|---|\n";
  out << "| Number of participants | " << n_participants << " |\n";
  out << "| Images with non-trivial labels (% of all) | " << n_labelled << " (" << fixed(percent_labelled, 1)
      << "%) |\n";
  out << "| Median dt (1st, 3rd quartile) between images (s) | ";
  if (dt) {
    out << fixed(dt->median, 1) << " (" << fixed(dt->q1, 1) << ", " << fixed(dt->q3, 1) << ")";
  } else {
    out << "n/a";
  }
  out << " |\n";
  out << "| Unique non-trivial labels | " << n_unique_labels << " |\n";
  for (const auto& [cls, m] : class_medians) {
    out << "| Median " << to_string(cls) << " instances per participant | ";
    if (m.median_observed) {
      out << fixed(*m.median_observed, 1) << " (n=" << m.n_observed << ")";
    } else {
      out << "n/a (n=0)";
    }
    out << "; with zeros " << (m.median_with_zeros ? fixed(*m.median_with_zeros, 1) : std::string("n/a")) << " |\n";
  }
  out << "| Time covered (h) | " << (time_covered ? std::to_string(time_covered->rounded_hours) : std::string("n/a"))
      << " |\n\n";
  out << "| Uncodeable reason | Images | % of all images |\n|---|---|---|\n";
  for (const auto& [reason, n] : uncodeable.counts)
    out << "| `" << reason << "` | " << n << " | " << fixed(uncodeable.percent(reason), 2) << "% |\n";
  return out.str();
}

std::vector<ScatterPoint> image_scatter(const Dataset& d, const std::vector<ManifestImage>* manifest,
                                        std::size_t width) {
  std::map<std::pair<std::string, UnixSeconds>, ScatterPoint> by_key;
  for (const auto& r : d.records) {
    if (!r.image_ref) continue;
    by_key[{r.participant_id, r.timestamp}] = {r.participant_id, *r.image_ref, !is_trivial(r.raw_label), {}, {}};
  }
  if (manifest) {
    for (const auto& m : *manifest) {
      if (m.image_ref.empty()) continue;
      by_key.try_emplace({m.participant_id, m.timestamp}, ScatterPoint{m.participant_id, m.image_ref, false, {}, {}});
    }
  }
  std::vector<ScatterPoint> points;
  points.reserve(by_key.size());
  for (auto& [_, p] : by_key) points.push_back(std::move(p));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < points.size();) {
      auto& p = points[i];
      ImageRecord probe;
      probe.image_ref = p.image_ref;
      try {
        p.stats = image_stats(load_rgb_image(*d.image_path(probe)));
      } catch (const std::exception& e) {
        p.error = e.what();
      }
    }
  };
  width = std::max<std::size_t>(1, std::min(width, points.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return points;
}

std::string scatter_csv(const std::vector<ScatterPoint>& points) {
  std::string out = "image_ref,mean_star,variance_star,annotated\n";
  for (const auto& p : points) {
    if (!p.stats) continue;
    out += csv_line({p.image_ref, json(p.stats->mean_star).dump(), json(p.stats->variance_star).dump(),
                     p.annotated ? "true" : "false"});
  }
  return out;
}

std::string timelines_csv(const std::vector<ParticipantTimeline>& t) {
  std::string out = "participant_id,median_dt_s,n_labelled,n_events\n";
  for (const auto& p : t) {
    out += csv_line({p.participant_id, p.median_dt ? json(*p.median_dt).dump() : "", std::to_string(p.n_labelled),
                     std::to_string(p.n_events)});
  }
  return out;
}

}  // namespace camannot
