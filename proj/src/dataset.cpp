#include "camannot/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "camannot/digest.hpp"
#include "camannot/error.hpp"
#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kManifestFormat = "camannot-dataset/1";

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       std::initializer_list<std::string_view> names) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = to_lower(trim(header[i]));
    for (auto n : names)
      if (h == n) return i;
  }
  return std::nullopt;
}

std::string field_at(const std::vector<std::string>& f, std::optional<std::size_t> c) {
  return c && *c < f.size() ? f[*c] : std::string();
}

std::string_view to_string(Sex s) { return s == Sex::Female ? "female" : "male"; }

std::optional<Sex> parse_sex(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "female" || v == "f") return Sex::Female;
  if (v == "male" || v == "m") return Sex::Male;
  return std::nullopt;
}

std::vector<Participant> read_participants(std::istream& in, std::vector<std::string>& warnings) {
  const auto rows = read_csv(in);
  std::vector<Participant> out;
  if (rows.empty()) return out;
  const auto& header = rows.front().fields;
  const auto c_id = find_column(header, {"id", "participant_id"});
  if (!c_id) throw Error("participants CSV: missing required column 'id'");
  const auto c_age = find_column(header, {"age"});
  const auto c_sex = find_column(header, {"sex"});

  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::string where = "participants line " + std::to_string(rows[r].line);
    Participant p;
    p.id = trim(field_at(f, c_id));
    if (p.id.empty()) {
      warnings.push_back(where + ": empty id, row skipped");
      continue;
    }
    if (!seen.insert(p.id).second) {
      warnings.push_back(where + ": duplicate participant '" + p.id + "', keeping first");
      continue;
    }
    if (const std::string age = trim(field_at(f, c_age)); !age.empty()) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(age, &used);
        if (used != age.size() || v < 0 || v >= 500) throw std::out_of_range(age);
        p.age = v;
      } catch (const std::exception&) {
        warnings.push_back(where + ": invalid age '" + age + "' treated as missing");
      }
    }
    if (const std::string sex = trim(field_at(f, c_sex)); !sex.empty()) {
      p.sex = parse_sex(sex);
      if (!p.sex) warnings.push_back(where + ": unrecognised sex '" + sex + "' treated as missing");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string encode_file_name(std::string_view id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

}  // namespace

std::string image_id(std::string_view participant_id, UnixSeconds timestamp) {
  return std::string(participant_id) + "@" + format_compact(timestamp);
}

std::string image_id(const ImageRecord& r) { return image_id(r.participant_id, r.timestamp); }

std::span<const ImageRecord> Dataset::records_of(std::string_view participant_id) const {
  auto lo = std::lower_bound(records.begin(), records.end(), participant_id,
                             [](const ImageRecord& r, std::string_view id) { return r.participant_id < id; });
  auto hi = std::upper_bound(lo, records.end(), participant_id,
                             [](std::string_view id, const ImageRecord& r) { return id < r.participant_id; });
  return {lo, hi};
}

const Participant* Dataset::participant(std::string_view id) const {
  auto it = std::lower_bound(participants.begin(), participants.end(), id,
                             [](const Participant& p, std::string_view v) { return p.id < v; });
  return it != participants.end() && it->id == id ? &*it : nullptr;
}

std::vector<std::string> Dataset::participant_ids() const {
  std::vector<std::string> ids;
  ids.reserve(participants.size());
  for (const auto& p : participants) ids.push_back(p.id);
  return ids;
}

std::optional<std::string> Dataset::image_path(const ImageRecord& r) const {
  if (!r.image_ref || r.image_ref->empty()) return std::nullopt;
  const fs::path p(*r.image_ref);
  if (p.is_absolute() || image_root.empty()) return p.string();
  return (fs::path(image_root) / p).lexically_normal().string();
}

IngestResult ingest_csv(std::istream& annotations, const std::string& study_id, const LabelDictionary& dict,
                        std::istream* participants_csv) {
  IngestResult result;
  Dataset& d = result.dataset;
  d.study_id = study_id;

  const auto rows = read_csv(annotations);
  if (rows.empty()) throw Error("annotation CSV is empty: missing header");
  const auto& header = rows.front().fields;
  const auto c_pid = find_column(header, {"participant_id"});
  const auto c_ts = find_column(header, {"timestamp"});
  const auto c_label = find_column(header, {"raw_label"});
  const auto c_ref = find_column(header, {"image_ref"});
  for (auto [col, name] : {std::pair{c_pid, "participant_id"}, {c_ts, "timestamp"}, {c_label, "raw_label"}}) {
    if (!col) throw Error(std::string("annotation CSV: missing required column '") + name + "'");
  }

  GapLog gaps;
  std::map<std::pair<std::string, UnixSeconds>, std::size_t> first_line;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::size_t line = rows[r].line;
    ImageRecord rec;
    rec.participant_id = trim(field_at(f, c_pid));
    if (rec.participant_id.empty()) {
      result.errors.push_back({line, "empty participant_id"});
      continue;
    }
    const std::string ts = field_at(f, c_ts);
    const auto t = parse_iso8601(ts);
    if (!t) {
      result.errors.push_back({line, "malformed timestamp '" + ts + "'"});
      continue;
    }
    rec.timestamp = *t;
    auto [it, fresh] = first_line.emplace(std::pair{rec.participant_id, rec.timestamp}, line);
    if (!fresh) {
      result.warnings.push_back("line " + std::to_string(line) + ": duplicate image (" + rec.participant_id + ", " +
                                format_iso8601(rec.timestamp) + "), keeping line " + std::to_string(it->second));
      continue;
    }
    rec.raw_label = field_at(f, c_label);
    if (c_ref) {
      std::string ref = trim(field_at(f, c_ref));
      if (!ref.empty()) rec.image_ref = std::move(ref);
    }
    rec.intensity = lookup_intensity(rec.raw_label, dict, &gaps);
    d.records.push_back(std::move(rec));
  }

  std::stable_sort(d.records.begin(), d.records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return std::tie(a.participant_id, a.timestamp) < std::tie(b.participant_id, b.timestamp);
  });

  std::map<std::string, Participant> people;
  if (participants_csv) {
    for (auto& p : read_participants(*participants_csv, result.warnings)) people.emplace(p.id, std::move(p));
  }
  for (const auto& rec : d.records) {
    if (!people.count(rec.participant_id)) people.emplace(rec.participant_id, Participant{rec.participant_id, {}, {}});
  }
  for (auto& [_, p] : people) d.participants.push_back(std::move(p));
  d.unmapped_labels = gaps.snapshot();
  for (const auto& [label, count] : d.unmapped_labels) {
    result.warnings.push_back("label not in dictionary (" + std::to_string(count) + " images): " + label);
  }
  return result;
}

IngestResult ingest_csv_file(const std::string& path, const std::string& study_id, const LabelDictionary& dict,
                             const std::optional<std::string>& participants_path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open annotation CSV " + path);
  std::ifstream pin;
  if (participants_path) {
    pin.open(*participants_path, std::ios::binary);
    if (!pin) throw Error("cannot open participants CSV " + *participants_path);
  }
  IngestResult r = ingest_csv(in, study_id, dict, participants_path ? &pin : nullptr);
  r.dataset.image_root = fs::absolute(fs::path(path)).parent_path().lexically_normal().string();
  return r;
}

std::string export_annotations_csv(const Dataset& d) {
  std::string out = "participant_id,timestamp,raw_label,image_ref\n";
  for (const auto& r : d.records)
    out += csv_line({r.participant_id, format_iso8601(r.timestamp), r.raw_label, r.image_ref.value_or("")});
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "train") return Split::Train;
  if (v == "val" || v == "validation") return Split::Val;
  if (v == "test") return Split::Test;
  return std::nullopt;
}

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error("split fractions must be non-negative and sum to 1");
  }
  // The epsilon absorbs binary representation error (0.15 * 20 -> 3, not 2).
  auto floor_of = [n](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
  };
  SplitSizes s;
  s.val = floor_of(f.val);
  s.test = floor_of(f.test);
  s.train = n - s.val - s.test;
  return s;
}

std::vector<SplitAssignment> split_participants(std::vector<std::string> ids, std::uint64_t seed,
                                                const SplitFractions& f) {
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error("duplicate participant id in split");
  if (ids.size() < 3) throw Error("need at least 3 participants to split, got " + std::to_string(ids.size()));
  const SplitSizes sizes = split_sizes(ids.size(), f);

  const CounterRng rng(splitmix64(seed) ^ fnv1a64("split_participants"));
  std::vector<std::string> order = ids;
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.index(i, i + 1));
    std::swap(order[i], order[j]);
  }

  std::vector<SplitAssignment> out;
  out.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Split s = k < sizes.train ? Split::Train : (k < sizes.train + sizes.val ? Split::Val : Split::Test);
    out.push_back({order[k], s, seed});
  }
  std::sort(out.begin(), out.end(),
            [](const SplitAssignment& a, const SplitAssignment& b) { return a.participant_id < b.participant_id; });
  return out;
}

std::vector<SplitAssignment> split_participants(const Dataset& d, std::uint64_t seed, const SplitFractions& f) {
  return split_participants(d.participant_ids(), seed, f);
}

std::string splits_to_json(const std::vector<SplitAssignment>& s, const SplitFractions& f) {
  json doc;
  doc["seed"] = s.empty() ? 0 : s.front().seed;
  doc["fractions"] = {{"train", f.train}, {"val", f.val}, {"test", f.test}};
  json arr = json::array();
  for (const auto& a : s) arr.push_back({{"participant_id", a.participant_id}, {"split", to_string(a.split)}});
  doc["assignments"] = arr;
  return doc.dump(2) + "\n";
}

std::vector<SplitAssignment> splits_from_json(std::string_view text) {
  std::vector<SplitAssignment> out;
  try {
    const auto doc = json::parse(text);
    const auto seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& a : doc.at("assignments")) {
      const auto split = parse_split(a.at("split").get<std::string>());
      if (!split) throw Error("unknown split name in splits file");
      out.push_back({a.at("participant_id").get<std::string>(), *split, seed});
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed splits file: ") + e.what());
  }
  return out;
}

std::vector<std::string> load_split(const std::string& dir, Split split) {
  const auto path = (fs::path(dir) / "splits.json").string();
  if (!fs::exists(path)) throw Error("no splits.json in " + dir + " (run ingest with --seed)");
  std::vector<std::string> ids;
  for (const auto& a : splits_from_json(read_file(path)))
    if (a.split == split) ids.push_back(a.participant_id);
  return ids;
}

// ---------------------------------------------------------------------------
// Storage

void persist(const Dataset& d, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "records");

  json manifest;
  manifest["format"] = kManifestFormat;
  manifest["study_id"] = d.study_id;
  // Stored relative to the dataset directory so the tree can move as a whole.
  std::string image_root = d.image_root;
  if (!image_root.empty() && fs::path(image_root).is_absolute()) {
    image_root = fs::path(image_root).lexically_relative(fs::absolute(root).lexically_normal()).generic_string();
    if (image_root.empty()) image_root = ".";
  }
  manifest["image_root"] = image_root;
  manifest["n_records"] = d.records.size();
  json people = json::array();
  for (const auto& p : d.participants) {
    people.push_back({{"id", p.id}, {"file", "records/" + encode_file_name(p.id) + ".jsonl"}});
  }
  manifest["participants"] = people;
  json gaps = json::object();
  for (const auto& [label, count] : d.unmapped_labels) gaps[label] = count;
  manifest["unmapped_labels"] = gaps;

  std::string pcsv = "id,age,sex\n";
  for (const auto& p : d.participants) {
    pcsv += csv_line({p.id, p.age ? std::to_string(*p.age) : "", p.sex ? std::string(to_string(*p.sex)) : ""});
  }

  for (const auto& p : d.participants) {
    std::string lines;
    for (const auto& r : d.records_of(p.id)) {
      json rec;
      rec["timestamp"] = format_iso8601(r.timestamp);
      rec["raw_label"] = r.raw_label;
      rec["intensity"] = to_string(r.intensity);
      if (r.image_ref) rec["image_ref"] = *r.image_ref;
      lines += rec.dump() + "\n";
    }
    write_file_atomic((root / "records" / (encode_file_name(p.id) + ".jsonl")).string(), lines);
  }
  write_file_atomic((root / "participants.csv").string(), pcsv);
  // Manifest last: its presence marks a complete dataset.
  write_file_atomic((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

Dataset load(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error("missing manifest: " + manifest_path.string());

  Dataset d;
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path.string()));
    if (manifest.at("format").get<std::string>() != kManifestFormat) throw Error("unsupported dataset format");
    d.study_id = manifest.at("study_id").get<std::string>();
    d.image_root = manifest.at("image_root").get<std::string>();
    if (!d.image_root.empty() && fs::path(d.image_root).is_relative()) {
      d.image_root = (fs::absolute(root) / d.image_root).lexically_normal().string();
      if (d.image_root.size() > 1 && d.image_root.back() == '/') d.image_root.pop_back();
    }
    for (const auto& [label, count] : manifest.at("unmapped_labels").items())
      d.unmapped_labels[label] = count.get<std::size_t>();
  } catch (const std::exception& e) {
    throw Error("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }

  std::map<std::string, Participant> people;
  {
    std::ifstream in(root / "participants.csv", std::ios::binary);
    if (!in) throw Error("missing participants.csv in " + dir);
    std::vector<std::string> warnings;
    for (auto& p : read_participants(in, warnings)) people.emplace(p.id, std::move(p));
  }

  try {
    for (const auto& entry : manifest.at("participants")) {
      const auto id = entry.at("id").get<std::string>();
      const auto file = (root / entry.at("file").get<std::string>()).string();
      auto it = people.find(id);
      d.participants.push_back(it != people.end() ? it->second : Participant{id, {}, {}});

      std::ifstream in(file, std::ios::binary);
      if (!in) throw Error("missing record file " + file);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
          const auto rec = json::parse(line);
          ImageRecord r;
          r.participant_id = id;
          const auto ts = parse_iso8601(rec.at("timestamp").get<std::string>());
          if (!ts) throw Error("bad timestamp");
          r.timestamp = *ts;
          r.raw_label = rec.at("raw_label").get<std::string>();
          const auto cls = parse_intensity(rec.at("intensity").get<std::string>());
          if (!cls) throw Error("bad intensity");
          r.intensity = *cls;
          if (rec.contains("image_ref")) r.image_ref = rec.at("image_ref").get<std::string>();
          if (!d.records.empty() && d.records.back().participant_id == id && d.records.back().timestamp > r.timestamp) {
            throw Error("timestamps out of order");
          }
          d.records.push_back(std::move(r));
        } catch (const std::exception& e) {
          throw Error(file + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  std::sort(d.participants.begin(), d.participants.end(),
            [](const Participant& a, const Participant& b) { return a.id < b.id; });
  std::stable_sort(d.records.begin(), d.records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    return std::tie(a.participant_id, a.timestamp) < std::tie(b.participant_id, b.timestamp);
  });
  return d;
}

}  // namespace camannot
