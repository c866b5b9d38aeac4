#include "camannot/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "camannot/error.hpp"
#include "camannot/text.hpp"

namespace camannot {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Parsing

std::string ParsedLabel::normalized() const {
  std::string last;
  if (code) {
    last = *code;
    if (!activity.empty()) last += " " + activity;
  } else {
    last = activity;
  }
  std::vector<std::string> parts = segments;
  parts.push_back(std::move(last));
  return join(parts, ";");
}

std::optional<int> ParsedLabel::code_value() const {
  if (!code) return std::nullopt;
  return std::stoi(*code);
}

ParsedLabel parse_label(std::string_view raw) {
  const std::vector<std::string> parts = split(normalize_label(raw), ';');
  ParsedLabel out;
  out.segments.assign(parts.begin(), parts.end() - 1);
  const std::string& last = parts.back();

  std::size_t digits = 0;
  while (digits < last.size() && std::isdigit(static_cast<unsigned char>(last[digits]))) ++digits;
  const bool code_prefix = (digits == 4 || digits == 5) && (digits == last.size() || last[digits] == ' ');
  if (code_prefix) {
    out.code = last.substr(0, digits);
    out.activity = digits < last.size() ? last.substr(digits + 1) : std::string();
  } else {
    out.activity = last;
  }
  return out;
}

bool is_trivial(std::string_view raw) {
  const std::string n = normalize_label(raw);
  return n.empty() || n.rfind("uncodeable", 0) == 0 || n == "undefined" || n == "<unknown>";
}

std::string trivial_reason(std::string_view raw) {
  std::string n = normalize_label(raw);
  return n.empty() ? "<empty>" : n;
}

Intensity met_to_intensity(double met, bool sedentary_posture, bool waking) {
  if (!(met > 0)) throw Error("MET value must be positive, got " + std::to_string(met));
  if (!waking) return Intensity::Sleep;
  if (met >= 3.0) return Intensity::MVPA;
  if (met <= 1.5 && sedentary_posture) return Intensity::SB;
  return Intensity::LIPA;
}

// ---------------------------------------------------------------------------
// Dictionary

LabelDictionary LabelDictionary::read_csv(std::istream& in) {
  const auto rows = camannot::read_csv(in);
  LabelDictionary dict;
  if (rows.empty()) return dict;

  const auto& header = rows.front().fields;
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (to_lower(trim(header[i])) == name) return i;
    return std::nullopt;
  };
  const auto c_label = column("raw_label");
  const auto c_intensity = column("intensity");
  if (!c_label || !c_intensity) throw Error("dictionary CSV needs raw_label and intensity columns");
  const auto c_source = column("source");
  const auto c_reason = column("reason");

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    auto get = [&](std::optional<std::size_t> c) { return c && *c < f.size() ? f[*c] : std::string(); };
    DictionaryEntry e;
    e.raw_label = normalize_label(get(c_label));
    const auto cls = parse_intensity(get(c_intensity));
    if (!cls) {
      throw Error("dictionary line " + std::to_string(rows[r].line) + ": unknown intensity '" + get(c_intensity) + "'");
    }
    e.intensity = *cls;
    e.source = trim(get(c_source));
    if (e.source.empty()) e.source = "2011";
    if (e.source != "2011" && e.source != "2024" && e.source != "override") {
      throw Error("dictionary line " + std::to_string(rows[r].line) + ": unknown source '" + e.source + "'");
    }
    e.reason = get(c_reason);
    dict.add(std::move(e));
  }
  return dict;
}

LabelDictionary LabelDictionary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dictionary " + path);
  return read_csv(in);
}

void LabelDictionary::add(DictionaryEntry e) {
  e.raw_label = normalize_label(e.raw_label);
  auto& table = e.source == "override" ? overrides_ : entries_;
  table.insert_or_assign(e.raw_label, std::move(e));
}

const DictionaryEntry* LabelDictionary::find_entry(std::string_view raw) const {
  const std::string key = normalize_label(raw);
  if (auto it = overrides_.find(key); it != overrides_.end()) return &it->second;
  if (auto it = entries_.find(key); it != entries_.end()) return &it->second;
  return nullptr;
}

std::optional<Intensity> LabelDictionary::find(std::string_view raw) const {
  const auto* e = find_entry(raw);
  if (!e) return std::nullopt;
  return e->intensity;
}

std::size_t LabelDictionary::size() const {
  std::size_t n = entries_.size();
  for (const auto& [k, _] : overrides_)
    if (!entries_.count(k)) ++n;
  return n;
}

void LabelDictionary::write_csv(std::ostream& out) const {
  out << "raw_label,intensity,source,reason\n";
  for (const auto* table : {&entries_, &overrides_})
    for (const auto& [_, e] : *table)
      out << csv_line({e.raw_label, std::string(to_string(e.intensity)), e.source, e.reason});
}

void GapLog::record(const std::string& normalized_label) {
  std::lock_guard lock(mu_);
  ++gaps_[normalized_label];
}

std::map<std::string, std::size_t> GapLog::snapshot() const {
  std::lock_guard lock(mu_);
  return gaps_;
}

Intensity lookup_intensity(std::string_view raw, const LabelDictionary& dict, GapLog* gaps) {
  if (is_trivial(raw)) return Intensity::Unknown;
  if (auto cls = dict.find(raw)) return *cls;
  const std::string key = normalize_label(raw);
  spdlog::debug("label not in dictionary: '{}'", key);
  if (gaps) gaps->record(key);
  return Intensity::Unknown;
}

// ---------------------------------------------------------------------------
// Dendrogram

Dendrogram build_dendrogram(const std::vector<std::string>& labels, const TextEmbedder& embed) {
  std::vector<EmbeddingVector> vectors;
  try {
    vectors = embed(labels);
  } catch (const std::exception& batch_error) {
    // Pin the failure on a specific label.
    for (const auto& label : labels) {
      try {
        embed({label});
      } catch (const std::exception& e) {
        throw Error("embedding failed for label '" + label + "': " + e.what());
      }
    }
    throw Error(std::string("embedding failed: ") + batch_error.what());
  }
  return build_dendrogram(labels, vectors);
}

Dendrogram build_dendrogram(const std::vector<std::string>& labels, const std::vector<EmbeddingVector>& vectors) {
  const std::size_t n = labels.size();
  {
    std::set<std::string> seen;
    for (const auto& l : labels)
      if (!seen.insert(l).second) throw Error("duplicate label: '" + l + "'");
  }
  if (n < 2) throw Error("dendrogram needs at least 2 distinct labels");
  if (vectors.size() != n) throw Error("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                                       std::to_string(n) + " labels");

  // Pairwise distance sums between active clusters; the average linkage
  // distance is sum / (size_a * size_b).
  std::vector<std::vector<double>> sum(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = 1.0 - cosine_similarity(vectors[i], vectors[j]);
      sum[i][j] = sum[j][i] = d;
    }

  struct Slot {
    bool active = true;
    std::size_t node;
    std::size_t size = 1;
    std::string min_member;
  };
  std::vector<Slot> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = {true, i, 1, labels[i]};

  Dendrogram out;
  out.labels = labels;
  out.merges.reserve(n - 1);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::string_view, std::string_view> best_key;
    bool found = false;
    for (std::size_t a = 0; a < n; ++a) {
      if (!slots[a].active) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!slots[b].active) continue;
        const double d = sum[a][b] / static_cast<double>(slots[a].size * slots[b].size);
        std::string_view lo = slots[a].min_member, hi = slots[b].min_member;
        if (hi < lo) std::swap(lo, hi);
        if (!found || d < best || (d == best && std::pair(lo, hi) < best_key)) {
          found = true;
          best = d;
          best_a = a;
          best_b = b;
          best_key = {lo, hi};
        }
      }
    }

    Slot& A = slots[best_a];
    Slot& B = slots[best_b];
    MergeStep m;
    const bool a_first = A.min_member < B.min_member;
    m.left = a_first ? A.node : B.node;
    m.right = a_first ? B.node : A.node;
    m.height = std::max(0.0, best);
    m.size = A.size + B.size;
    out.merges.push_back(m);

    for (std::size_t k = 0; k < n; ++k) {
      if (!slots[k].active || k == best_a || k == best_b) continue;
      sum[best_a][k] = sum[k][best_a] = sum[best_a][k] + sum[best_b][k];
    }
    A.node = n + step;
    A.size = m.size;
    A.min_member = std::min(A.min_member, B.min_member);
    B.active = false;
  }
  return out;
}

std::vector<std::vector<std::string>> cut_dendrogram(const Dendrogram& d, double threshold) {
  const std::size_t n = d.labels.size();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // Any leaf below each node represents it.
  std::vector<std::size_t> leaf_of(n + d.merges.size());
  for (std::size_t i = 0; i < n; ++i) leaf_of[i] = i;
  for (std::size_t k = 0; k < d.merges.size(); ++k) {
    const auto& m = d.merges[k];
    leaf_of[n + k] = leaf_of[m.left];
    if (m.height <= threshold) {
      const auto ra = find(leaf_of[m.left]), rb = find(leaf_of[m.right]);
      if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(d.labels[i]);
  std::vector<std::vector<std::string>> out;
  for (auto& [_, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

MergeProposal propose_merges(Dendrogram d, double threshold) {
  if (!(threshold >= 0 && threshold <= 2)) throw Error("threshold must lie in [0, 2]");
  MergeProposal p;
  p.clusters = cut_dendrogram(d, threshold);
  p.dendrogram = std::move(d);
  p.threshold = threshold;
  return p;
}

std::string suggest_clean_name(const std::vector<std::string>& members) {
  if (members.empty()) return {};
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::string> activities;
  for (const auto& m : members) {
    activities.push_back(parse_label(m).activity);
    std::vector<std::string> t;
    for (auto& s : split(activities.back(), ' '))
      if (!s.empty()) t.push_back(std::move(s));
    tokens.push_back(std::move(t));
  }

  auto contains_run = [](const std::vector<std::string>& hay, const std::vector<std::string>& run) {
    if (run.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), run.begin(), run.end()) != hay.end();
  };

  const auto& first = tokens.front();
  for (std::size_t len = first.size(); len > 0; --len) {
    for (std::size_t start = 0; start + len <= first.size(); ++start) {
      const std::vector<std::string> run(first.begin() + static_cast<std::ptrdiff_t>(start),
                                         first.begin() + static_cast<std::ptrdiff_t>(start + len));
      if (std::all_of(tokens.begin() + 1, tokens.end(), [&](const auto& t) { return contains_run(t, run); })) {
        return join(run, " ");
      }
    }
  }
  return *std::min_element(activities.begin(), activities.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
}

std::string write_review_file(const MergeProposal& p, const LabelDictionary& dict) {
  std::ostringstream out;
  out << "# camannot label review\n"
      << "# threshold: " << p.threshold << "\n"
      << "# Edit cluster names, move member lines between clusters, then run apply-merges.\n"
      << "# Member lines must be indented; the [class] prefix is informational.\n\n";
  std::size_t k = 1;
  for (const auto& cluster : p.clusters) {
    out << "CLUSTER " << k++ << ": " << suggest_clean_name(cluster) << "\n";
    for (const auto& m : cluster) {
      const auto cls = dict.find(m).value_or(Intensity::Unknown);
      out << "    [" << to_string(cls) << "] " << m << "\n";
    }
    out << "\n";
  }
  return out.str();
}

std::vector<ReviewCluster> parse_review_file(std::string_view text) {
  std::vector<ReviewCluster> out;
  std::size_t line_no = 0;
  for (const auto& raw_line : split(text, '\n')) {
    ++line_no;
    std::string line = raw_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;

    const bool indented = line.front() == ' ' || line.front() == '\t';
    if (!indented) {
      if (t.rfind("CLUSTER", 0) != 0) {
        throw Error("review file line " + std::to_string(line_no) + ": expected 'CLUSTER <n>: <name>'");
      }
      const auto colon = t.find(':');
      if (colon == std::string::npos) {
        throw Error("review file line " + std::to_string(line_no) + ": missing ':' after CLUSTER");
      }
      out.push_back({trim(t.substr(colon + 1)), {}});
      continue;
    }
    if (out.empty()) throw Error("review file line " + std::to_string(line_no) + ": member before any CLUSTER");
    std::string member = t;
    if (member.front() == '[') {
      const auto close = member.find(']');
      if (close != std::string::npos) member = trim(member.substr(close + 1));
    }
    out.back().members.push_back(normalize_label(member));
  }
  return out;
}

CleanLabelSet apply_merges(std::string_view review_text, const LabelDictionary& dict,
                           const std::vector<std::string>* expected_labels) {
  const auto clusters = parse_review_file(review_text);
  CleanLabelSet out;
  std::map<std::string, std::size_t> owner;
  std::set<std::string> names;

  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[k];
    const std::string where = "cluster " + std::to_string(k + 1) + " '" + c.clean_name + "'";
    if (c.clean_name.empty()) throw Error(where + " has no clean name");
    if (c.members.empty()) throw Error(where + " has no members");
    if (!names.insert(c.clean_name).second) throw Error("duplicate clean name '" + c.clean_name + "'");

    CleanLabel label;
    label.name = c.clean_name;
    std::map<Intensity, std::vector<std::string>> by_class;
    for (const auto& m : c.members) {
      if (auto [it, fresh] = owner.emplace(m, k); !fresh) {
        throw Error("duplicate membership: '" + m + "' appears in clusters " + std::to_string(it->second + 1) +
                    " and " + std::to_string(k + 1));
      }
      const Intensity cls = lookup_intensity(m, dict);
      if (cls == Intensity::Unknown) throw Error(where + ": member '" + m + "' has no known intensity");
      by_class[cls].push_back(m);
      label.members.insert(m);
    }
    if (by_class.size() > 1) {
      std::string detail;
      for (const auto& [cls, ms] : by_class)
        for (const auto& m : ms) detail += "\n  [" + std::string(to_string(cls)) + "] " + m;
      throw Error("intensity conflict in " + where + ":" + detail);
    }
    label.intensity = by_class.begin()->first;
    out.labels.push_back(std::move(label));
  }

  if (expected_labels) {
    for (const auto& l : *expected_labels) {
      if (!owner.count(normalize_label(l))) throw Error("label '" + l + "' missing from review file");
    }
  }
  return out;
}

std::string CleanLabelSet::to_json() const {
  json arr = json::array();
  for (const auto& l : labels) {
    arr.push_back({{"name", l.name},
                   {"intensity", std::string(to_string(l.intensity))},
                   {"members", std::vector<std::string>(l.members.begin(), l.members.end())}});
  }
  return json{{"clean_labels", arr}}.dump(2) + "\n";
}

CleanLabelSet CleanLabelSet::from_json(std::string_view text) {
  CleanLabelSet out;
  try {
    const auto doc = json::parse(text);
    std::set<std::string> seen;
    for (const auto& item : doc.at("clean_labels")) {
      CleanLabel l;
      l.name = item.at("name").get<std::string>();
      const auto cls = parse_intensity(item.at("intensity").get<std::string>());
      if (!cls) throw Error("clean label '" + l.name + "' has an unknown intensity");
      l.intensity = *cls;
      for (const auto& m : item.at("members")) {
        const auto member = m.get<std::string>();
        if (!seen.insert(member).second) throw Error("clean label member '" + member + "' appears twice");
        l.members.insert(member);
      }
      out.labels.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed clean label file: ") + e.what());
  }
  return out;
}

std::string dendrogram_to_json(const Dendrogram& d) {
  json merges = json::array();
  for (const auto& m : d.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  return json{{"labels", d.labels}, {"merges", merges}}.dump(2) + "\n";
}

}  // namespace camannot
