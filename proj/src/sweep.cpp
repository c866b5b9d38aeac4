#include "camannot/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "camannot/digest.hpp"
#include "camannot/error.hpp"
#include "camannot/evaluation.hpp"
#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;

void SearchSpace::validate() const {
  std::set<std::string> names;
  for (const auto& d : categorical) {
    if (d.name.empty()) throw Error("search space dimension without a name");
    if (!names.insert(d.name).second) throw Error("duplicate search space dimension '" + d.name + "'");
    if (d.values.empty()) throw Error("search space dimension '" + d.name + "' has no values");
  }
  for (const auto& d : log_uniform) {
    if (d.name.empty()) throw Error("search space dimension without a name");
    if (!names.insert(d.name).second) throw Error("duplicate search space dimension '" + d.name + "'");
    if (!(d.lo > 0) || !(d.hi >= d.lo) || !std::isfinite(d.hi)) {
      throw Error("log-uniform dimension '" + d.name + "' needs 0 < lo <= hi");
    }
  }
}

SweepConfig SweepConfig::from_json(std::string_view text) {
  SweepConfig c;
  try {
    const auto j = Json::parse(text);
    const auto pipeline = parse_pipeline(j.value("pipeline", std::string("dual_encoder")));
    if (!pipeline) throw Error("unknown pipeline '" + j.value("pipeline", std::string()) + "'");
    c.pipeline = *pipeline;
    c.n = j.value("n", std::size_t{30});
    c.seed = j.value("seed", std::uint64_t{0});
    for (const auto& [name, spec] : j.at("space").items()) {
      if (spec.is_array()) {
        c.space.categorical.push_back({name, std::vector<Json>(spec.begin(), spec.end())});
      } else if (spec.is_object() && spec.contains("log_uniform")) {
        const auto& r = spec.at("log_uniform");
        if (!r.is_array() || r.size() != 2) throw Error("log_uniform for '" + name + "' must be [lo, hi]");
        c.space.log_uniform.push_back({name, r[0].get<double>(), r[1].get<double>()});
      } else {
        throw Error("dimension '" + name + "' must be a list or {\"log_uniform\": [lo, hi]}");
      }
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed sweep config: ") + e.what());
  }
  if (c.n == 0) throw Error("sweep config: n must be at least 1");
  c.space.validate();
  return c;
}

std::string TrialConfig::to_json() const {
  Json j;
  j["trial_id"] = trial_id;
  j["index"] = index;
  j["seed"] = seed;
  j["values"] = values;
  return j.dump(2) + "\n";
}

namespace {

std::string trial_name(std::size_t i) {
  std::string s = std::to_string(i);
  if (s.size() < 3) s.insert(0, 3 - s.size(), '0');
  return "trial-" + s;
}

CounterRng dim_rng(std::uint64_t seed, const std::string& name) {
  return CounterRng(splitmix64(seed) ^ fnv1a64(name));
}

}  // namespace

std::vector<TrialConfig> sample_trials(const SearchSpace& space, std::size_t n, std::uint64_t seed) {
  if (space.empty()) throw Error("search space is empty");
  if (n == 0) throw Error("number of trials must be at least 1");
  space.validate();
  std::vector<TrialConfig> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    TrialConfig c{trial_name(t), t, seed, Json::object()};
    for (const auto& d : space.categorical) {
      c.values[d.name] = d.values[dim_rng(seed, d.name).index(t, d.values.size())];
    }
    for (const auto& d : space.log_uniform) {
      const double u = dim_rng(seed, d.name).unit(t);
      const double a = std::log(d.lo), b = std::log(d.hi);
      c.values[d.name] = std::clamp(std::exp(a + u * (b - a)), d.lo, d.hi);
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trials

namespace {

std::string trial_config_text(const TrialConfig& cfg, Pipeline pipeline) {
  Json j;
  j["trial_id"] = cfg.trial_id;
  j["index"] = cfg.index;
  j["seed"] = cfg.seed;
  j["pipeline"] = to_string(pipeline);
  j["values"] = cfg.values;
  return j.dump(2) + "\n";
}

bool json_bool(const Json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = to_lower(v.get<std::string>());
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
  }
  if (v.is_number_integer()) return v.get<int>() != 0;
  throw Error("expected a boolean, got " + v.dump());
}

std::string json_string(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void write_marker(const fs::path& dir, const TrialResult& r) {
  Json j;
  j["status"] = r.status == TrialStatus::Done ? "done" : "failed";
  j["median_val_kappa"] = r.median_val_kappa ? Json(*r.median_val_kappa) : Json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  write_file_atomic((dir / "DONE").string(), j.dump(2) + "\n");
}

TrialResult read_marker(const fs::path& dir) {
  TrialResult r;
  try {
    const auto cfg = Json::parse(read_file((dir / "config.json").string()));
    r.trial_id = cfg.at("trial_id").get<std::string>();
    r.index = cfg.at("index").get<std::size_t>();
    r.values = cfg.at("values");
    const auto m = Json::parse(read_file((dir / "DONE").string()));
    r.status = m.at("status").get<std::string>() == "done" ? TrialStatus::Done : TrialStatus::Failed;
    if (!m.at("median_val_kappa").is_null()) r.median_val_kappa = m.at("median_val_kappa").get<double>();
    r.error = m.value("error", std::string());
  } catch (const Json::exception& e) {
    throw Error("corrupt trial record in " + dir.string() + ": " + e.what());
  }
  r.report_path = (dir / "report.json").string();
  return r;
}

}  // namespace

TrialResult run_trial(const TrialConfig& cfg, const TrialContext& ctx, const std::string& results_dir) {
  const fs::path dir = fs::path(results_dir) / "trials" / cfg.trial_id;
  const std::string config_text = trial_config_text(cfg, ctx.pipeline);
  const fs::path config_path = dir / "config.json";

  if (fs::exists(config_path) && read_file(config_path.string()) != config_text) {
    throw Error(dir.string() + " holds a different trial config; use a fresh results directory");
  }
  if (fs::exists(dir / "DONE")) {
    TrialResult prev = read_marker(dir);
    if (prev.status == TrialStatus::Done) {
      prev.skipped = true;
      return prev;
    }
    fs::remove(dir / "DONE");
  }
  fs::create_directories(dir);
  write_file_atomic(config_path.string(), config_text);

  TrialResult r;
  r.trial_id = cfg.trial_id;
  r.index = cfg.index;
  r.values = cfg.values;
  r.report_path = (dir / "report.json").string();
  try {
    const Json& v = cfg.values;
    MappingApproach approach = MappingApproach::Direct;
    if (v.contains("mapping_approach")) {
      const auto a = parse_approach(json_string(v.at("mapping_approach")));
      if (!a) throw Error("unknown mapping_approach " + v.at("mapping_approach").dump());
      approach = *a;
    }
    const bool reworded = v.contains("reword_labels") && json_bool(v.at("reword_labels"));

    BatchConfig bcfg;
    bcfg.pipeline = ctx.pipeline;
    bcfg.run_id = cfg.trial_id + "-" + to_hex(sha256(config_text)).substr(0, 12);
    bcfg.width = ctx.width;
    if (ctx.pipeline == Pipeline::Generative) {
      if (!v.contains("new_tokens") || !v.contains("prompt")) {
        throw UsageError("generative sweeps need 'new_tokens' and 'prompt' dimensions");
      }
      if (!ctx.prompts) throw UsageError("generative sweeps need a prompt set");
      bcfg.max_new_tokens = v.at("new_tokens").get<int>();
      bcfg.prompt = find_prompt(*ctx.prompts, json_string(v.at("prompt")));
    }

    const TargetSet targets = build_targets(approach, reworded, ctx.clean, *ctx.gateway);
    const std::string pred_path = (dir / "predictions.jsonl").string();
    const BatchSummary s = run_batch(*ctx.dataset, ctx.participant_ids, targets, *ctx.gateway, bcfg, pred_path);
    if (s.too_many_failures()) {
      throw Error(std::to_string(s.n_failed) + " of " + std::to_string(s.n_items) + " predictions failed");
    }
    write_report(evaluate(*ctx.dataset, read_predictions(pred_path)), dir.string());
    r.median_val_kappa = median_kappa_from_report(read_file(r.report_path));
    if (!r.median_val_kappa) throw Error("median kappa is undefined on the validation split");
    r.status = TrialStatus::Done;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    r.status = TrialStatus::Failed;
    r.median_val_kappa.reset();
    r.error = e.what();
    spdlog::warn("{} failed: {}", cfg.trial_id, r.error);
  }
  write_marker(dir, r);
  return r;
}

std::vector<TrialResult> run_sweep(const SweepConfig& sweep, const TrialContext& ctx, const std::string& results_dir) {
  if (!ctx.dataset || !ctx.gateway) throw Error("sweep context is incomplete");
  if (ctx.participant_ids.empty()) throw Error("validation split is empty");
  std::vector<TrialResult> out;
  for (const auto& cfg : sample_trials(sweep.space, sweep.n, sweep.seed)) {
    out.push_back(run_trial(cfg, ctx, results_dir));
    const auto& r = out.back();
    if (r.skipped) {
      spdlog::info("{} already done", r.trial_id);
    } else if (r.status == TrialStatus::Done) {
      spdlog::info("{} median kappa {:.4f}", r.trial_id, *r.median_val_kappa);
    }
  }
  return out;
}

std::vector<TrialResult> load_results(const std::string& results_dir) {
  const fs::path trials = fs::path(results_dir) / "trials";
  std::vector<fs::path> dirs;
  if (fs::exists(trials)) {
    for (const auto& e : fs::directory_iterator(trials))
      if (e.is_directory() && fs::exists(e.path() / "DONE")) dirs.push_back(e.path());
  }
  std::vector<TrialResult> out;
  for (const auto& d : dirs) out.push_back(read_marker(d));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  return out;
}

const TrialResult& select_best(const std::vector<TrialResult>& results) {
  const TrialResult* best = nullptr;
  for (const auto& r : results) {
    if (r.status != TrialStatus::Done || !r.median_val_kappa) continue;
    if (!best || *r.median_val_kappa > *best->median_val_kappa ||
        (*r.median_val_kappa == *best->median_val_kappa && r.index < best->index)) {
      best = &r;
    }
  }
  if (!best) throw Error("no completed trial to select from");
  return *best;
}

std::vector<ExternalRow> read_external_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const auto rows = read_csv(in);
  if (rows.empty()) throw Error(path + " is empty");
  const auto& header = rows.front().fields;
  const auto col = std::find(header.begin(), header.end(), "median_kappa");
  if (std::find(header.begin(), header.end(), "trial_id") == header.end() || col == header.end()) {
    throw Error(path + " needs trial_id and median_kappa columns");
  }
  const std::size_t kcol = static_cast<std::size_t>(col - header.begin());
  std::vector<ExternalRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != header.size()) {
      throw Error(path + ":" + std::to_string(rows[i].line) + ": expected " + std::to_string(header.size()) +
                  " fields");
    }
    ExternalRow r;
    for (std::size_t c = 0; c < f.size(); ++c) r.fields.emplace_back(header[c], f[c]);
    if (!trim(f[kcol]).empty()) {
      try {
        std::size_t used = 0;
        r.median_kappa = std::stod(f[kcol], &used);
        if (used != f[kcol].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw Error(path + ":" + std::to_string(rows[i].line) + ": bad median_kappa '" + f[kcol] + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string SweepSummary::to_json() const {
  auto q = [](const QuartileSummary& s) {
    return Json{{"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}, {"max", s.max}, {"n", s.n}};
  };
  Json j;
  j["schema"] = "camannot-sweep/1";
  j["best_trial"] = best_trial ? Json(*best_trial) : Json(nullptr);
  j["median_kappa"] = overall ? q(*overall) : Json(nullptr);
  Json groups = Json::object();
  for (const auto& [k, s] : by_approach) groups[k] = q(s);
  j["by_mapping_approach"] = std::move(groups);
  j["external"] = external ? q(*external) : Json(nullptr);
  return j.dump(2) + "\n";
}

SweepSummary sweep_summary(const std::vector<TrialResult>& results, const std::vector<ExternalRow>& external) {
  SweepSummary s;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : results) {
    if (r.status != TrialStatus::Done || !r.median_val_kappa) continue;
    all.push_back(*r.median_val_kappa);
    if (r.values.contains("mapping_approach")) {
      groups[json_string(r.values.at("mapping_approach"))].push_back(*r.median_val_kappa);
    }
  }
  if (!all.empty()) {
    s.overall = quartile_summary(all);
    s.best_trial = select_best(results).trial_id;
  }
  for (auto& [k, v] : groups) s.by_approach.emplace(k, quartile_summary(v));
  std::vector<double> ext;
  for (const auto& r : external)
    if (r.median_kappa) ext.push_back(*r.median_kappa);
  if (!ext.empty()) s.external = quartile_summary(ext);
  return s;
}

std::string sweep_listing_csv(const std::vector<TrialResult>& results, const std::vector<ExternalRow>& external) {
  std::vector<std::string> columns = {"trial_id", "source", "status", "median_kappa"};
  auto add_column = [&](const std::string& c) {
    if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
  };
  for (const auto& r : results)
    for (const auto& [k, v] : r.values.items()) add_column(k);
  for (const auto& r : external)
    for (const auto& [k, v] : r.fields) add_column(k);

  std::string out = csv_line(columns);
  for (const auto& r : results) {
    std::map<std::string, std::string> row;
    row["trial_id"] = r.trial_id;
    row["source"] = "sweep";
    row["status"] = r.status == TrialStatus::Done ? "done" : "failed";
    row["median_kappa"] = r.median_val_kappa ? Json(*r.median_val_kappa).dump() : "";
    for (const auto& [k, v] : r.values.items()) row[k] = json_string(v);
    std::vector<std::string> f;
    for (const auto& c : columns) f.push_back(row.count(c) ? row[c] : "");
    out += csv_line(f);
  }
  for (const auto& r : external) {
    std::map<std::string, std::string> row{{"source", "external"}, {"status", "done"}};
    for (const auto& [k, v] : r.fields) row[k] = v;
    std::vector<std::string> f;
    for (const auto& c : columns) f.push_back(row.count(c) ? row[c] : "");
    out += csv_line(f);
  }
  return out;
}

}  // namespace camannot
