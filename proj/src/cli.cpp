#include "camannot/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "camannot/dataset.hpp"
#include "camannot/digest.hpp"
#include "camannot/error.hpp"
#include "camannot/evaluation.hpp"
#include "camannot/gateway.hpp"
#include "camannot/quality.hpp"
#include "camannot/review.hpp"
#include "camannot/sweep.hpp"
#include "camannot/taxonomy.hpp"
#include "camannot/text.hpp"
#include "camannot/zeroshot.hpp"

namespace camannot::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct BackendOpts {
  std::string backend = "stub";
  std::string endpoint;
  std::string model_id = "stub";
  std::string cache_dir;
  std::size_t batch_size = 32;
  double timeout_s = 30;
  std::size_t dim = 256;
};

void add_backend_options(CLI::App* sub, BackendOpts& o) {
  sub->add_option("--backend", o.backend, "Embedding backend: stub or remote")->capture_default_str();
  sub->add_option("--endpoint", o.endpoint, "Base URL of a remote backend, e.g. http://127.0.0.1:8500");
  sub->add_option("--model-id", o.model_id, "Model id sent to the backend")->capture_default_str();
  sub->add_option("--cache-dir", o.cache_dir, "Directory of the on-disk embedding cache");
  sub->add_option("--batch-size", o.batch_size, "Inputs per backend request")->capture_default_str();
  sub->add_option("--timeout", o.timeout_s, "Backend request timeout in seconds")->capture_default_str();
  sub->add_option("--dim", o.dim, "Vector dimension of the stub backend")->capture_default_str();
}

Gateway make_gateway(const BackendOpts& o) {
  BackendConfig cfg;
  const std::string kind = to_lower(o.backend);
  if (kind == "stub") {
    cfg.kind = BackendKind::Stub;
  } else if (kind == "remote") {
    cfg.kind = BackendKind::Remote;
  } else {
    throw UsageError("unknown backend '" + o.backend + "' (expected stub or remote)");
  }
  if (!o.endpoint.empty()) cfg.endpoint = o.endpoint;
  cfg.model_id = o.model_id;
  cfg.batch_size = o.batch_size;
  cfg.timeout_s = o.timeout_s;
  cfg.stub_dim = o.dim;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return Gateway(cfg, o.cache_dir.empty() ? std::nullopt : std::optional<std::string>(o.cache_dir));
}

void require(CLI::App* sub, const std::string& flag) {
  if (sub->count(flag) == 0) throw UsageError(sub->get_name() + ": " + flag + " is required");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    const auto t = trim(line);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> participants_for(const std::string& data_dir, const std::string& split) {
  if (to_lower(split) == "all") return {};
  const auto s = parse_split(split);
  if (!s) throw UsageError("unknown split '" + split + "' (expected train, val, test or all)");
  auto ids = load_split(data_dir, *s);
  if (ids.empty()) throw Error("split '" + split + "' of " + data_dir + " is empty");
  return ids;
}

std::optional<CleanLabelSet> load_clean(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return CleanLabelSet::from_json(read_file(path));
}

/// Text used to embed a compendium label: hierarchy and activity without the code.
std::string label_embedding_text(const std::string& label) {
  const auto p = parse_label(label);
  std::vector<std::string> parts = p.segments;
  if (!p.activity.empty()) parts.push_back(p.activity);
  return parts.empty() ? label : join(parts, " ");
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestOpts {
  std::string annotations, dictionary, participants, study_id, out;
  std::uint64_t seed = 0;
  double val = 0.15, test = 0.15;
  bool strict = false;
};

int cmd_ingest(const IngestOpts& o, std::ostream& out) {
  const auto dict = LabelDictionary::load(o.dictionary);
  const std::string study = o.study_id.empty() ? fs::path(o.annotations).stem().string() : o.study_id;
  auto res = ingest_csv_file(o.annotations, study, dict,
                             o.participants.empty() ? std::nullopt : std::optional<std::string>(o.participants));
  for (const auto& w : res.warnings) spdlog::warn("{}", w);
  for (const auto& e : res.errors) spdlog::error("{}:{}: {}", o.annotations, e.line, e.message);

  SplitFractions f;
  f.val = o.val;
  f.test = o.test;
  f.train = 1.0 - o.val - o.test;
  if (o.val < 0 || o.test < 0 || f.train <= 0) throw UsageError("split fractions must be non-negative and leave a training share");

  persist(res.dataset, o.out);
  const auto ids = res.dataset.participant_ids();
  if (ids.size() >= 3) {
    write_file_atomic((fs::path(o.out) / "splits.json").string(),
                      splits_to_json(split_participants(ids, o.seed, f), f));
  } else {
    spdlog::warn("fewer than 3 participants; no splits written");
  }

  json rep;
  rep["study_id"] = study;
  rep["n_records"] = res.dataset.records.size();
  rep["n_participants"] = ids.size();
  json errs = json::array();
  for (const auto& e : res.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  rep["errors"] = std::move(errs);
  rep["warnings"] = res.warnings;
  rep["unmapped_labels"] = res.dataset.unmapped_labels;
  write_file_atomic((fs::path(o.out) / "ingest_report.json").string(), rep.dump(2) + "\n");

  out << "ingested " << res.dataset.records.size() << " records from " << ids.size() << " participants into "
      << o.out << " (" << res.errors.size() << " row errors, " << res.dataset.unmapped_labels.size()
      << " unmapped labels)\n";
  return o.strict && !res.errors.empty() ? 1 : 0;
}

struct AuditOpts {
  std::string data, out, manifest;
  bool scatter = false;
  std::size_t threads = 1;
};

int cmd_audit(const AuditOpts& o, std::ostream& out) {
  const Dataset d = load(o.data);
  std::optional<std::vector<ManifestImage>> manifest;
  if (!o.manifest.empty()) manifest = read_image_manifest(o.manifest);
  const auto* m = manifest ? &*manifest : nullptr;

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  const StudySummary s = study_summary(d, m);
  write_file_atomic((dir / "summary.json").string(), s.to_json());
  write_file_atomic((dir / "summary.md").string(), s.to_markdown());
  write_file_atomic((dir / "timelines.csv").string(), timelines_csv(participant_timelines(d, m)));
  if (o.scatter) {
    const auto points = image_scatter(d, m, o.threads);
    std::size_t failed = 0;
    for (const auto& p : points) {
      if (p.stats) continue;
      ++failed;
      spdlog::warn("{}: {}", p.image_ref, p.error);
    }
    write_file_atomic((dir / "scatter.csv").string(), scatter_csv(points));
    if (failed) out << failed << " images could not be read\n";
  }
  out << "audited " << s.n_images << " images of " << s.n_participants << " participants into " << o.out << "\n";
  return 0;
}

struct DedupOpts {
  std::string data, dictionary, out;
  double threshold = -1;
  BackendOpts backend;
};

int cmd_dedup(const DedupOpts& o, std::ostream& out) {
  if (o.threshold < 0 || o.threshold > 2) throw UsageError("--threshold must be within [0, 2]");
  const Dataset d = load(o.data);
  const auto dict = LabelDictionary::load(o.dictionary);
  std::set<std::string> unique;
  for (const auto& r : d.records) {
    if (r.intensity == Intensity::Unknown || is_trivial(r.raw_label)) continue;
    unique.insert(normalize_label(r.raw_label));
  }
  const std::vector<std::string> labels(unique.begin(), unique.end());
  Gateway gw = make_gateway(o.backend);
  const TextEmbedder embed = [&gw](const std::vector<std::string>& ls) {
    std::vector<std::string> texts;
    for (const auto& l : ls) texts.push_back(label_embedding_text(l));
    return gw.embed_texts(texts);
  };
  const MergeProposal p = propose_merges(build_dendrogram(labels, embed), o.threshold);

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  write_file_atomic((dir / "dendrogram.json").string(), dendrogram_to_json(p.dendrogram));
  write_file_atomic((dir / "review.txt").string(), write_review_file(p, dict));
  write_file_atomic((dir / "labels.txt").string(), join(labels, "\n") + "\n");
  out << labels.size() << " labels in " << p.clusters.size() << " clusters at threshold " << o.threshold
      << "; edit " << (dir / "review.txt").string() << " and run apply-merges\n";
  return 0;
}

struct ApplyOpts {
  std::string review, dictionary, labels, out;
};

int cmd_apply(const ApplyOpts& o, std::ostream& out) {
  const auto dict = LabelDictionary::load(o.dictionary);
  std::optional<std::vector<std::string>> expected;
  if (!o.labels.empty()) expected = read_lines(o.labels);
  const auto set = apply_merges(read_file(o.review), dict, expected ? &*expected : nullptr);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  write_file_atomic(o.out, set.to_json());
  out << set.labels.size() << " clean labels written to " << o.out << "\n";
  return 0;
}

struct ZeroShotOpts {
  std::string data, pipeline = "dual_encoder", approach = "direct", clean, prompts, prompt, split = "all", run_id, out;
  bool reworded = false;
  int max_new_tokens = 0;
  std::size_t threads = 1;
  double abstain_below = 0;
  BackendOpts backend;
};

int cmd_zeroshot(CLI::App* sub, const ZeroShotOpts& o, std::ostream& out) {
  const auto pipeline = parse_pipeline(o.pipeline);
  if (!pipeline) throw UsageError("unknown pipeline '" + o.pipeline + "' (expected dual_encoder or generative)");
  const auto approach = parse_approach(o.approach);
  if (!approach) throw UsageError("unknown approach '" + o.approach + "' (expected direct or via_clean)");
  if (*approach == MappingApproach::ViaClean && o.clean.empty()) throw UsageError("--approach via_clean needs --clean");

  BatchConfig cfg;
  cfg.pipeline = *pipeline;
  cfg.width = std::max<std::size_t>(1, o.threads);
  if (sub->count("--abstain-below")) cfg.abstain_below = o.abstain_below;
  if (*pipeline == Pipeline::Generative) {
    if (o.prompt.empty()) throw UsageError("--pipeline generative needs --prompt");
    if (sub->count("--max-new-tokens") == 0) throw UsageError("--pipeline generative needs --max-new-tokens");
    if (o.max_new_tokens <= 0) throw UsageError("--max-new-tokens must be positive");
    if (o.prompts.empty()) throw UsageError("--pipeline generative needs --prompts");
    cfg.prompt = find_prompt(load_prompts(o.prompts), o.prompt);
    cfg.max_new_tokens = o.max_new_tokens;
  }

  std::string run_id = o.run_id;
  if (run_id.empty()) {
    json key{{"pipeline", o.pipeline}, {"approach", to_string(*approach)}, {"reworded", o.reworded},
             {"prompt", o.prompt},     {"tokens", o.max_new_tokens},       {"split", o.split},
             {"backend", o.backend.backend}, {"model", o.backend.model_id},
             {"clean", o.clean.empty() ? std::string() : to_hex(sha256(read_file(o.clean)))}};
    run_id = "zs-" + to_hex(sha256(key.dump())).substr(0, 12);
  }
  cfg.run_id = run_id;

  const Dataset d = load(o.data);
  const auto ids = participants_for(o.data, o.split);
  const auto clean = load_clean(o.clean);
  Gateway gw = make_gateway(o.backend);
  const TargetSet targets = build_targets(*approach, o.reworded, clean ? &*clean : nullptr, gw);
  const BatchSummary s = run_batch(d, ids, targets, gw, cfg, o.out);
  out << "run " << run_id << ": " << s.n_predicted << " predicted, " << s.n_failed << " failed, " << s.n_skipped
      << " resumed of " << s.n_items << " -> " << o.out << "\n";
  if (s.too_many_failures()) {
    spdlog::error("{:.1f}% of predictions failed", 100.0 * s.failure_rate());
    return 1;
  }
  return 0;
}

struct EvaluateOpts {
  std::string truth, pred, out;
};

int cmd_evaluate(const EvaluateOpts& o, std::ostream& out) {
  const Dataset d = load(o.truth);
  const auto rep = evaluate(d, read_predictions(o.pred));
  write_report(rep, o.out);
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  out << "evaluated " << rep.n_evaluated << " records: kappa " << fmt(rep.pooled_kappa) << ", accuracy "
      << fmt(rep.pooled_metrics.accuracy) << ", median participant kappa " << fmt(rep.median_kappa()) << "\n";
  if (!rep.unmatched.empty()) {
    spdlog::warn("{} predictions reference unknown images", rep.unmatched.size());
    if (rep.unmatched_fraction() > 0.05) {
      spdlog::error("{:.1f}% of predictions are unmatched", 100.0 * rep.unmatched_fraction());
      return 1;
    }
  }
  return 0;
}

struct SweepOpts {
  std::string data, space, out, split = "val", clean, prompts, external;
  std::size_t threads = 1;
  BackendOpts backend;
};

int cmd_sweep(const SweepOpts& o, std::ostream& out) {
  const SweepConfig sweep = SweepConfig::from_json(read_file(o.space));
  const Dataset d = load(o.data);
  const auto clean = load_clean(o.clean);
  std::optional<std::vector<PromptSpec>> prompts;
  if (!o.prompts.empty()) prompts = load_prompts(o.prompts);
  if (sweep.pipeline == Pipeline::Generative && !prompts) throw UsageError("generative sweeps need --prompts");
  Gateway gw = make_gateway(o.backend);

  TrialContext ctx;
  ctx.dataset = &d;
  ctx.participant_ids = participants_for(o.data, o.split);
  if (ctx.participant_ids.empty()) ctx.participant_ids = d.participant_ids();
  ctx.gateway = &gw;
  ctx.clean = clean ? &*clean : nullptr;
  ctx.prompts = prompts ? &*prompts : nullptr;
  ctx.pipeline = sweep.pipeline;
  ctx.width = std::max<std::size_t>(1, o.threads);

  const auto results = run_sweep(sweep, ctx, o.out);
  std::vector<ExternalRow> external;
  if (!o.external.empty()) external = read_external_results(o.external);
  const SweepSummary s = sweep_summary(results, external);
  const fs::path dir(o.out);
  write_file_atomic((dir / "summary.json").string(), s.to_json());
  write_file_atomic((dir / "summary.csv").string(), sweep_listing_csv(results, external));

  const auto done = std::count_if(results.begin(), results.end(),
                                  [](const TrialResult& r) { return r.status == TrialStatus::Done; });
  out << done << " of " << results.size() << " trials done";
  if (done == 0) {
    out << "\n";
    spdlog::error("no trial completed");
    return 1;
  }
  const TrialResult& best = select_best(results);
  write_file_atomic((dir / "best.json").string(),
                    json{{"trial_id", best.trial_id}, {"median_val_kappa", *best.median_val_kappa},
                         {"values", best.values}}
                            .dump(2) +
                        "\n");
  out << "; best " << best.trial_id << " with median kappa " << *best.median_val_kappa << "\n";
  return 0;
}

struct ServeOpts {
  std::string data, pred, log = "corrections.jsonl", host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(const ServeOpts& o) {
  ReviewService service(load(o.data), read_predictions(o.pred), o.log);
  serve(service, o.host, o.port);
  return 0;
}

struct ExportOpts {
  std::string eval, sweep, out;
};

std::string num_or_empty(const json& v) { return v.is_null() ? std::string() : v.dump(); }

int cmd_export(const ExportOpts& o, std::ostream& out) {
  if (o.eval.empty() && o.sweep.empty()) throw UsageError("export-plots needs --eval and/or --sweep");
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  std::size_t files = 0;
  if (!o.eval.empty()) {
    const fs::path src = fs::is_directory(o.eval) ? fs::path(o.eval) / "report.json" : fs::path(o.eval);
    json rep;
    try {
      rep = json::parse(read_file(src.string()));
    } catch (const json::exception& e) {
      throw Error("malformed evaluation report " + src.string() + ": " + e.what());
    }
    if (rep.value("schema", std::string()) != "camannot-eval/1") throw Error(src.string() + " is not an evaluation report");

    std::string quart = csv_line({"metric", "min", "q1", "median", "q3", "max", "n", "n_undefined"});
    for (const auto& [metric, s] : rep.at("summaries").items()) {
      auto get = [&](const char* k) { return s.contains(k) ? num_or_empty(s.at(k)) : std::string(); };
      quart += csv_line({metric, get("min"), get("q1"), get("median"), get("q3"), get("max"), get("n"),
                         get("n_undefined")});
    }
    std::string f1 = csv_line({"participant_id", "class", "f1"});
    std::string kappa = csv_line({"participant_id", "kappa"});
    for (const auto& p : rep.at("participants")) {
      const auto id = p.at("participant_id").get<std::string>();
      for (auto c : kEvaluatedClasses) {
        f1 += csv_line({id, std::string(to_string(c)), num_or_empty(p.at("classes").at(std::string(to_string(c))).at("f1"))});
      }
      kappa += csv_line({id, num_or_empty(p.at("kappa"))});
    }
    std::string cm = csv_line({"true", "predicted", "count"});
    const auto& m = rep.at("pooled").at("confusion_matrix");
    for (auto t : kEvaluatedClasses)
      for (auto p : kEvaluatedClasses)
        cm += csv_line({std::string(to_string(t)), std::string(to_string(p)),
                        m.at(class_index(t)).at(class_index(p)).dump()});
    write_file_atomic((dir / "metric_quartiles.csv").string(), quart);
    write_file_atomic((dir / "per_participant_f1.csv").string(), f1);
    write_file_atomic((dir / "kappa.csv").string(), kappa);
    write_file_atomic((dir / "confusion_matrix.csv").string(), cm);
    files += 4;
  }
  if (!o.sweep.empty()) {
    const auto results = load_results(o.sweep);
    if (results.empty()) throw Error("no completed trials in " + o.sweep);
    const SweepSummary s = sweep_summary(results);
    std::string quart = csv_line({"group", "min", "q1", "median", "q3", "max", "n"});
    auto row = [&](const std::string& g, const QuartileSummary& q) {
      quart += csv_line({g, json(q.min).dump(), json(q.q1).dump(), json(q.median).dump(), json(q.q3).dump(),
                         json(q.max).dump(), std::to_string(q.n)});
    };
    if (s.overall) row("all", *s.overall);
    for (const auto& [g, q] : s.by_approach) row("mapping_approach=" + g, q);
    write_file_atomic((dir / "sweep_kappa.csv").string(), sweep_listing_csv(results));
    write_file_atomic((dir / "sweep_quartiles.csv").string(), quart);
    files += 2;
  }
  out << files << " plot files written to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::string suggestion(const std::string& token, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(token, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best.empty() || best_d > std::max<std::size_t>(2, token.size() / 3)) return {};
  return best;
}

void check_extras(const CLI::App& app, CLI::App* sub) {
  const CLI::App& scope = sub ? *sub : app;
  const auto extras = scope.remaining();
  if (extras.empty()) return;
  std::vector<std::string> candidates;
  if (sub) {
    for (const CLI::Option* opt : sub->get_options())
      for (const auto& l : opt->get_lnames()) candidates.push_back("--" + l);
  } else {
    for (const CLI::App* s : app.get_subcommands({})) candidates.push_back(s->get_name());
  }
  for (const CLI::Option* opt : app.get_options())
    for (const auto& l : opt->get_lnames()) candidates.push_back("--" + l);
  const std::string& bad = extras.front();
  std::string msg = "unexpected argument '" + bad + "'";
  const std::string token = bad.substr(0, bad.find('='));
  if (const auto s = suggestion(token, candidates); !s.empty()) msg += "; did you mean '" + s + "'?";
  throw UsageError(msg);
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("camannot");
  if (!logger) {
    logger = spdlog::stderr_color_mt("camannot");
    logger->set_pattern("%^%l%$: %v");
  }
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(to_lower(level));
  if (lvl == spdlog::level::off && to_lower(level) != "off") throw UsageError("unknown log level '" + level + "'");
  spdlog::set_level(lvl);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Camera annotation pipeline: ingest, audit, label deduplication, zero-shot labelling, evaluation, "
               "hyperparameter sweeps and review service.",
               "camannot"};
  app.set_config("--config", "", "TOML file with defaults; explicit flags take precedence");
  app.require_subcommand(1);
  app.allow_extras();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  IngestOpts ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Import an annotation CSV into a dataset directory");
  s_ingest->add_option("--annotations", ingest.annotations, "CSV with participant_id,timestamp,raw_label[,image_ref]");
  s_ingest->add_option("--dictionary", ingest.dictionary, "Label dictionary CSV");
  s_ingest->add_option("--participants", ingest.participants, "Participant sidecar CSV (id,age,sex)");
  s_ingest->add_option("--study-id", ingest.study_id, "Study id (default: annotation file stem)");
  s_ingest->add_option("--out", ingest.out, "Dataset directory to write");
  s_ingest->add_option("--seed", ingest.seed, "Seed of the participant split")->capture_default_str();
  s_ingest->add_option("--val-frac", ingest.val, "Validation share of participants")->capture_default_str();
  s_ingest->add_option("--test-frac", ingest.test, "Test share of participants")->capture_default_str();
  s_ingest->add_flag("--strict", ingest.strict, "Exit 1 when any row was rejected");

  AuditOpts audit;
  auto* s_audit = app.add_subcommand("audit", "Dataset quality statistics");
  s_audit->add_option("--data", audit.data, "Dataset directory");
  s_audit->add_option("--out", audit.out, "Output directory");
  s_audit->add_option("--manifest", audit.manifest, "Image manifest CSV (participant_id,timestamp,image_ref)");
  s_audit->add_flag("--scatter", audit.scatter, "Compute per-image brightness and contrast statistics");
  s_audit->add_option("--threads", audit.threads, "Worker threads for image statistics")->capture_default_str();

  DedupOpts dedup;
  auto* s_dedup = app.add_subcommand("dedup-labels", "Cluster raw labels into proposed clean labels");
  s_dedup->add_option("--data", dedup.data, "Dataset directory");
  s_dedup->add_option("--dictionary", dedup.dictionary, "Label dictionary CSV");
  s_dedup->add_option("--threshold", dedup.threshold, "Cosine distance cut height in [0, 2]");
  s_dedup->add_option("--out", dedup.out, "Output directory");
  add_backend_options(s_dedup, dedup.backend);

  ApplyOpts apply;
  auto* s_apply = app.add_subcommand("apply-merges", "Build the clean-label set from a reviewed cluster file");
  s_apply->add_option("--review", apply.review, "Reviewed cluster file");
  s_apply->add_option("--dictionary", apply.dictionary, "Label dictionary CSV");
  s_apply->add_option("--labels", apply.labels, "File listing every label that must be covered");
  s_apply->add_option("--out", apply.out, "Clean-label JSON to write");

  ZeroShotOpts zs;
  auto* s_zs = app.add_subcommand("zero-shot", "Predict intensity classes without training");
  s_zs->add_option("--data", zs.data, "Dataset directory");
  s_zs->add_option("--pipeline", zs.pipeline, "dual_encoder or generative")->capture_default_str();
  s_zs->add_option("--approach", zs.approach, "direct or via_clean")->capture_default_str();
  s_zs->add_flag("--reworded", zs.reworded, "Use the reworded intensity phrases");
  s_zs->add_option("--clean", zs.clean, "Clean-label JSON (via_clean)");
  s_zs->add_option("--prompts", zs.prompts, "Prompt set JSON (generative)");
  s_zs->add_option("--prompt", zs.prompt, "Prompt id (generative)");
  s_zs->add_option("--max-new-tokens", zs.max_new_tokens, "Caption token budget (generative)");
  s_zs->add_option("--split", zs.split, "train, val, test or all")->capture_default_str();
  s_zs->add_option("--run-id", zs.run_id, "Run id (default: derived from the configuration)");
  s_zs->add_option("--threads", zs.threads, "Concurrent items")->capture_default_str();
  s_zs->add_option("--abstain-below", zs.abstain_below, "Predict Unknown below this similarity");
  s_zs->add_option("--out", zs.out, "Predictions JSONL to write");
  add_backend_options(s_zs, zs.backend);

  EvaluateOpts ev;
  auto* s_ev = app.add_subcommand("evaluate", "Agreement metrics of predictions against ground truth");
  s_ev->add_option("--truth", ev.truth, "Dataset directory");
  s_ev->add_option("--pred", ev.pred, "Predictions JSONL");
  s_ev->add_option("--out", ev.out, "Report directory");

  SweepOpts sw;
  auto* s_sw = app.add_subcommand("sweep", "Random search over zero-shot configurations");
  s_sw->add_option("--data", sw.data, "Dataset directory");
  s_sw->add_option("--space", sw.space, "Sweep config JSON (space, n, seed, pipeline)");
  s_sw->add_option("--out", sw.out, "Results directory");
  s_sw->add_option("--split", sw.split, "Participants to score on")->capture_default_str();
  s_sw->add_option("--clean", sw.clean, "Clean-label JSON");
  s_sw->add_option("--prompts", sw.prompts, "Prompt set JSON");
  s_sw->add_option("--external", sw.external, "External results CSV (trial_id, median_kappa, ...)");
  s_sw->add_option("--threads", sw.threads, "Concurrent items per trial")->capture_default_str();
  add_backend_options(s_sw, sw.backend);

  ServeOpts sv;
  auto* s_sv = app.add_subcommand("serve", "HTTP review service");
  s_sv->add_option("--data", sv.data, "Dataset directory");
  s_sv->add_option("--pred", sv.pred, "Predictions JSONL");
  s_sv->add_option("--log", sv.log, "Correction log (JSONL, append-only)")->capture_default_str();
  s_sv->add_option("--host", sv.host, "Bind address")->capture_default_str();
  s_sv->add_option("--port", sv.port, "Port")->capture_default_str();

  ExportOpts ex;
  auto* s_ex = app.add_subcommand("export-plots", "Plot-ready CSVs from evaluation and sweep results");
  s_ex->add_option("--eval", ex.eval, "Evaluation report directory or report.json");
  s_ex->add_option("--sweep", ex.sweep, "Sweep results directory");
  s_ex->add_option("--out", ex.out, "Output directory");

  for (CLI::App* s : app.get_subcommands({})) s->allow_extras();

  std::vector<const char*> argv{"camannot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      if (app.get_subcommands().empty()) check_extras(app, nullptr);
      throw UsageError(e.what());
    }
    setup_logging(log_level);

    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    check_extras(app, nullptr);
    check_extras(app, sub);

    if (sub == s_ingest) {
      for (auto f : {"--annotations", "--dictionary", "--out"}) require(sub, f);
      return cmd_ingest(ingest, out);
    }
    if (sub == s_audit) {
      for (auto f : {"--data", "--out"}) require(sub, f);
      return cmd_audit(audit, out);
    }
    if (sub == s_dedup) {
      for (auto f : {"--data", "--dictionary", "--threshold", "--out"}) require(sub, f);
      return cmd_dedup(dedup, out);
    }
    if (sub == s_apply) {
      for (auto f : {"--review", "--dictionary", "--out"}) require(sub, f);
      return cmd_apply(apply, out);
    }
    if (sub == s_zs) {
      for (auto f : {"--data", "--out"}) require(sub, f);
      return cmd_zeroshot(sub, zs, out);
    }
    if (sub == s_ev) {
      for (auto f : {"--truth", "--pred", "--out"}) require(sub, f);
      return cmd_evaluate(ev, out);
    }
    if (sub == s_sw) {
      for (auto f : {"--data", "--space", "--out"}) require(sub, f);
      return cmd_sweep(sw, out);
    }
    if (sub == s_sv) {
      for (auto f : {"--data", "--pred"}) require(sub, f);
      return cmd_serve(sv);
    }
    if (sub == s_ex) {
      require(sub, "--out");
      return cmd_export(ex, out);
    }
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun 'camannot --help' for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace camannot::cli
