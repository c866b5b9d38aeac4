#include "camannot/zeroshot.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "camannot/error.hpp"
#include "camannot/text.hpp"

namespace camannot {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view to_string(MappingApproach a) { return a == MappingApproach::Direct ? "direct" : "via_clean"; }

std::optional<MappingApproach> parse_approach(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "direct") return MappingApproach::Direct;
  if (v == "via_clean" || v == "via clean" || v == "via-clean" || v == "clean") return MappingApproach::ViaClean;
  return std::nullopt;
}

std::string_view to_string(Pipeline p) { return p == Pipeline::DualEncoder ? "dual_encoder" : "generative"; }

std::optional<Pipeline> parse_pipeline(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "dual_encoder" || v == "dual-encoder") return Pipeline::DualEncoder;
  if (v == "generative") return Pipeline::Generative;
  return std::nullopt;
}

Intensity TargetSet::intensity_of(std::string_view phrase) const {
  for (std::size_t i = 0; i < phrases.size(); ++i)
    if (phrases[i] == phrase) return intensities[i];
  throw Error("unknown target phrase '" + std::string(phrase) + "'");
}

std::vector<std::pair<std::string, Intensity>> direct_phrases(bool reworded) {
  if (reworded) {
    return {{"sedentary behavior", Intensity::SB},
            {"light physical activity", Intensity::LIPA},
            {"moderate-to-vigorous physical activity", Intensity::MVPA}};
  }
  return {{"sedentary", Intensity::SB}, {"light", Intensity::LIPA}, {"MVPA", Intensity::MVPA}};
}

TargetSet make_target_set(std::vector<std::string> phrases, std::vector<Intensity> intensities,
                          std::vector<EmbeddingVector> embeddings, MappingApproach approach, bool reworded) {
  if (phrases.empty()) throw Error("target set is empty");
  if (phrases.size() != intensities.size() || phrases.size() != embeddings.size()) {
    throw Error("target phrases, intensities and embeddings are misaligned");
  }
  std::set<std::string> seen;
  for (const auto& p : phrases)
    if (!seen.insert(p).second) throw Error("duplicate target phrase '" + p + "'");
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    if (embeddings[i].dim() != embeddings[0].dim()) throw Error("target embeddings differ in dimension");
  }
  return {std::move(phrases), std::move(intensities), std::move(embeddings), approach, reworded};
}

TargetSet build_targets(MappingApproach approach, bool reworded, const CleanLabelSet* clean, Gateway& gateway) {
  std::vector<std::string> phrases;
  std::vector<Intensity> intensities;
  if (approach == MappingApproach::Direct) {
    for (auto& [p, c] : direct_phrases(reworded)) {
      phrases.push_back(p);
      intensities.push_back(c);
    }
  } else {
    if (!clean) throw UsageError("via_clean mapping requires a clean label set");
    if (clean->labels.empty()) throw Error("clean label set is empty");
    for (const auto& l : clean->labels) {
      phrases.push_back(l.name);
      intensities.push_back(l.intensity);
    }
  }
  auto embeddings = gateway.embed_texts(phrases);
  return make_target_set(std::move(phrases), std::move(intensities), std::move(embeddings), approach, reworded);
}

Retrieval classify_by_retrieval(const EmbeddingVector& query, const TargetSet& targets) {
  if (targets.embeddings.empty()) throw Error("target set is empty");
  Retrieval best{0, cosine_similarity(query, targets.embeddings[0])};
  for (std::size_t i = 1; i < targets.embeddings.size(); ++i) {
    const double s = cosine_similarity(query, targets.embeddings[i]);
    if (s > best.similarity) best = {i, s};
  }
  return best;
}

std::vector<PromptSpec> parse_prompts(std::string_view json_text) {
  std::vector<PromptSpec> out;
  std::set<std::string> ids;
  try {
    for (const auto& item : json::parse(json_text)) {
      PromptSpec p;
      p.id = item.at("id").get<std::string>();
      p.text = item.at("text").get<std::string>();
      p.source = item.value("source", std::string("curated"));
      if (p.source != "curated" && p.source != "llm-suggested") {
        throw Error("prompt '" + p.id + "' has unknown source '" + p.source + "'");
      }
      if (!ids.insert(p.id).second) throw Error("duplicate prompt id '" + p.id + "'");
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed prompt set: ") + e.what());
  }
  return out;
}

std::vector<PromptSpec> load_prompts(const std::string& path) { return parse_prompts(read_file(path)); }

const PromptSpec& find_prompt(const std::vector<PromptSpec>& prompts, std::string_view id) {
  for (const auto& p : prompts)
    if (p.id == id) return p;
  throw UsageError("unknown prompt id '" + std::string(id) + "'");
}

// ---------------------------------------------------------------------------
// Records

std::string PredictionRecord::to_json_line() const {
  json j;
  j["image_id"] = image_id;
  j["run_id"] = run_id;
  if (predicted) j["predicted"] = to_string(*predicted);
  if (caption) j["caption"] = *caption;
  if (mapped_via) j["mapped_via"] = *mapped_via;
  if (similarity) j["similarity"] = *similarity;
  if (prompt_id) j["prompt_id"] = *prompt_id;
  if (max_new_tokens) j["max_new_tokens"] = *max_new_tokens;
  j["approach"] = to_string(approach);
  j["reworded"] = reworded;
  if (error) j["error"] = *error;
  return j.dump() + "\n";
}

PredictionRecord PredictionRecord::from_json_line(std::string_view line) {
  PredictionRecord r;
  try {
    const auto j = json::parse(line);
    r.image_id = j.at("image_id").get<std::string>();
    r.run_id = j.at("run_id").get<std::string>();
    if (j.contains("predicted")) {
      r.predicted = parse_intensity(j.at("predicted").get<std::string>());
      if (!r.predicted) throw Error("unknown predicted class");
    }
    if (j.contains("caption")) r.caption = j.at("caption").get<std::string>();
    if (j.contains("mapped_via")) r.mapped_via = j.at("mapped_via").get<std::string>();
    if (j.contains("similarity")) r.similarity = j.at("similarity").get<double>();
    if (j.contains("prompt_id")) r.prompt_id = j.at("prompt_id").get<std::string>();
    if (j.contains("max_new_tokens")) r.max_new_tokens = j.at("max_new_tokens").get<int>();
    const auto approach = parse_approach(j.value("approach", std::string("direct")));
    if (!approach) throw Error("unknown approach");
    r.approach = *approach;
    r.reworded = j.value("reworded", false);
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed prediction record: ") + e.what());
  }
  return r;
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions file " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(PredictionRecord::from_json_line(line));
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-item classification

std::string normalize_caption(std::string_view caption) {
  std::string out;
  bool space = false;
  for (char c : trim(caption)) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = true;
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  while (!out.empty() && std::string_view(".,;:!?").find(out.back()) != std::string_view::npos) out.pop_back();
  return trim(out);
}

namespace {

void resolve(PredictionRecord& rec, const EmbeddingVector& query, const TargetSet& targets,
             std::optional<double> abstain_below) {
  const auto hit = classify_by_retrieval(query, targets);
  rec.mapped_via = targets.phrases[hit.index];
  rec.similarity = hit.similarity;
  rec.predicted = abstain_below && hit.similarity < *abstain_below ? Intensity::Unknown : targets.intensities[hit.index];
}

PredictionRecord base_record(const TargetSet& targets) {
  PredictionRecord r;
  r.approach = targets.approach;
  r.reworded = targets.reworded;
  return r;
}

}  // namespace

PredictionRecord classify_dual_encoder(const std::string& image_path, const TargetSet& targets, Gateway& gateway,
                                       std::optional<double> abstain_below) {
  PredictionRecord rec = base_record(targets);
  try {
    const auto res = gateway.embed_images({image_path}).front();
    if (!res.vector) {
      rec.error = res.error;
      return rec;
    }
    resolve(rec, *res.vector, targets, abstain_below);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

PredictionRecord map_caption(std::string_view caption, const TargetSet& targets, Gateway& gateway,
                             std::optional<double> abstain_below) {
  PredictionRecord rec = base_record(targets);
  const std::string text = normalize_caption(caption);
  rec.caption = std::string(caption);
  if (text.empty()) {
    rec.error = "empty caption";
    return rec;
  }
  try {
    resolve(rec, gateway.embed_text(text), targets, abstain_below);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Batches

namespace {

std::map<std::string, PredictionRecord> read_existing(const std::string& path, const std::string& run_id) {
  std::map<std::string, PredictionRecord> done;
  if (!fs::exists(path)) return done;
  for (auto& r : read_predictions(path)) {
    if (r.run_id != run_id) {
      throw Error(path + " holds predictions of run '" + r.run_id + "', not '" + run_id + "'");
    }
    if (r.ok()) done.insert_or_assign(r.image_id, std::move(r));
  }
  return done;
}

}  // namespace

BatchSummary run_batch(const Dataset& dataset, const std::vector<std::string>& participant_ids,
                       const TargetSet& targets, Gateway& gateway, const BatchConfig& cfg, const std::string& out_path) {
  if (cfg.run_id.empty()) throw UsageError("run_id must not be empty");
  if (cfg.pipeline == Pipeline::Generative && (!cfg.prompt || !cfg.max_new_tokens)) {
    throw UsageError("the generative pipeline requires a prompt and a token budget");
  }

  const std::set<std::string> wanted(participant_ids.begin(), participant_ids.end());
  std::vector<const ImageRecord*> items;
  for (const auto& r : dataset.records) {
    if (r.intensity == Intensity::Unknown) continue;
    if (!wanted.empty() && !wanted.count(r.participant_id)) continue;
    items.push_back(&r);
  }

  const std::string partial_path = out_path + ".partial";
  auto done = read_existing(out_path, cfg.run_id);
  for (auto& [id, r] : read_existing(partial_path, cfg.run_id)) done.insert_or_assign(id, std::move(r));

  BatchSummary summary;
  summary.n_items = items.size();
  std::vector<std::optional<PredictionRecord>> results(items.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (auto it = done.find(image_id(*items[i])); it != done.end()) {
      results[i] = it->second;
      ++summary.n_skipped;
    } else {
      todo.push_back(i);
    }
  }

  if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
  std::ofstream partial(partial_path, std::ios::binary | std::ios::app);
  if (!partial) throw Error("cannot write " + partial_path);
  std::mutex partial_mu;

  auto predict = [&](const ImageRecord& r) {
    PredictionRecord rec = base_record(targets);
    const auto path = dataset.image_path(r);
    if (!path) {
      rec.error = "record has no image_ref";
    } else if (cfg.pipeline == Pipeline::DualEncoder) {
      rec = classify_dual_encoder(*path, targets, gateway, cfg.abstain_below);
    } else {
      try {
        const auto caption = gateway.caption_image(*path, cfg.prompt->text, *cfg.max_new_tokens);
        rec = map_caption(caption, targets, gateway, cfg.abstain_below);
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      rec.prompt_id = cfg.prompt->id;
      rec.max_new_tokens = cfg.max_new_tokens;
    }
    rec.image_id = image_id(r);
    rec.run_id = cfg.run_id;
    return rec;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < todo.size();) {
      const std::size_t i = todo[k];
      PredictionRecord rec = predict(*items[i]);
      if (rec.ok()) {
        std::lock_guard lock(partial_mu);
        partial << rec.to_json_line() << std::flush;
      } else {
        spdlog::warn("{}: {}", rec.image_id, *rec.error);
      }
      results[i] = std::move(rec);
    }
  };
  const std::size_t width = std::max<std::size_t>(1, std::min(cfg.width, todo.size()));
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  partial.close();

  std::string out;
  for (const auto& r : results) {
    if (r->ok()) {
      ++summary.n_predicted;
    } else {
      ++summary.n_failed;
    }
    out += r->to_json_line();
  }
  write_file_atomic(out_path, out);
  fs::remove(partial_path);
  return summary;
}

}  // namespace camannot
