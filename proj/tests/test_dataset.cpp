#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "camannot/dataset.hpp"
#include "camannot/error.hpp"
#include "support.hpp"

using namespace camannot;

namespace {

LabelDictionary dictionary() {
  std::istringstream in(
      "raw_label,intensity,source,reason\n"
      "7030 sleeping,Sleep,2011,\n"
      "5060 shopping miscellaneous,LIPA,2011,\n"
      "9060 sitting reading,SB,2011,\n");
  return LabelDictionary::read_csv(in);
}

IngestResult ingest_text(const std::string& csv, const std::string* participants = nullptr) {
  std::istringstream in(csv);
  if (participants) {
    std::istringstream p(*participants);
    return ingest_csv(in, "study", dictionary(), &p);
  }
  return ingest_csv(in, "study", dictionary());
}

}  // namespace

TEST_CASE("ingest maps labels through the dictionary") {
  const auto r = ingest_text(
      "participant_id,timestamp,raw_label\n"
      "p1,2014-05-02T10:00:00Z,7030 sleeping\n"
      "p1,2014-05-02T10:00:20Z,uncodeable;0001 camera taken off\n"
      "p1,2014-05-02T10:00:40Z,5060 shopping miscellaneous\n");
  CHECK(r.errors.empty());
  REQUIRE(r.dataset.records.size() == 3);
  CHECK(r.dataset.records[0].intensity == Intensity::Sleep);
  CHECK(r.dataset.records[1].intensity == Intensity::Unknown);
  CHECK(r.dataset.records[2].intensity == Intensity::LIPA);
  CHECK(r.dataset.unmapped_labels.empty());
}

TEST_CASE("ingest edge cases") {
  SUBCASE("empty file with header") {
    const auto r = ingest_text("participant_id,timestamp,raw_label,image_ref\n");
    CHECK(r.dataset.records.empty());
    CHECK(r.dataset.participants.empty());
  }
  SUBCASE("malformed timestamp is a row error with its line") {
    const auto r = ingest_text("participant_id,timestamp,raw_label\np1,not-a-date,7030 sleeping\n");
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].line == 2);
    CHECK(r.errors[0].message.find("not-a-date") != std::string::npos);
  }
  SUBCASE("duplicate timestamps keep the first row") {
    const auto r = ingest_text(
        "participant_id,timestamp,raw_label\n"
        "p1,2014-05-02T10:00:00Z,7030 sleeping\n"
        "p1,2014-05-02T11:00:00+01:00,9060 sitting reading\n");
    REQUIRE(r.dataset.records.size() == 1);
    CHECK(r.dataset.records[0].raw_label == "7030 sleeping");
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("duplicate") != std::string::npos);
  }
  SUBCASE("missing required column is fatal") {
    CHECK_THROWS_AS(ingest_text("participant_id,raw_label\np1,x\n"), Error);
    CHECK_THROWS_AS(ingest_text(""), Error);
  }
  SUBCASE("unmapped labels are logged as gaps") {
    const auto r = ingest_text("participant_id,timestamp,raw_label\np1,2014-05-02T10:00:00Z,9999 Juggling\n");
    CHECK(r.dataset.records[0].intensity == Intensity::Unknown);
    CHECK(r.dataset.unmapped_labels == std::map<std::string, std::size_t>{{"9999 juggling", 1}});
  }
  SUBCASE("participants sidecar") {
    const std::string people = "id,age,sex\np1,34,F\np2,512,male\np3,,x\n";
    const auto r = ingest_text("participant_id,timestamp,raw_label\np1,2014-05-02T10:00:00Z,7030 sleeping\n", &people);
    REQUIRE(r.dataset.participants.size() == 3);
    CHECK(r.dataset.participant("p1")->age == 34);
    CHECK(r.dataset.participant("p1")->sex == Sex::Female);
    CHECK_FALSE(r.dataset.participant("p2")->age);
    CHECK(r.dataset.participant("p2")->sex == Sex::Male);
    CHECK_FALSE(r.dataset.participant("p3")->sex);
    CHECK(r.warnings.size() == 2);
  }
}

TEST_CASE("records are sorted by participant and time") {
  std::mt19937_64 rng(9);
  std::string csv = "participant_id,timestamp,raw_label\n";
  for (int i = 0; i < 400; ++i) {
    csv += "p" + std::to_string(rng() % 7) + "," + format_iso8601(1400000000 + static_cast<UnixSeconds>(rng() % 100000)) +
           ",7030 sleeping\n";
  }
  const auto r = ingest_text(csv);
  const auto& recs = r.dataset.records;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    CHECK(std::tie(recs[i - 1].participant_id, recs[i - 1].timestamp) <
          std::tie(recs[i].participant_id, recs[i].timestamp));
  }
  for (const auto& p : r.dataset.participants) {
    for (const auto& rec : r.dataset.records_of(p.id)) CHECK(rec.participant_id == p.id);
  }
  // Re-ingesting the export reproduces the dataset.
  const auto again = ingest_text(export_annotations_csv(r.dataset));
  CHECK(again.dataset == r.dataset);
}

TEST_CASE("image ids") {
  CHECK(image_id("p1", 1399026093) == "p1@20140502T102133Z");
}

TEST_CASE("split sizes follow the floor policy") {
  CHECK(split_sizes(161) == SplitSizes{113, 24, 24});
  CHECK(split_sizes(20) == SplitSizes{14, 3, 3});
  CHECK(split_sizes(3) == SplitSizes{3, 0, 0});
  CHECK_THROWS_AS(split_sizes(10, SplitFractions{0.5, 0.5, 0.5}), Error);

  std::vector<std::string> ids;
  for (int i = 0; i < 161; ++i) ids.push_back("P" + std::to_string(i));
  const auto a = split_participants(ids, 0);
  std::size_t counts[3] = {};
  for (const auto& s : a) ++counts[static_cast<int>(s.split)];
  CHECK(counts[0] == 113);
  CHECK(counts[1] == 24);
  CHECK(counts[2] == 24);
  CHECK(split_participants(ids, 0) == a);
  CHECK(split_participants(ids, 1) != a);
  // Input order does not matter.
  std::reverse(ids.begin(), ids.end());
  CHECK(split_participants(ids, 0) == a);

  CHECK_THROWS_AS(split_participants(std::vector<std::string>{"a", "b"}, 0), Error);
  CHECK_THROWS_AS(split_participants(std::vector<std::string>{"a", "a", "b"}, 0), Error);

  const auto back = splits_from_json(splits_to_json(a, {}));
  CHECK(back == a);
}

TEST_CASE("persist and load round trip") {
  testing::TempDir tmp;
  const std::string people = "id,age,sex\np/1,34,F\np2,,\n";
  auto r = ingest_text(
      "participant_id,timestamp,raw_label,image_ref\n"
      "p/1,2014-05-02T10:00:00Z,7030 sleeping,img/a.jpg\n"
      "p2,2014-05-02T10:00:20Z,\"quoted, label\",\n"
      "p2,2014-05-02T10:00:40Z,5060 shopping miscellaneous,b.jpg\n",
      &people);
  r.dataset.image_root = "/data/images";
  persist(r.dataset, tmp.str("a"));
  persist(r.dataset, tmp.str("b"));
  const Dataset loaded = load(tmp.str("a"));
  CHECK(loaded == r.dataset);
  for (const auto& e : std::filesystem::recursive_directory_iterator(tmp.path() / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), tmp.path() / "a");
    CHECK(testing::slurp(e.path().string()) == testing::slurp((tmp.path() / "b" / rel).string()));
  }
  CHECK(std::filesystem::exists(tmp.path() / "a" / "records" / "p%2F1.jsonl"));
  CHECK(loaded.image_path(loaded.records[0]) == "/data/images/img/a.jpg");
}

TEST_CASE("load errors") {
  testing::TempDir tmp;
  CHECK_THROWS_WITH_AS(load(tmp.str()), doctest::Contains("missing manifest"), Error);
  testing::write_text(tmp.str("manifest.json"), "{not json");
  CHECK_THROWS_WITH_AS(load(tmp.str()), doctest::Contains("manifest.json"), Error);
}
