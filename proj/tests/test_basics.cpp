#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "camannot/digest.hpp"
#include "camannot/embedding.hpp"
#include "camannot/error.hpp"
#include "camannot/intensity.hpp"
#include "camannot/stats.hpp"
#include "camannot/text.hpp"
#include "camannot/timeutil.hpp"

using namespace camannot;

TEST_CASE("normalize_label collapses whitespace around separators") {
  CHECK(normalize_label("  Transportation ;  Walking;12150   Running ") == "transportation;walking;12150 running");
  CHECK(normalize_label("") == "");
  CHECK(word_tokens("Home-activity; 5060 Shopping!") == std::vector<std::string>{"home", "activity", "5060", "shopping"});
}

TEST_CASE("csv reader handles quotes, CRLF, BOM and blank lines") {
  std::istringstream in("\xEF\xBB\xBF" "a,b,c\r\n\"x,1\",\"say \"\"hi\"\"\",\"multi\nline\"\r\n\r\nlast,,\n");
  const auto rows = read_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].fields == std::vector<std::string>{"a", "b", "c"});
  CHECK(rows[1].fields == std::vector<std::string>{"x,1", "say \"hi\"", "multi\nline"});
  CHECK(rows[1].line == 2);
  CHECK(rows[2].fields == std::vector<std::string>{"last", "", ""});
  CHECK(rows[2].line == 5);

  const std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", "new\nline"};
  std::istringstream back(csv_line(fields));
  CHECK(read_csv(back).front().fields == fields);
}

TEST_CASE("edit distance") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("--threshold", "--thresold") == 1);
}

TEST_CASE("iso8601 parsing and formatting") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601("2014-05-02T10:21:33Z") == 1399026093);
  CHECK(parse_iso8601("2014-05-02 10:21:33") == 1399026093);
  CHECK(parse_iso8601("2014-05-02T11:21:33+01:00") == 1399026093);
  CHECK(parse_iso8601("2014-05-02T05:21:33-0500") == 1399026093);
  CHECK(parse_iso8601("2014-05-02T10:21:33.750Z") == 1399026093);
  CHECK(parse_iso8601("2000-02-29T00:00:00Z") == 951782400);
  CHECK_FALSE(parse_iso8601("2014-13-02T10:21:33Z"));
  CHECK_FALSE(parse_iso8601("2014-02-30T10:21:33Z"));
  CHECK_FALSE(parse_iso8601("yesterday"));
  CHECK_FALSE(parse_iso8601(""));
  CHECK(format_iso8601(1399026093) == "2014-05-02T10:21:33Z");
  CHECK(format_compact(1399026093) == "20140502T102133Z");
  CHECK(format_iso8601(-1) == "1969-12-31T23:59:59Z");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const UnixSeconds t = static_cast<UnixSeconds>(rng() % 4000000000ULL) - 1000000000;
    CHECK(parse_iso8601(format_iso8601(t)) == t);
  }
}

TEST_CASE("digests and encodings") {
  CHECK(to_hex(sha256("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_decode("Zm8=") == "fo");
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  CHECK(base64_decode(base64_encode(bytes)) == bytes);
}

TEST_CASE("counter rng is stateless and in range") {
  const CounterRng a(42), b(42);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    CHECK(a.bits(i) == b.bits(i));
    const double u = a.unit(i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.index(i, 7) < 7);
  }
  CHECK(a.bits(3) != CounterRng(43).bits(3));
  // index() is roughly uniform
  std::array<int, 4> hist{};
  for (std::uint64_t i = 0; i < 40000; ++i) ++hist[a.index(i, 4)];
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("quartile summary") {
  auto s = quartile_summary({0.2});
  CHECK(s.min == 0.2);
  CHECK(s.q1 == 0.2);
  CHECK(s.median == 0.2);
  CHECK(s.max == 0.2);
  s = quartile_summary({4, 0, 3, 1, 2});
  CHECK(s.min == 0);
  CHECK(s.q1 == 1);
  CHECK(s.median == 2);
  CHECK(s.q3 == 3);
  CHECK(s.max == 4);
  CHECK(s.n == 5);
  s = quartile_summary({1, 2, 3, 4});
  CHECK(s.q1 == doctest::Approx(1.75));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.q3 == doctest::Approx(3.25));
  CHECK_THROWS_AS(quartile_summary({}), Error);
  CHECK_FALSE(quartile_summary_defined({std::nullopt}));
  CHECK(quartile_summary_defined({std::nullopt, 3.0, 1.0})->n == 2);
}

TEST_CASE("quartile summary matches the interpolation formula on random lists") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(-5, 5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> v(1 + rng() % 40);
    for (auto& x : v) x = val(rng);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    auto oracle = [&](double p) {
      const double h = (static_cast<double>(sorted.size()) - 1) * p;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const auto s = quartile_summary(v);
    CHECK(s.min == sorted.front());
    CHECK(s.max == sorted.back());
    CHECK(s.q1 == doctest::Approx(oracle(0.25)).epsilon(1e-12));
    CHECK(s.median == doctest::Approx(oracle(0.5)).epsilon(1e-12));
    CHECK(s.q3 == doctest::Approx(oracle(0.75)).epsilon(1e-12));
    CHECK(s.min <= s.q1);
    CHECK(s.q1 <= s.median);
    CHECK(s.median <= s.q3);
    CHECK(s.q3 <= s.max);
  }
}

TEST_CASE("cosine similarity") {
  const std::vector<float> a{1, 0, 0}, b{0, 2, 0}, c{3, 0, 0}, z{0, 0, 0};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, z) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<float>{1, 0}), Error);
  const auto u = unit_normalized(std::vector<double>{3, 4});
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[1] == doctest::Approx(0.8));
}

TEST_CASE("intensity names") {
  CHECK(parse_intensity("sb") == Intensity::SB);
  CHECK(parse_intensity("Lipa") == Intensity::LIPA);
  CHECK(parse_intensity("SLEEP") == Intensity::Sleep);
  CHECK_FALSE(parse_intensity("vigorous"));
  for (auto c : {Intensity::SB, Intensity::LIPA, Intensity::MVPA, Intensity::Sleep, Intensity::Unknown})
    CHECK(parse_intensity(to_string(c)) == c);
}
