#include "camannot/timeutil.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>

namespace camannot {

namespace {

bool read_digits(std::string_view s, std::size_t& pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const char c = s[pos + k];
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    v = v * 10 + (c - '0');
  }
  pos += count;
  out = v;
  return true;
}

bool expect(std::string_view s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c) return false;
  ++pos;
  return true;
}

}  // namespace

std::optional<UnixSeconds> parse_iso8601(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);

  std::size_t p = 0;
  int year, month, day, hour, minute, second;
  if (!read_digits(s, p, 4, year) || !expect(s, p, '-') || !read_digits(s, p, 2, month) ||
      !expect(s, p, '-') || !read_digits(s, p, 2, day)) {
    return std::nullopt;
  }
  if (p >= s.size() || (s[p] != 'T' && s[p] != 't' && s[p] != ' ')) return std::nullopt;
  ++p;
  if (!read_digits(s, p, 2, hour) || !expect(s, p, ':') || !read_digits(s, p, 2, minute) ||
      !expect(s, p, ':') || !read_digits(s, p, 2, second)) {
    return std::nullopt;
  }
  if (p < s.size() && (s[p] == '.' || s[p] == ',')) {
    ++p;
    const std::size_t start = p;
    while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p;
    if (p == start) return std::nullopt;
  }
  int offset_s = 0;
  if (p < s.size()) {
    if (s[p] == 'Z' || s[p] == 'z') {
      ++p;
    } else if (s[p] == '+' || s[p] == '-') {
      const int sign = s[p] == '+' ? 1 : -1;
      ++p;
      int oh, om = 0;
      if (!read_digits(s, p, 2, oh)) return std::nullopt;
      if (p < s.size()) {
        if (s[p] == ':') ++p;
        if (!read_digits(s, p, 2, om)) return std::nullopt;
      }
      if (oh > 23 || om > 59) return std::nullopt;
      offset_s = sign * (oh * 3600 + om * 60);
    } else {
      return std::nullopt;
    }
  }
  if (p != s.size()) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<UnixSeconds>(days) * 86400 + hour * 3600 + minute * 60 + second - offset_s;
}

namespace {

struct Civil {
  int y;
  unsigned mo, d, h, mi, s;
};

Civil to_civil(UnixSeconds t) {
  using namespace std::chrono;
  UnixSeconds days = t / 86400;
  UnixSeconds rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
          static_cast<unsigned>(rem / 3600), static_cast<unsigned>((rem % 3600) / 60),
          static_cast<unsigned>(rem % 60)};
}

}  // namespace

std::string format_iso8601(UnixSeconds t) {
  const Civil c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:%02u:%02uZ", c.y, c.mo, c.d, c.h, c.mi, c.s);
  return buf;
}

std::string format_compact(UnixSeconds t) {
  const Civil c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%02u%02uT%02u%02u%02uZ", c.y, c.mo, c.d, c.h, c.mi, c.s);
  return buf;
}

UnixSeconds now_utc() {
  using namespace std::chrono;
  return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace camannot
