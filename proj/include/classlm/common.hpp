#pragma once

#include <charconv>
#include <map>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace classlm {

using WordId = std::int32_t;
using ClusterId = std::int32_t;
using Count = std::int64_t;

/// Bad parameters or an inconsistent combination of inputs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A move that is not permitted (frozen element, identical source and target).
class InvalidMove : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed artifact file or mismatched vocabulary checksum.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model produced a non-positive probability for a scored event.
class ModelIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x < 0 ? "-inf" : "inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "-inf") return -INFINITY;
  if (s == "inf") return INFINITY;
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return x;
}

inline std::int64_t parse_int(std::string_view s) {
  std::int64_t x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return x;
}

inline std::string hex64(std::uint64_t x) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) out[i] = digits[x & 0xf];
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == '\n' ||
                               line[i] == '\f' || line[i] == '\v'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && !(line[j] == ' ' || line[j] == '\t' || line[j] == '\r' || line[j] == '\n' ||
                                line[j] == '\f' || line[j] == '\v'))
      ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Artifact header lines look like "#kind key=value key=value ...".
struct Header {
  std::string kind;
  std::map<std::string, std::string, std::less<>> fields;

  const std::string& at(std::string_view key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("header '" + kind + "' lacks field '" + std::string(key) + "'");
    return it->second;
  }
};

inline Header parse_header(std::string_view line, std::string_view expected_kind) {
  auto toks = split_ws(line);
  if (toks.empty() || toks[0].size() < 2 || toks[0][0] != '#')
    throw FormatError("missing artifact header, expected '#" + std::string(expected_kind) + "'");
  Header h;
  h.kind = std::string(toks[0].substr(1));
  if (h.kind != expected_kind)
    throw FormatError("unexpected artifact kind '" + h.kind + "', expected '" + std::string(expected_kind) + "'");
  for (std::size_t i = 1; i < toks.size(); ++i) {
    auto eq = toks[i].find('=');
    if (eq == std::string_view::npos) throw FormatError("bad header field '" + std::string(toks[i]) + "'");
    h.fields.emplace(std::string(toks[i].substr(0, eq)), std::string(toks[i].substr(eq + 1)));
  }
  return h;
}

}  // namespace detail
}  // namespace classlm
