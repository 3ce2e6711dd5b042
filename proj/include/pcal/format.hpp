#ifndef PCAL_FORMAT_HPP
#define PCAL_FORMAT_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

#include "admm.hpp"
#include "certify.hpp"
#include "types.hpp"

namespace pcal {

/// Shortest text that parses back to the same double. Non-finite values
/// become "inf", "-inf" and "nan".
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("not a number: '" + std::string(s) + "'");
  }
  return v;
}

template <typename Int>
Int parse_integer(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("not a boolean: '" + std::string(s) + "'");
}

// G values in tables: the number itself, or the sentinel.
inline std::string format_g(const GValue& g) {
  switch (g.status) {
    case GStatus::finite: return format_double(g.value);
    case GStatus::unbounded_below: return "-inf";
    case GStatus::infeasible: return "infeasible";
    case GStatus::not_computed: return "not-computed";
  }
  return "not-computed";
}

inline GValue parse_g(std::string_view s) {
  if (s == "-inf") return GValue::unbounded_below();
  if (s == "infeasible") return GValue::infeasible();
  if (s == "not-computed") return GValue{};
  return GValue::finite(parse_double(s));
}

/// Outcome of one of the three solves inside a trial.
struct StageStatus {
  std::optional<SolveStatus> status;
  bool aborted = false;

  bool operator==(const StageStatus&) const = default;
};

inline std::string format_stage(const StageStatus& s) {
  if (s.aborted) return "aborted";
  return s.status ? to_string(*s.status) : "not-computed";
}

inline StageStatus parse_stage(std::string_view s) {
  if (s == "aborted") return {std::nullopt, true};
  if (s == "not-computed") return {};
  return {solve_status_from_string(std::string(s)), false};
}

/// 64-bit FNV-1a, used for config fingerprints that must be stable across
/// builds and platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pcal

#endif  // PCAL_FORMAT_HPP
