#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "densematch/errors.hpp"
#include "densematch/matchers.hpp"
#include "densematch/synth_bench.hpp"

namespace densematch {

/// Real formatting for CSV and parameter headers: 9 significant digits,
/// locale-independent.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline nlohmann::ordered_json matches_to_json(const CorrespondenceMap& corr,
                                              int s_h, int s_w,
                                              const std::string& matcher) {
  if (corr.n_query() != s_h * s_w) {
    throw std::invalid_argument("matches_to_json: shape mismatch");
  }
  nlohmann::ordered_json j;
  j["s_h"] = s_h;
  j["s_w"] = s_w;
  j["matcher"] = matcher;
  auto& arr = j["matches"] = nlohmann::ordered_json::array();
  for (int q = 0; q < corr.n_query(); ++q) {
    nlohmann::ordered_json m;
    m["query"] = q;
    const auto& e = corr.entry(q);
    if (e) {
      m["key"] = e->key;
      m["score"] = e->score;
    } else {
      m["key"] = nullptr;
      m["score"] = 0.0;
    }
    arr.push_back(std::move(m));
  }
  return j;
}

struct MatchFile {
  int s_h = 0;
  int s_w = 0;
  std::string matcher;
  CorrespondenceMap corr{1, 1};
};

/// Parses a match JSON document back into a correspondence map. Schema
/// violations raise ParseError.
inline MatchFile matches_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) -> ParseError {
    return ParseError(0, "match JSON: " + what);
  };
  if (!j.is_object()) throw fail("top level must be an object");
  for (const char* field : {"s_h", "s_w", "matcher", "matches"}) {
    if (!j.contains(field)) {
      throw fail(std::string("missing field \"") + field + "\"");
    }
  }
  if (!j["s_h"].is_number_integer() || !j["s_w"].is_number_integer()) {
    throw fail("s_h and s_w must be integers");
  }
  MatchFile out;
  out.s_h = j["s_h"].get<int>();
  out.s_w = j["s_w"].get<int>();
  if (out.s_h < 1 || out.s_w < 1) throw fail("grid dims must be positive");
  if (!j["matcher"].is_string()) throw fail("matcher must be a string");
  out.matcher = j["matcher"].get<std::string>();
  const auto& arr = j["matches"];
  if (!arr.is_array()) throw fail("matches must be an array");
  const int n = out.s_h * out.s_w;
  if (static_cast<int>(arr.size()) != n) {
    throw fail("matches length must equal s_h*s_w");
  }
  out.corr = CorrespondenceMap(n, n);
  for (int q = 0; q < n; ++q) {
    const auto& m = arr[static_cast<std::size_t>(q)];
    if (!m.is_object() || !m.contains("query") || !m.contains("key") ||
        !m.contains("score")) {
      throw fail("each match needs query, key, score");
    }
    if (!m["query"].is_number_integer() || m["query"].get<int>() != q) {
      throw fail("matches must be in query-index order");
    }
    if (m["key"].is_null()) continue;
    if (!m["key"].is_number_integer() || !m["score"].is_number()) {
      throw fail("key must be an integer or null, score a number");
    }
    const int key = m["key"].get<int>();
    if (key < 0 || key >= n) throw fail("key index out of range");
    out.corr.set(q, Match{key, m["score"].get<double>()});
  }
  return out;
}

/// CSV with '#' parameter comment lines, then the fixed header, then one
/// row per record. Bytes depend only on the inputs.
inline void write_bench_csv(
    std::ostream& os,
    const std::vector<std::pair<std::string, std::string>>& params,
    const std::vector<BenchRecord>& records) {
  for (const auto& [k, v] : params) {
    os << "# " << k << "=" << v << "\n";
  }
  os << "seed,matcher,s,outlier_frac,clutter_frac,noise_sigma,"
        "overlap_cells,accuracy,mean_score\n";
  for (const auto& r : records) {
    os << r.seed << ',' << r.matcher << ',' << r.s << ','
       << format_real(r.outlier_frac) << ',' << format_real(r.clutter_frac)
       << ',' << format_real(r.noise_sigma) << ',' << r.overlap_cells << ','
       << format_real(r.accuracy) << ',' << format_real(r.mean_score) << '\n';
  }
}

inline nlohmann::ordered_json bench_to_json(
    const std::vector<std::pair<std::string, std::string>>& params,
    const std::vector<BenchRecord>& records) {
  nlohmann::ordered_json j;
  auto& p = j["params"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : params) p[k] = v;
  auto& arr = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json o;
    o["seed"] = r.seed;
    o["matcher"] = r.matcher;
    o["s"] = r.s;
    o["outlier_frac"] = r.outlier_frac;
    o["clutter_frac"] = r.clutter_frac;
    o["noise_sigma"] = r.noise_sigma;
    o["overlap_cells"] = r.overlap_cells;
    o["accuracy"] = r.accuracy;
    o["mean_score"] = r.mean_score;
    arr.push_back(std::move(o));
  }
  return j;
}

}  // namespace densematch
