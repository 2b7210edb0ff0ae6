#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "medsuggest/world.hpp"
#include "medsuggest/worldgen.hpp"

namespace testsupport {

inline std::filesystem::path data_dir() { return MEDSUGGEST_DATA_DIR; }

inline medsuggest::WorldModel world_from(const nlohmann::json& doc) { return medsuggest::parse_world(doc); }

/// sex {F,M}; symptoms s1..s3; one test t1 with 2 abnormal categories; two
/// diseases with hand-picked rows.
inline nlohmann::json tiny_world_doc() {
  return nlohmann::json::parse(R"({
    "diseases": ["flu", "cold"],
    "demographics": [{"id": "sex", "values": ["F", "M"]}],
    "symptoms": ["s1", "s2", "s3"],
    "tests": [{"id": "t1", "categories": 2}],
    "cpt": {
      "flu":  {"sex": [0.5, 0.5], "s1": [0.2, 0.8], "s2": [0.5, 0.5], "s3": [0.9, 0.1], "t1": [0.5, 0.3, 0.2]},
      "cold": {"sex": [0.4, 0.6], "s1": [0.7, 0.3], "s2": [0.1, 0.9], "s3": [0.6, 0.4], "t1": [0.9, 0.05, 0.05]}
    }
  })");
}

inline medsuggest::WorldModel tiny_world() { return world_from(tiny_world_doc()); }

/// Two diseases that share one always-present symptom and nothing else.
inline medsuggest::WorldModel bandit_world() {
  return world_from(nlohmann::json::parse(R"({
    "diseases": ["d0", "d1"],
    "symptoms": ["s"],
    "cpt": {"d0": {"s": [0.0, 1.0]}, "d1": {"s": [0.0, 1.0]}}
  })"));
}

/// Disease i presents symptom i with probability `own`, every other symptom
/// with probability `other`; one uninformative test.
inline medsuggest::WorldModel separable_world(std::size_t n, double own = 0.9, double other = 0.05) {
  nlohmann::json doc;
  std::vector<std::string> diseases, symptoms;
  for (std::size_t i = 0; i < n; ++i) {
    diseases.push_back("d" + std::to_string(i));
    symptoms.push_back("s" + std::to_string(i));
  }
  doc["diseases"] = diseases;
  doc["symptoms"] = symptoms;
  doc["tests"] = nlohmann::json::array({{{"id", "noise"}, {"categories", 1}}});
  for (std::size_t d = 0; d < n; ++d) {
    nlohmann::json table;
    for (std::size_t s = 0; s < n; ++s) {
      const double p = s == d ? own : other;
      table[symptoms[s]] = {1.0 - p, p};
    }
    table["noise"] = {0.9, 0.1};
    doc["cpt"][diseases[d]] = table;
  }
  return world_from(doc);
}

/// Generated world whose observation vector has exactly 32 entries: 24
/// symptoms, 4 tests and two binary demographics.
inline medsuggest::WorldModel probe_world() {
  medsuggest::WorldRecipe r;
  r.seed = 21;
  r.demographics = {{"sex", {"F", "M"}}, {"age", {"young", "old"}}};
  r.groups = {{"a1", "a2"}, {"b1", "b2"}, {"c"}};
  r.num_symptoms = 24;
  r.tests = {{"t1", 2}, {"t2", 1}, {"t3", 3}, {"t4", 1}};
  return medsuggest::generate_world(r);
}

/// Upper regularized incomplete gamma Q(a, x), series or continued fraction.
inline double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 1000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

/// Pearson chi-square goodness-of-fit p-value of counts against probabilities.
inline double chi_square_p(std::span<const std::size_t> counts, std::span<const double> probs) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  double stat = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = total * probs[i];
    if (expected <= 0.0) continue;
    stat += (static_cast<double>(counts[i]) - expected) * (static_cast<double>(counts[i]) - expected) / expected;
    ++cells;
  }
  return gamma_q(0.5 * static_cast<double>(cells - 1), 0.5 * stat);
}

/// |hits/n - p| within `sigmas` binomial standard deviations.
inline bool within_binomial(std::size_t hits, std::size_t n, double p, double sigmas = 3.0) {
  const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return std::abs(static_cast<double>(hits) / static_cast<double>(n) - p) <= sigmas * sd;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testsupport
