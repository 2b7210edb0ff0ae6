#pragma once

// The hand-wired three-patient evaluation fixture, shared with the acceptance runner.

#include "json.hpp"

#include "medsuggest/net.hpp"
#include "medsuggest/world.hpp"

namespace fixtures {

using namespace medsuggest;

/// Symptoms s1, s2; tests t1, t2 (one abnormal category each); diseases d0, d1.
inline WorldModel fixture_world() {
  return parse_world(nlohmann::json::parse(R"({
    "diseases": ["d0", "d1"],
    "symptoms": ["s1", "s2"],
    "tests": [{"id": "t1", "categories": 1}, {"id": "t2", "categories": 1}],
    "cpt": {
      "d0": {"s1": [0.5, 0.5], "s2": [0.5, 0.5], "t1": [0.5, 0.5], "t2": [0.5, 0.5]},
      "d1": {"s1": [0.5, 0.5], "s2": [0.5, 0.5], "t1": [0.5, 0.5], "t2": [0.5, 0.5]}
    }
  })"));
}

inline void set_weight(Params& p, std::size_t layer, std::size_t row, std::size_t col, double value) {
  const auto& l = p.layers()[layer];
  p.mutable_values()[l.weight_offset + row * l.in + col] = value;
}

inline void set_bias(Params& p, std::size_t layer, std::size_t row, double value) {
  p.mutable_values()[p.layers()[layer].bias_offset + row] = value;
}

/// Hand-wired policy: q2 when s1 is known present, q1 otherwise; MED
/// suggests t1 (and t2 when `both`); DIS always ranks d0 first.
inline Params fixture_policy(const WorldModel& w, bool both) {
  Params p(NetConfig::for_world(w, {2, 2}, 2));
  set_weight(p, 0, 0, 0, 1.0);  // h0[0] = relu(s1 slot)
  set_weight(p, 1, 0, 0, 1.0);
  set_weight(p, hidden_layer(Head::Sym), 0, 0, 1.0);
  const std::size_t q1 = 2, q2 = 3;
  set_bias(p, output_layer(Head::Sym), q1, 1.0);
  set_weight(p, output_layer(Head::Sym), q2, 0, 10.0);
  set_bias(p, output_layer(Head::Med), 0, 2.0);
  set_bias(p, output_layer(Head::Med), 1, both ? 2.0 : -2.0);
  set_bias(p, output_layer(Head::Dis), 0, 1.0);
  return p;
}

inline Patient make(std::size_t disease, std::vector<int> values, std::size_t initial) {
  Patient p;
  p.disease = disease;
  p.values = std::move(values);  // s1, s2, t1, t2
  p.initial_symptom = initial;
  return p;
}

/// A: starts with s1 (quits to DIS); B and C start with s2 (go to MED).
inline Dataset fixture_dataset(const WorldModel& w) {
  Dataset ds;
  ds.world = &w;
  ds.patients = {make(0, {1, -1, 1, -1}, 0), make(1, {-1, 1, 1, 1}, 1), make(0, {1, 1, -1, 1}, 1)};
  for (const auto& p : ds.patients) validate_patient(w, p);
  return ds;
}

}  // namespace fixtures
