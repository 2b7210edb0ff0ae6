#include "medsuggest/env.hpp"

#include <algorithm>

namespace medsuggest {

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::Sym: return "SYM";
    case Stage::Med: return "MED";
    case Stage::Dis: return "DIS";
    case Stage::Terminal: return "TERMINAL";
  }
  return "?";
}

std::size_t EpisodeState::known_count() const {
  return static_cast<std::size_t>(std::count(known.begin(), known.end(), std::uint8_t{1}));
}


std::string describe(const EnvAction& action, const WorldModel& world) {
  const auto& schema = world.schema();
  return std::visit(
      overloaded{
          [&](const QuerySymptom& q) { return "query " + schema.symptoms().at(q.symptom); },
          [](const Quit1&) { return std::string("quit1"); },
          [](const Quit2&) { return std::string("quit2"); },
          [&](const SuggestTests& s) {
            std::string out = "suggest {";
            bool first = true;
            for (auto t : s.tests.members()) {
              if (!first) out += ",";
              out += schema.tests().at(t).id;
              first = false;
            }
            return out + "}";
          },
          [&](const PredictDisease& p) { return "predict " + world.diseases().at(p.disease); },
      },
      action);
}

Stage action_stage(const EnvAction& action) {
  return std::visit(overloaded{
                        [](const QuerySymptom&) { return Stage::Sym; },
                        [](const Quit1&) { return Stage::Sym; },
                        [](const Quit2&) { return Stage::Sym; },
                        [](const SuggestTests&) { return Stage::Med; },
                        [](const PredictDisease&) { return Stage::Dis; },
                    },
                    action);
}

std::vector<double> encode_known(const FeatureSchema& schema, std::span<const int> values,
                                 std::span<const std::uint8_t> known) {
  std::vector<double> obs(schema.observation_dim(), 0.0);
  std::size_t slot = 0;
  for (std::size_t s = 0; s < schema.num_symptoms(); ++s, ++slot) {
    const auto f = schema.symptom_feature(s);
    if (known[f]) obs[slot] = values[f];
  }
  for (std::size_t t = 0; t < schema.num_tests(); ++t, ++slot) {
    const auto f = schema.test_feature(t);
    if (known[f]) obs[slot] = values[f];
  }
  for (std::size_t d = 0; d < schema.num_demographics(); ++d) {
    const auto width = schema.demographics()[d].values.size();
    if (known[d]) obs[slot + static_cast<std::size_t>(values[d])] = 1.0;
    slot += width;
  }
  return obs;
}

StagewiseEnv::StagewiseEnv(const WorldModel& world, const HyperParams& hp) : world_(&world), hp_(hp) {
  hp_.validate();
}

EpisodeState StagewiseEnv::reset(const Patient& patient) const {
  const auto& schema = world_->schema();
  EpisodeState s;
  s.patient = patient;
  s.known.assign(schema.num_features(), 0);
  for (std::size_t d = 0; d < schema.num_demographics(); ++d) s.known[d] = 1;
  s.known[schema.symptom_feature(patient.initial_symptom)] = 1;
  s.t = 0;
  s.stage = Stage::Sym;
  return s;
}

std::vector<EnvAction> StagewiseEnv::legal_actions(const EpisodeState& state) const {
  const auto& schema = world_->schema();
  std::vector<EnvAction> out;
  switch (state.stage) {
    case Stage::Sym:
      for (std::size_t s = 0; s < schema.num_symptoms(); ++s)
        if (!state.is_known(schema.symptom_feature(s))) out.emplace_back(QuerySymptom{s});
      out.emplace_back(Quit1{});
      out.emplace_back(Quit2{});
      break;
    case Stage::Med:
      out.emplace_back(SuggestTests{ActionSet::all(schema.num_tests())});
      break;
    case Stage::Dis:
      for (std::size_t d = 0; d < world_->num_diseases(); ++d) out.emplace_back(PredictDisease{d});
      break;
    case Stage::Terminal:
      throw IllegalAction("legal_actions: episode already terminated");
  }
  return out;
}

double StagewiseEnv::abnormality_reward(const EpisodeState& state) const {
  const auto& schema = world_->schema();
  std::size_t count = 0;
  for (std::size_t f = schema.num_demographics(); f < schema.num_features(); ++f)
    if (state.is_known(f) && state.patient.values[f] > 0) ++count;
  return hp_.abnormality_weight * static_cast<double>(count);
}

StepResult StagewiseEnv::step(const EpisodeState& state, const EnvAction& action) const {
  const auto& schema = world_->schema();
  if (state.stage == Stage::Terminal) throw IllegalAction("step: episode already terminated");
  if (action_stage(action) != state.stage)
    throw IllegalAction(std::string("step: action not legal in stage ") + stage_name(state.stage));

  StepResult r{state, 0.0, false};
  r.next.t = state.t + 1;
  std::visit(overloaded{
                 [&](const QuerySymptom& q) {
                   if (q.symptom >= schema.num_symptoms()) throw IllegalAction("step: unknown symptom");
                   const auto f = schema.symptom_feature(q.symptom);
                   if (state.is_known(f)) throw IllegalAction("step: symptom already known");
                   if (state.t >= hp_.query_limit) {
                     r.next.stage = Stage::Terminal;
                     r.reward = -hp_.wrong_penalty + abnormality_reward(state);
                     r.done = true;
                   } else {
                     r.next.known[f] = 1;
                   }
                 },
                 [&](const Quit1&) { r.next.stage = Stage::Med; },
                 [&](const Quit2&) { r.next.stage = Stage::Dis; },
                 [&](const SuggestTests& s) {
                   if (s.tests.universe() != schema.num_tests())
                     throw IllegalAction("step: suggestion universe does not match the test list");
                   for (auto t : s.tests.members()) r.next.known[schema.test_feature(t)] = 1;
                   r.next.stage = Stage::Dis;
                   r.reward = -hp_.test_cost * static_cast<double>(s.tests.count());
                 },
                 [&](const PredictDisease& p) {
                   if (p.disease >= world_->num_diseases()) throw IllegalAction("step: unknown disease");
                   const double pred =
                       p.disease == state.patient.disease ? hp_.correct_reward : -hp_.wrong_penalty;
                   r.next.stage = Stage::Terminal;
                   r.reward = pred + abnormality_reward(state);
                   r.done = true;
                 },
             },
             action);
  return r;
}

std::vector<double> StagewiseEnv::encode_observation(const EpisodeState& state) const {
  return encode_known(world_->schema(), state.patient.values, state.known);
}

nlohmann::json trace_record(const WorldModel& world, const EpisodeState& before, const EnvAction& action,
                            const StepResult& result) {
  return {{"t", before.t},
          {"stage", stage_name(before.stage)},
          {"action", describe(action, world)},
          {"reward", result.reward},
          {"known", result.next.known_count()},
          {"done", result.done}};
}

}  // namespace medsuggest
