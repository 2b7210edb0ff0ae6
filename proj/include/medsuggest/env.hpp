#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "medsuggest/hyper.hpp"
#include "medsuggest/multiaction.hpp"
#include "medsuggest/world.hpp"

namespace medsuggest {

/// Visitor helper for EnvAction.
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

enum class Stage { Sym, Med, Dis, Terminal };
const char* stage_name(Stage stage);

/// Thrown when an action is not legal in the state's stage.
class IllegalAction : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// (known features, patient, step counter, stage). `known` is indexed by
/// global feature.
struct EpisodeState {
  std::vector<std::uint8_t> known;
  Patient patient;
  int t = 0;
  Stage stage = Stage::Sym;

  bool is_known(std::size_t feature) const { return known[feature] != 0; }
  std::size_t known_count() const;
};

struct QuerySymptom {
  std::size_t symptom = 0;
};
struct Quit1 {};  // to test suggestion
struct Quit2 {};  // straight to prediction
struct SuggestTests {
  ActionSet tests;
};
struct PredictDisease {
  std::size_t disease = 0;
};

using EnvAction = std::variant<QuerySymptom, Quit1, Quit2, SuggestTests, PredictDisease>;

std::string describe(const EnvAction& action, const WorldModel& world);
Stage action_stage(const EnvAction& action);

struct StepResult {
  EpisodeState next;
  double reward = 0.0;
  bool done = false;
};

/// Observation layout shared by the simulator and live sessions: one slot per
/// symptom then per test (value if known, else 0), then a one-hot block per
/// demographic (all zeros when unknown).
std::vector<double> encode_known(const FeatureSchema& schema, std::span<const int> values,
                                 std::span<const std::uint8_t> known);

/// The staged decision process over one patient. Stateless; every call is a
/// pure function of its arguments.
class StagewiseEnv {
 public:
  StagewiseEnv(const WorldModel& world, const HyperParams& hp);

  const WorldModel& world() const { return *world_; }
  const HyperParams& hyper() const { return hp_; }

  EpisodeState reset(const Patient& patient) const;

  /// SYM: unqueried symptom queries plus both quits. MED: one SuggestTests
  /// carrying the whole test universe. DIS: one prediction per disease.
  std::vector<EnvAction> legal_actions(const EpisodeState& state) const;

  StepResult step(const EpisodeState& state, const EnvAction& action) const;

  /// lambda times the number of known present symptoms and abnormal tests.
  double abnormality_reward(const EpisodeState& state) const;

  std::vector<double> encode_observation(const EpisodeState& state) const;

 private:
  const WorldModel* world_;
  HyperParams hp_;
};

/// One JSON-lines trace record for a transition.
nlohmann::json trace_record(const WorldModel& world, const EpisodeState& before, const EnvAction& action,
                            const StepResult& result);

}  // namespace medsuggest
