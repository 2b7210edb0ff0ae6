#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "medsuggest/checkpoint.hpp"
#include "medsuggest/env.hpp"
#include "medsuggest/hyper.hpp"
#include "medsuggest/trainer.hpp"

namespace medsuggest {

inline constexpr int kConsultSchemaVersion = 1;

enum class ConsultErrorCode {
  InvalidRequest,   // malformed body or value
  UnknownSession,
  SessionExpired,
  OutOfOrder,       // input does not match what the session is waiting for
  SessionFinished,
  NoCheckpoint,
  Capacity,
};

const char* error_code_name(ConsultErrorCode code);
int http_status(ConsultErrorCode code);

class ConsultError : public std::runtime_error {
 public:
  ConsultError(ConsultErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}
  ConsultErrorCode code() const { return code_; }
  const std::string& field() const { return field_; }
  nlohmann::json to_json() const;

 private:
  ConsultErrorCode code_;
  std::string field_;
};

struct RankedDisease {
  std::string disease;
  double probability = 0.0;
};

/// Descending probability; ties keep the lower disease index first.
std::vector<RankedDisease> rank_diseases(const WorldModel& world, std::span<const double> pi_dis);

/// What the human entered, in order. Enough to rebuild a session.
struct ConsultInputs {
  std::vector<std::size_t> demographics;  // category index per demographic
  std::size_t initial_symptom = 0;
  std::vector<std::pair<std::size_t, bool>> answers;  // (symptom, present)
  std::map<std::size_t, int> test_results;            // test -> -1 or 1..C
  bool tests_submitted = false;
};

struct TranscriptEntry {
  int t = 0;
  Stage stage = Stage::Sym;
  EnvAction action;
  std::optional<bool> answer;        // for answered queries
  std::map<std::size_t, int> results;  // for submitted suggestions
};

/// A consultation in progress. The human is the value oracle: only answered
/// features are set in `state.patient.values`, everything else is 0.
struct Session {
  std::string id;
  std::string checkpoint_id;
  ConsultInputs inputs;
  EpisodeState state;
  std::optional<std::size_t> pending_symptom;
  std::optional<ActionSet> pending_tests;
  std::vector<double> pi_dis;
  std::vector<RankedDisease> ranking;
  std::vector<TranscriptEntry> transcript;
  std::chrono::system_clock::time_point last_access;

  bool finished() const { return state.stage == Stage::Terminal; }
};

struct ServiceOptions {
  std::chrono::seconds idle_timeout{30 * 60};
  std::size_t max_sessions = 1024;
  std::filesystem::path persist_dir;  // empty: memory only
  std::function<std::chrono::system_clock::time_point()> clock = [] { return std::chrono::system_clock::now(); };
};

/// Runs a trained policy against human answers. Every decision comes from
/// choose_action in eval mode over StagewiseEnv states, exactly as offline
/// evaluation does; the service only stops where the simulator would have
/// supplied a value.
class ConsultService {
 public:
  ConsultService(const WorldModel& world, std::optional<Checkpoint> checkpoint, const HyperParams& hp,
                 ServiceOptions options = {});
  ~ConsultService();

  ConsultService(const ConsultService&) = delete;
  ConsultService& operator=(const ConsultService&) = delete;

  /// Sessions already running keep the checkpoint they started with.
  void set_checkpoint(Checkpoint checkpoint);
  bool has_checkpoint() const;
  std::string checkpoint_id() const;

  const WorldModel& world() const { return *world_; }
  const HyperParams& hyper() const { return hp_; }

  // Typed API. Each returns a snapshot taken while the session is locked.
  Session start(std::vector<std::size_t> demographics, std::size_t initial_symptom);
  Session answer(const std::string& id, std::size_t symptom, bool present);
  Session submit_tests(const std::string& id, const std::map<std::size_t, int>& results);
  Session get(const std::string& id);

  // JSON API used by the HTTP layer; requests and responses carry schema_version.
  nlohmann::json start_json(const nlohmann::json& request);
  nlohmann::json answer_json(const std::string& id, const nlohmann::json& request);
  nlohmann::json tests_json(const std::string& id, const nlohmann::json& request);
  nlohmann::json get_json(const std::string& id);
  nlohmann::json schema_json() const;
  nlohmann::json session_to_json(const Session& session) const;

  std::size_t session_count() const;
  /// Drops idle sessions; returns how many were removed.
  std::size_t sweep_expired();

 private:
  struct Slot;
  struct Model;

  std::shared_ptr<Slot> find(const std::string& id);
  void advance(Session& session, const Model& model) const;
  void persist(const Session& session) const;
  void unpersist(const std::string& id) const;
  void restore_from_disk();
  Session rebuild(const std::string& id, const ConsultInputs& inputs, std::shared_ptr<const Model> model) const;
  std::string new_id();

  const WorldModel* world_;
  HyperParams hp_;
  StagewiseEnv env_;
  ServiceOptions options_;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const Model> model_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t id_state_;
};

}  // namespace medsuggest
