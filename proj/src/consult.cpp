#include "medsuggest/consult.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "medsuggest/rng.hpp"

namespace medsuggest {

const char* error_code_name(ConsultErrorCode code) {
  switch (code) {
    case ConsultErrorCode::InvalidRequest: return "invalid_request";
    case ConsultErrorCode::UnknownSession: return "unknown_session";
    case ConsultErrorCode::SessionExpired: return "session_expired";
    case ConsultErrorCode::OutOfOrder: return "out_of_order";
    case ConsultErrorCode::SessionFinished: return "session_finished";
    case ConsultErrorCode::NoCheckpoint: return "no_checkpoint";
    case ConsultErrorCode::Capacity: return "capacity";
  }
  return "unknown";
}

int http_status(ConsultErrorCode code) {
  switch (code) {
    case ConsultErrorCode::InvalidRequest: return 400;
    case ConsultErrorCode::UnknownSession: return 404;
    case ConsultErrorCode::SessionExpired: return 410;
    case ConsultErrorCode::OutOfOrder:
    case ConsultErrorCode::SessionFinished: return 409;
    case ConsultErrorCode::NoCheckpoint:
    case ConsultErrorCode::Capacity: return 503;
  }
  return 500;
}

nlohmann::json ConsultError::to_json() const {
  nlohmann::json j = {{"code", error_code_name(code_)}, {"message", what()}};
  if (!field_.empty()) j["field"] = field_;
  return j;
}

std::vector<RankedDisease> rank_diseases(const WorldModel& world, std::span<const double> pi_dis) {
  if (pi_dis.size() != world.num_diseases()) throw std::invalid_argument("rank_diseases: length mismatch");
  std::vector<std::size_t> order(pi_dis.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pi_dis[a] > pi_dis[b]; });
  std::vector<RankedDisease> out;
  out.reserve(order.size());
  for (auto d : order) out.push_back({world.diseases()[d], pi_dis[d]});
  return out;
}

struct ConsultService::Model {
  Checkpoint checkpoint;
  std::string id;
  AgentOptions agent;
};

struct ConsultService::Slot {
  std::mutex mutex;
  Session session;
  std::shared_ptr<const Model> model;
};

namespace {

ConsultError bad(const std::string& message, const std::string& field = {}) {
  return ConsultError(ConsultErrorCode::InvalidRequest, message, field);
}

void check_request(const nlohmann::json& request) {
  if (!request.is_object()) throw bad("request body must be a JSON object");
  if (request.contains("schema_version")) {
    const auto& v = request.at("schema_version");
    if (!v.is_number_integer() || v.get<int>() != kConsultSchemaVersion)
      throw bad("unsupported schema_version", "schema_version");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json action_to_json(const EnvAction& action, const WorldModel& world) {
  const auto& schema = world.schema();
  return std::visit(
      overloaded{
          [&](const QuerySymptom& q) -> nlohmann::json {
            return {{"type", "query"}, {"symptom", schema.symptoms()[q.symptom]}};
          },
          [](const Quit1&) -> nlohmann::json { return {{"type", "quit_to_tests"}}; },
          [](const Quit2&) -> nlohmann::json { return {{"type", "quit_to_diagnosis"}}; },
          [&](const SuggestTests& s) -> nlohmann::json {
            auto ids = nlohmann::json::array();
            for (auto j : s.tests.members()) ids.push_back(schema.tests()[j].id);
            return {{"type", "suggest_tests"}, {"tests", ids}};
          },
          [&](const PredictDisease& p) -> nlohmann::json {
            return {{"type", "predict"}, {"disease", world.diseases()[p.disease]}};
          },
      },
      action);
}

}  // namespace

ConsultService::ConsultService(const WorldModel& world, std::optional<Checkpoint> checkpoint, const HyperParams& hp,
                               ServiceOptions options)
    : world_(&world), hp_(hp), env_(world, hp), options_(std::move(options)) {
  hp_.validate();
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  if (checkpoint) set_checkpoint(std::move(*checkpoint));
  if (!options_.persist_dir.empty()) {
    std::filesystem::create_directories(options_.persist_dir);
    restore_from_disk();
  }
}

ConsultService::~ConsultService() = default;

void ConsultService::set_checkpoint(Checkpoint checkpoint) {
  checkpoint.params.config().check_matches(*world_);
  auto model = std::make_shared<Model>();
  model->id = checkpoint_fingerprint(checkpoint);
  model->agent.tests_enabled = checkpoint.tests_enabled;
  model->checkpoint = std::move(checkpoint);
  std::lock_guard lock(model_mutex_);
  model_ = std::move(model);
}

bool ConsultService::has_checkpoint() const {
  std::lock_guard lock(model_mutex_);
  return model_ != nullptr;
}

std::string ConsultService::checkpoint_id() const {
  std::lock_guard lock(model_mutex_);
  return model_ ? model_->id : std::string{};
}

std::string ConsultService::new_id() {
  const auto a = derive_seed(id_state_, 0);
  const auto b = derive_seed(id_state_, 1);
  id_state_ = derive_seed(id_state_, 2);
  return hex64(a) + hex64(b);
}

void ConsultService::advance(Session& session, const Model& model) const {
  const auto& schema = world_->schema();
  const auto& params = model.checkpoint.params;
  auto& state = session.state;
  while (state.stage != Stage::Terminal) {
    const auto obs = env_.encode_observation(state);
    const auto fr = forward(params, obs);
    std::vector<std::uint8_t> blocked;
    if (state.stage == Stage::Sym)
      blocked = sym_blocked(schema, state.known, state.t, hp_.query_limit, RolloutMode::Eval, model.agent);
    auto d = choose_action(schema, fr.cache, fr.outputs, state.stage, blocked, RolloutMode::Eval, nullptr);

    if (const auto* q = std::get_if<QuerySymptom>(&d.action)) {
      session.pending_symptom = q->symptom;
      return;
    }
    if (const auto* s = std::get_if<SuggestTests>(&d.action); s && !s->tests.empty()) {
      session.pending_tests = s->tests;
      return;
    }
    if (state.stage == Stage::Dis) {
      session.pi_dis = d.probs;
      session.ranking = rank_diseases(*world_, session.pi_dis);
    }
    session.transcript.push_back({state.t, state.stage, d.action, std::nullopt, {}});
    state = env_.step(state, d.action).next;
  }
}

namespace {

void apply_answer(const StagewiseEnv& env, Session& s, std::size_t symptom, bool present) {
  const auto& schema = env.world().schema();
  if (s.finished()) throw ConsultError(ConsultErrorCode::SessionFinished, "the consultation is finished");
  if (!s.pending_symptom) throw ConsultError(ConsultErrorCode::OutOfOrder, "no symptom question is pending", "symptom");
  if (symptom != *s.pending_symptom)
    throw ConsultError(ConsultErrorCode::OutOfOrder,
                       "the pending question is about " + schema.symptoms()[*s.pending_symptom], "symptom");
  s.state.patient.values[schema.symptom_feature(symptom)] = present ? 1 : -1;
  s.inputs.answers.emplace_back(symptom, present);
  const EnvAction action = QuerySymptom{symptom};
  s.transcript.push_back({s.state.t, s.state.stage, action, present, {}});
  s.state = env.step(s.state, action).next;
  s.pending_symptom.reset();
}

void apply_tests(const StagewiseEnv& env, Session& s, const std::map<std::size_t, int>& results) {
  const auto& schema = env.world().schema();
  if (s.finished()) throw ConsultError(ConsultErrorCode::SessionFinished, "the consultation is finished");
  if (!s.pending_tests) throw ConsultError(ConsultErrorCode::OutOfOrder, "no test suggestion is pending", "results");
  const auto& pending = *s.pending_tests;
  for (const auto& [test, value] : results) {
    const auto field = "results." + (test < schema.num_tests() ? schema.tests()[test].id : std::to_string(test));
    if (test >= schema.num_tests() || !pending.contains(test)) throw bad("test was not suggested", field);
    if (!schema.in_domain(schema.test_feature(test), value)) throw bad("value outside the test's categories", field);
  }
  for (auto test : pending.members())
    if (!results.count(test)) throw bad("missing result for a suggested test", "results." + schema.tests()[test].id);

  for (const auto& [test, value] : results) s.state.patient.values[schema.test_feature(test)] = value;
  s.inputs.test_results = results;
  s.inputs.tests_submitted = true;
  const EnvAction action = SuggestTests{pending};
  s.transcript.push_back({s.state.t, s.state.stage, action, std::nullopt, results});
  s.state = env.step(s.state, action).next;
  s.pending_tests.reset();
}

}  // namespace

Session ConsultService::rebuild(const std::string& id, const ConsultInputs& inputs,
                                std::shared_ptr<const Model> model) const {
  const auto& schema = world_->schema();
  if (inputs.demographics.size() != schema.num_demographics())
    throw bad("every demographic must be given", "demographics");
  for (std::size_t d = 0; d < schema.num_demographics(); ++d)
    if (inputs.demographics[d] >= schema.demographics()[d].values.size())
      throw bad("unknown demographic value", "demographics." + schema.demographics()[d].id);
  if (inputs.initial_symptom >= schema.num_symptoms()) throw bad("unknown symptom", "initial_symptom");

  Patient patient;
  patient.values.assign(schema.num_features(), 0);
  for (std::size_t d = 0; d < schema.num_demographics(); ++d) patient.values[d] = static_cast<int>(inputs.demographics[d]);
  patient.initial_symptom = inputs.initial_symptom;
  patient.values[schema.symptom_feature(inputs.initial_symptom)] = 1;

  Session s;
  s.id = id;
  s.checkpoint_id = model->id;
  s.inputs.demographics = inputs.demographics;
  s.inputs.initial_symptom = inputs.initial_symptom;
  s.state = env_.reset(patient);
  advance(s, *model);
  for (const auto& [symptom, present] : inputs.answers) {
    apply_answer(env_, s, symptom, present);
    advance(s, *model);
  }
  if (inputs.tests_submitted) {
    apply_tests(env_, s, inputs.test_results);
    advance(s, *model);
  }
  return s;
}

std::shared_ptr<ConsultService::Slot> ConsultService::find(const std::string& id) {
  std::lock_guard lock(store_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ConsultError(ConsultErrorCode::UnknownSession, "no such session", "id");
  auto slot = it->second;
  std::lock_guard slot_lock(slot->mutex);
  if (options_.clock() - slot->session.last_access > options_.idle_timeout) {
    sessions_.erase(it);
    unpersist(id);
    throw ConsultError(ConsultErrorCode::SessionExpired, "session expired after inactivity", "id");
  }
  return slot;
}

Session ConsultService::start(std::vector<std::size_t> demographics, std::size_t initial_symptom) {
  std::shared_ptr<const Model> model;
  {
    std::lock_guard lock(model_mutex_);
    model = model_;
  }
  if (!model) throw ConsultError(ConsultErrorCode::NoCheckpoint, "no checkpoint is loaded");
  ConsultInputs inputs;
  inputs.demographics = std::move(demographics);
  inputs.initial_symptom = initial_symptom;

  sweep_expired();
  auto slot = std::make_shared<Slot>();
  {
    std::lock_guard lock(store_mutex_);
    if (sessions_.size() >= options_.max_sessions)
      throw ConsultError(ConsultErrorCode::Capacity, "too many open sessions");
    slot->session.id = new_id();
  }
  slot->session = rebuild(slot->session.id, inputs, model);
  slot->session.last_access = options_.clock();
  slot->model = model;
  {
    std::lock_guard lock(store_mutex_);
    if (sessions_.size() >= options_.max_sessions)
      throw ConsultError(ConsultErrorCode::Capacity, "too many open sessions");
    sessions_.emplace(slot->session.id, slot);
  }
  std::lock_guard slot_lock(slot->mutex);
  persist(slot->session);
  return slot->session;
}

Session ConsultService::answer(const std::string& id, std::size_t symptom, bool present) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  auto& s = slot->session;
  s.last_access = options_.clock();
  Session draft = s;
  apply_answer(env_, draft, symptom, present);
  advance(draft, *slot->model);
  s = std::move(draft);
  persist(s);
  return s;
}

Session ConsultService::submit_tests(const std::string& id, const std::map<std::size_t, int>& results) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  auto& s = slot->session;
  s.last_access = options_.clock();
  Session draft = s;
  apply_tests(env_, draft, results);
  advance(draft, *slot->model);
  s = std::move(draft);
  persist(s);
  return s;
}

Session ConsultService::get(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  slot->session.last_access = options_.clock();
  return slot->session;
}

std::size_t ConsultService::session_count() const {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

std::size_t ConsultService::sweep_expired() {
  std::lock_guard lock(store_mutex_);
  const auto now = options_.clock();
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    bool expired;
    {
      std::lock_guard slot_lock(it->second->mutex);
      expired = now - it->second->session.last_access > options_.idle_timeout;
    }
    if (expired) {
      unpersist(it->first);
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

// Persistence stores the human inputs only; the session is rebuilt by
// replaying them, which is valid as long as the checkpoint is unchanged.

void ConsultService::persist(const Session& s) const {
  if (options_.persist_dir.empty()) return;
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& [symptom, present] : s.inputs.answers) answers.push_back({symptom, present});
  nlohmann::json results = nlohmann::json::array();
  for (const auto& [test, value] : s.inputs.test_results) results.push_back({test, value});
  const nlohmann::json doc = {
      {"schema_version", kConsultSchemaVersion},
      {"id", s.id},
      {"checkpoint_id", s.checkpoint_id},
      {"last_access",
       std::chrono::duration_cast<std::chrono::seconds>(s.last_access.time_since_epoch()).count()},
      {"demographics", s.inputs.demographics},
      {"initial_symptom", s.inputs.initial_symptom},
      {"answers", answers},
      {"tests_submitted", s.inputs.tests_submitted},
      {"test_results", results}};
  const auto path = options_.persist_dir / (s.id + ".json");
  const auto tmp = options_.persist_dir / (s.id + ".json.tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << doc.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

void ConsultService::unpersist(const std::string& id) const {
  if (options_.persist_dir.empty()) return;
  std::error_code ec;
  std::filesystem::remove(options_.persist_dir / (id + ".json"), ec);
}

void ConsultService::restore_from_disk() {
  std::shared_ptr<const Model> model;
  {
    std::lock_guard lock(model_mutex_);
    model = model_;
  }
  if (!model) return;
  for (const auto& entry : std::filesystem::directory_iterator(options_.persist_dir)) {
    if (entry.path().extension() != ".json") continue;
    try {
      std::ifstream in(entry.path());
      const auto doc = nlohmann::json::parse(in);
      if (doc.at("schema_version").get<int>() != kConsultSchemaVersion) continue;
      if (doc.at("checkpoint_id").get<std::string>() != model->id) continue;
      ConsultInputs inputs;
      inputs.demographics = doc.at("demographics").get<std::vector<std::size_t>>();
      inputs.initial_symptom = doc.at("initial_symptom").get<std::size_t>();
      for (const auto& a : doc.at("answers")) inputs.answers.emplace_back(a.at(0).get<std::size_t>(), a.at(1).get<bool>());
      inputs.tests_submitted = doc.at("tests_submitted").get<bool>();
      for (const auto& r : doc.at("test_results")) inputs.test_results[r.at(0).get<std::size_t>()] = r.at(1).get<int>();
      auto slot = std::make_shared<Slot>();
      slot->session = rebuild(doc.at("id").get<std::string>(), inputs, model);
      slot->session.last_access =
          std::chrono::system_clock::time_point(std::chrono::seconds(doc.at("last_access").get<std::int64_t>()));
      slot->model = model;
      sessions_.emplace(slot->session.id, slot);
    } catch (const std::exception&) {
      // A corrupt or stale session file is dropped, not fatal.
      continue;
    }
  }
}

// ---- JSON layer ----

nlohmann::json ConsultService::session_to_json(const Session& s) const {
  const auto& schema = world_->schema();
  nlohmann::json demographics = nlohmann::json::object();
  for (std::size_t d = 0; d < schema.num_demographics(); ++d)
    demographics[schema.demographics()[d].id] = schema.demographics()[d].values[s.inputs.demographics[d]];
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& [symptom, present] : s.inputs.answers)
    answers.push_back({{"symptom", schema.symptoms()[symptom]}, {"present", present}});
  nlohmann::json results = nlohmann::json::object();
  for (const auto& [test, value] : s.inputs.test_results) results[schema.tests()[test].id] = value;

  nlohmann::json pending = nullptr;
  std::string next = "done";
  if (s.pending_symptom) {
    pending = {{"type", "symptom_question"}, {"symptom", schema.symptoms()[*s.pending_symptom]}};
    next = "answer_symptom";
  } else if (s.pending_tests) {
    auto tests = nlohmann::json::array();
    for (auto j : s.pending_tests->members())
      tests.push_back({{"id", schema.tests()[j].id}, {"categories", schema.tests()[j].categories}});
    pending = {{"type", "test_suggestion"}, {"tests", tests}};
    next = "submit_tests";
  }

  nlohmann::json ranking = nullptr;
  if (s.finished()) {
    ranking = nlohmann::json::array();
    for (const auto& r : s.ranking) ranking.push_back({{"disease", r.disease}, {"probability", r.probability}});
  }

  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& e : s.transcript) {
    nlohmann::json j = {{"t", e.t}, {"stage", stage_name(e.stage)}, {"action", action_to_json(e.action, *world_)}};
    if (e.answer) j["present"] = *e.answer;
    if (!e.results.empty()) {
      nlohmann::json r = nlohmann::json::object();
      for (const auto& [test, value] : e.results) r[schema.tests()[test].id] = value;
      j["results"] = r;
    }
    transcript.push_back(j);
  }

  return {{"schema_version", kConsultSchemaVersion},
          {"id", s.id},
          {"checkpoint_id", s.checkpoint_id},
          {"stage", stage_name(s.state.stage)},
          {"t", s.state.t},
          {"finished", s.finished()},
          {"next", next},
          {"demographics", demographics},
          {"initial_symptom", schema.symptoms()[s.inputs.initial_symptom]},
          {"answers", answers},
          {"test_results", results},
          {"pending", pending},
          {"ranking", ranking},
          {"transcript", transcript}};
}

nlohmann::json ConsultService::schema_json() const {
  const auto& schema = world_->schema();
  nlohmann::json demographics = nlohmann::json::array();
  for (const auto& d : schema.demographics()) demographics.push_back({{"id", d.id}, {"values", d.values}});
  nlohmann::json tests = nlohmann::json::array();
  for (std::size_t j = 0; j < schema.num_tests(); ++j) {
    const auto f = schema.test_feature(j);
    std::vector<int> values;
    for (std::size_t i = 0; i < schema.domain_size(f); ++i) values.push_back(schema.value_at(f, i));
    tests.push_back({{"id", schema.tests()[j].id}, {"categories", schema.tests()[j].categories}, {"normal", -1},
                     {"values", values}});
  }
  std::shared_ptr<const Model> model;
  {
    std::lock_guard lock(model_mutex_);
    model = model_;
  }
  return {{"schema_version", kConsultSchemaVersion},
          {"demographics", demographics},
          {"symptoms", schema.symptoms()},
          {"tests", tests},
          {"diseases", world_->diseases()},
          {"query_limit", hp_.query_limit},
          {"checkpoint_id", model ? nlohmann::json(model->id) : nlohmann::json(nullptr)},
          {"tests_enabled", model ? model->agent.tests_enabled : true}};
}

nlohmann::json ConsultService::start_json(const nlohmann::json& request) {
  check_request(request);
  const auto& schema = world_->schema();
  if (!request.contains("demographics") || !request.at("demographics").is_object())
    throw bad("demographics must be an object", "demographics");
  const auto& demo = request.at("demographics");
  for (const auto& [key, value] : demo.items()) {
    const bool known = std::any_of(schema.demographics().begin(), schema.demographics().end(),
                                   [&](const Demographic& d) { return d.id == key; });
    if (!known) throw bad("unknown demographic", "demographics." + key);
  }
  std::vector<std::size_t> values;
  for (const auto& d : schema.demographics()) {
    const auto field = "demographics." + d.id;
    if (!demo.contains(d.id)) throw bad("missing demographic", field);
    const auto& v = demo.at(d.id);
    if (v.is_string()) {
      auto it = std::find(d.values.begin(), d.values.end(), v.get<std::string>());
      if (it == d.values.end()) throw bad("unknown demographic value", field);
      values.push_back(static_cast<std::size_t>(it - d.values.begin()));
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0 &&
               static_cast<std::size_t>(v.get<std::int64_t>()) < d.values.size()) {
      values.push_back(static_cast<std::size_t>(v.get<std::int64_t>()));
    } else {
      throw bad("demographic value must be a label or category index", field);
    }
  }
  if (!request.contains("initial_symptom") || !request.at("initial_symptom").is_string())
    throw bad("initial_symptom must be a symptom id", "initial_symptom");
  const auto symptom = schema.find_symptom(request.at("initial_symptom").get<std::string>());
  if (!symptom) throw bad("unknown symptom", "initial_symptom");
  return session_to_json(start(std::move(values), *symptom));
}

nlohmann::json ConsultService::answer_json(const std::string& id, const nlohmann::json& request) {
  check_request(request);
  if (!request.contains("symptom") || !request.at("symptom").is_string())
    throw bad("symptom must be a symptom id", "symptom");
  if (!request.contains("present") || !request.at("present").is_boolean())
    throw bad("present must be true or false", "present");
  const auto symptom = world_->schema().find_symptom(request.at("symptom").get<std::string>());
  if (!symptom) throw bad("unknown symptom", "symptom");
  return session_to_json(answer(id, *symptom, request.at("present").get<bool>()));
}

nlohmann::json ConsultService::tests_json(const std::string& id, const nlohmann::json& request) {
  check_request(request);
  if (!request.contains("results") || !request.at("results").is_object())
    throw bad("results must be an object of test id to value", "results");
  std::map<std::size_t, int> results;
  for (const auto& [key, value] : request.at("results").items()) {
    const auto test = world_->schema().find_test(key);
    if (!test) throw bad("unknown test", "results." + key);
    if (!value.is_number_integer()) throw bad("result must be an integer category", "results." + key);
    results[*test] = value.get<int>();
  }
  return session_to_json(submit_tests(id, results));
}

nlohmann::json ConsultService::get_json(const std::string& id) { return session_to_json(get(id)); }

}  // namespace medsuggest
