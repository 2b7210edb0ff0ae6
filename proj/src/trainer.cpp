#include "medsuggest/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "medsuggest/eval.hpp"
#include "medsuggest/kernels.hpp"

namespace medsuggest {

std::vector<std::uint8_t> sym_blocked(const FeatureSchema& schema, std::span<const std::uint8_t> known, int t,
                                      int query_limit, RolloutMode mode, const AgentOptions& options) {
  std::vector<std::uint8_t> blocked(schema.num_symptoms() + 2, 0);
  const bool limit_reached = mode == RolloutMode::Eval && t >= query_limit;
  for (std::size_t s = 0; s < schema.num_symptoms(); ++s)
    if (known[schema.symptom_feature(s)] || limit_reached) blocked[s] = 1;
  if (!options.tests_enabled) blocked[quit1_index(schema)] = 1;
  return blocked;
}

namespace {

struct MaskedSoftmax {
  std::vector<double> probs;
  std::vector<double> log_probs;  // -inf where blocked
  double entropy = 0.0;
};

MaskedSoftmax masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> blocked) {
  auto is_blocked = [&](std::size_t i) { return !blocked.empty() && blocked[i] != 0; };
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!is_blocked(i)) mx = std::max(mx, logits[i]);
  if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax: every action is blocked");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!is_blocked(i)) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  MaskedSoftmax out;
  out.probs.assign(logits.size(), 0.0);
  out.log_probs.assign(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (is_blocked(i)) continue;
    out.log_probs[i] = logits[i] - lse;
    out.probs[i] = std::exp(out.log_probs[i]);
    out.entropy -= out.probs[i] * out.log_probs[i];
  }
  return out;
}

std::size_t argmax_index(const std::vector<double>& probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

EnvAction sym_action(const FeatureSchema& schema, std::size_t choice) {
  if (choice < schema.num_symptoms()) return QuerySymptom{choice};
  if (choice == quit1_index(schema)) return Quit1{};
  return Quit2{};
}

}  // namespace

double masked_log_prob(std::span<const double> logits, std::span<const std::uint8_t> blocked, std::size_t choice) {
  return masked_softmax(logits, blocked).log_probs.at(choice);
}

Decision choose_action(const FeatureSchema& schema, const ForwardCache& cache, const PolicyOutputs& outputs,
                       Stage stage, std::span<const std::uint8_t> blocked, RolloutMode mode, Rng* rng) {
  if (mode == RolloutMode::Train && !rng) throw std::invalid_argument("choose_action: train mode needs an rng");
  Decision d;
  switch (stage) {
    case Stage::Sym:
    case Stage::Dis: {
      const auto head = stage == Stage::Sym ? Head::Sym : Head::Dis;
      auto sm = masked_softmax(cache.logits(head), stage == Stage::Sym ? blocked : std::span<const std::uint8_t>{});
      d.choice = mode == RolloutMode::Eval ? argmax_index(sm.probs) : rng->categorical(sm.probs);
      d.log_prob = sm.log_probs[d.choice];
      d.entropy = sm.entropy;
      d.probs = std::move(sm.probs);
      if (stage == Stage::Sym) d.action = sym_action(schema, d.choice);
      else d.action = PredictDisease{d.choice};
      break;
    }
    case Stage::Med: {
      const auto& p = outputs.pi_med;
      ActionSet set = mode == RolloutMode::Eval ? argmax_subset(p) : sample_subset(p, *rng);
      d.log_prob = log_subset_prob(p, set);
      d.entropy = entropy_sum(p);
      d.probs.assign(p.values().begin(), p.values().end());
      d.action = SuggestTests{std::move(set)};
      break;
    }
    case Stage::Terminal: throw IllegalAction("choose_action: terminal state");
  }
  return d;
}

TargetVector build_target_vector(const FeatureSchema& schema, const Patient& patient) {
  TargetVector t;
  t.g.reserve(schema.num_abnormality_slots());
  for (std::size_t s = 0; s < schema.num_symptoms(); ++s) t.g.push_back(patient.symptom_value(schema, s) > 0 ? 1.0 : 0.0);
  for (std::size_t j = 0; j < schema.num_tests(); ++j) t.g.push_back(patient.test_value(schema, j) > 0 ? 1.0 : 0.0);
  return t;
}

double rebuild_loss(std::span<const double> z, const TargetVector& g) {
  if (z.size() != g.g.size()) throw std::invalid_argument("rebuild_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = clamp_probability(z[i]);
    loss -= g.g[i] * std::log(zi) + (1.0 - g.g[i]) * std::log1p(-zi);
  }
  return loss;
}

std::vector<double> rebuild_loss_gradient(std::span<const double> z, const TargetVector& g) {
  if (z.size() != g.g.size()) throw std::invalid_argument("rebuild_loss_gradient: length mismatch");
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = clamp_probability(z[i]);
    out[i] = -g.g[i] / zi + (1.0 - g.g[i]) / (1.0 - zi);
  }
  return out;
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

std::vector<double> Trajectory::rewards() const {
  std::vector<double> r;
  r.reserve(steps.size());
  for (const auto& s : steps) r.push_back(s.reward);
  return r;
}

Trajectory collect_episode(const StagewiseEnv& env, const Params& params, const Patient& patient, Rng* rng,
                           RolloutMode mode, const AgentOptions& options) {
  const auto& schema = env.world().schema();
  const auto& hp = env.hyper();
  Trajectory traj;
  traj.disease = patient.disease;
  traj.target = build_target_vector(schema, patient);

  auto state = env.reset(patient);
  bool done = false;
  while (!done) {
    StepRecord rec;
    rec.stage = state.stage;
    rec.observation = env.encode_observation(state);
    auto fr = forward(params, rec.observation);
    if (state.stage == Stage::Sym)
      rec.blocked = sym_blocked(schema, state.known, state.t, hp.query_limit, mode, options);

    bool forced = false;
    if (state.stage == Stage::Dis && mode == RolloutMode::Train) forced = rng->bernoulli(hp.label_guided_epsilon);
    auto decision = choose_action(schema, fr.cache, fr.outputs, state.stage, rec.blocked, mode, rng);
    if (forced) {
      decision.choice = patient.disease;
      decision.action = PredictDisease{patient.disease};
      decision.log_prob = masked_log_prob(fr.cache.logits(Head::Dis), {}, patient.disease);
    }

    auto result = env.step(state, decision.action);
    rec.action = decision.action;
    rec.choice = decision.choice;
    rec.probs = std::move(decision.probs);
    rec.log_prob = decision.log_prob;
    rec.entropy = decision.entropy;
    rec.reward = result.reward;
    rec.z = std::move(fr.outputs.z);
    rec.forced = forced;
    rec.cache = std::move(fr.cache);
    traj.steps.push_back(std::move(rec));
    state = std::move(result.next);
    done = result.done;
  }
  traj.terminal = true;
  return traj;
}

EpisodeGradients episode_objective(const Trajectory& traj, const HyperParams& hp, double return_baseline) {
  EpisodeGradients out;
  const auto rewards = traj.rewards();
  const auto returns = compute_returns(rewards, hp.discount);
  double discount = 1.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& rec = traj.steps[t];
    out.loss.ret += discount * rec.reward;
    discount *= hp.discount;
    out.loss.ent += rec.entropy;
    out.loss.reb += rebuild_loss(rec.z, traj.target);

    const double weight = returns[t] - return_baseline;
    HeadGradients heads;
    switch (rec.stage) {
      case Stage::Sym:
      case Stage::Dis: {
        const auto& pi = rec.probs;
        std::vector<double> g(pi.size(), 0.0);
        for (std::size_t j = 0; j < pi.size(); ++j) {
          if (!rec.blocked.empty() && rec.blocked[j]) continue;
          const double score = (j == rec.choice ? 1.0 : 0.0) - pi[j];
          const double dent = pi[j] > 0.0 ? -pi[j] * (std::log(pi[j]) + rec.entropy) : 0.0;
          g[j] = weight * score + hp.entropy_weight * dent;
        }
        heads[static_cast<std::size_t>(rec.stage == Stage::Sym ? Head::Sym : Head::Dis)] = std::move(g);
        break;
      }
      case Stage::Med: {
        const BernoulliVector p(rec.probs);
        const auto& set = std::get<SuggestTests>(rec.action).tests;
        auto dp = grad_coefficients(p, set, weight);
        const auto dent = entropy_sum_gradient(p);
        for (std::size_t a = 0; a < dp.size(); ++a) dp[a] = (dp[a] + hp.entropy_weight * dent[a]) * p[a] * (1.0 - p[a]);
        heads[static_cast<std::size_t>(Head::Med)] = std::move(dp);
        break;
      }
      case Stage::Terminal: break;
    }
    auto dz = rebuild_loss_gradient(rec.z, traj.target);
    for (std::size_t i = 0; i < dz.size(); ++i) {
      const double zi = clamp_probability(rec.z[i]);
      dz[i] = -hp.rebuild_weight * dz[i] * zi * (1.0 - zi);
    }
    heads[static_cast<std::size_t>(Head::Rebuild)] = std::move(dz);
    out.heads.push_back(std::move(heads));
  }
  out.loss.total = out.loss.ret + hp.entropy_weight * out.loss.ent - hp.rebuild_weight * out.loss.reb;
  return out;
}

void adam_update(Params& params, std::span<const double> grads, AdamState& state, double learning_rate) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_update: shape mismatch");
  ++state.step;
  kernels::AdamCoeffs c;
  c.learning_rate = learning_rate;
  c.bias_correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  c.bias_correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  c.direction = 1.0;
  auto values = params.mutable_values();
  kernels::active().adam(values.data(), grads.data(), state.m.data(), state.v.data(), values.size(), c);
}

namespace {

void collect_batch(const StagewiseEnv& env, const Params& params, const Dataset& data,
                   std::span<const std::size_t> indices, std::uint64_t seed, std::uint64_t first_episode,
                   const AgentOptions& agent, std::size_t threads, std::vector<Trajectory>& out) {
  out.resize(indices.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      Rng rng(derive_seed(seed, first_episode + b));
      out[b] = collect_episode(env, params, data.patients[indices[b]], &rng, RolloutMode::Train, agent);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, indices.size()));
  if (workers == 1) {
    work(0, indices.size());
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (indices.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(indices.size(), begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
}

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kEpisodeStream = 2;

}  // namespace

TrainResult train(const WorldModel& world, const Dataset& train_set, const Dataset& val_set, const HyperParams& hp,
                  const TrainOptions& options) {
  hp.validate();
  options.net.check_matches(world);
  StagewiseEnv env(world, hp);

  Rng init_rng(derive_seed(options.seed, kInitStream));
  Params params = init_params(options.net, init_rng);
  AdamState adam = AdamState::for_params(params);

  TrainResult result;
  result.best = {params, 0, options.agent.tests_enabled};
  result.last = result.best;
  if (hp.epochs == 0) return result;
  if (train_set.patients.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.patients.empty()) throw std::invalid_argument("train: empty validation set");

  const std::uint64_t shuffle_seed = derive_seed(options.seed, kShuffleStream);
  const std::uint64_t episode_seed = derive_seed(options.seed, kEpisodeStream);
  std::uint64_t episode_counter = 0;
  double best_top1 = -1.0;
  std::vector<std::size_t> order(train_set.patients.size());
  std::vector<Trajectory> batch;
  std::vector<double> grads(params.size());

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(shuffle_seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);

    double sum_ret = 0.0, sum_ent = 0.0, sum_reb = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t count = std::min(hp.batch_size, order.size() - start);
      collect_batch(env, params, train_set, std::span<const std::size_t>(order).subspan(start, count), episode_seed,
                    episode_counter, options.agent, options.threads, batch);
      episode_counter += count;

      double baseline = 0.0;
      if (options.return_baseline) {
        std::size_t n = 0;
        for (const auto& traj : batch) {
          for (double r : compute_returns(traj.rewards(), hp.discount)) baseline += r;
          n += traj.steps.size();
        }
        baseline /= static_cast<double>(std::max<std::size_t>(n, 1));
      }

      std::fill(grads.begin(), grads.end(), 0.0);
      for (const auto& traj : batch) {
        const auto eg = episode_objective(traj, hp, baseline);
        sum_ret += eg.loss.ret;
        sum_ent += eg.loss.ent;
        sum_reb += eg.loss.reb;
        for (std::size_t t = 0; t < traj.steps.size(); ++t) backward(params, traj.steps[t].cache, eg.heads[t], grads);
      }
      const double scale = 1.0 / static_cast<double>(count);
      for (double& g : grads) g *= scale;
      adam_update(params, grads, adam, hp.learning_rate);
    }

    const auto report = evaluate(env, params, val_set, options.agent, {1, 3, 5});
    EpochMetrics m;
    m.epoch = epoch;
    m.top1 = report.top1;
    m.top3 = report.top3;
    m.top5 = report.top5;
    m.avg_suggested = report.suggestions.mean_suggested;
    m.abnormal_found = report.suggestions.mean_abnormal_found;
    m.suggestion_ratio = report.suggestions.suggestion_ratio;
    const double n = static_cast<double>(order.size());
    m.j_ret = sum_ret / n;
    m.j_ent = sum_ent / n;
    m.j_reb = sum_reb / n;
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);

    if (m.top1 > best_top1) {
      best_top1 = m.top1;
      result.best = {params, adam.step, options.agent.tests_enabled};
      result.best_epoch = epoch;
    }
  }
  result.last = {params, adam.step, options.agent.tests_enabled};
  return result;
}

TrainOptions TrainConfig::options(const WorldModel& world, std::uint64_t seed) const {
  TrainOptions o;
  o.net = NetConfig::for_world(world, encoder, decoder_hidden);
  o.seed = seed;
  o.agent = agent;
  o.return_baseline = return_baseline;
  o.threads = threads;
  return o;
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig c;
  try {
    c.hp = hyper_from_json(doc);
    if (doc.contains("network")) {
      const auto& net = doc.at("network");
      if (net.is_string()) {
        const auto name = net.get<std::string>();
        if (name == "full") {
          c.encoder = {2048, 1024};
          c.decoder_hidden = 1024;
        } else if (name != "desk") {
          throw std::invalid_argument("unknown network preset '" + name + "'");
        }
      } else {
        const auto enc = net.at("encoder").get<std::vector<std::size_t>>();
        if (enc.size() != 2) throw std::invalid_argument("network.encoder needs exactly two widths");
        c.encoder = {enc[0], enc[1]};
        c.decoder_hidden = net.at("decoder_hidden").get<std::size_t>();
      }
    }
    c.agent.tests_enabled = doc.value("tests_enabled", c.agent.tests_enabled);
    c.return_baseline = doc.value("return_baseline", c.return_baseline);
    c.threads = doc.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  auto doc = hyper_to_json(c.hp);
  doc["network"] = {{"encoder", {c.encoder[0], c.encoder[1]}}, {"decoder_hidden", c.decoder_hidden}};
  doc["tests_enabled"] = c.agent.tests_enabled;
  doc["return_baseline"] = c.return_baseline;
  doc["threads"] = c.threads;
  return doc;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, std::ostream& out) {
  out << "epoch,top1,top3,top5,avg_suggested,abnormal_found,suggestion_ratio,J_ret,J_ent,J_reb\n";
  const auto old_precision = out.precision(17);
  for (const auto& m : history)
    out << m.epoch << ',' << m.top1 << ',' << m.top3 << ',' << m.top5 << ',' << m.avg_suggested << ','
        << m.abnormal_found << ',' << m.suggestion_ratio << ',' << m.j_ret << ',' << m.j_ent << ',' << m.j_reb << '\n';
  out.precision(old_precision);
}

}  // namespace medsuggest
