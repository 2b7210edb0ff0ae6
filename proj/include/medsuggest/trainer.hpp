#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "medsuggest/checkpoint.hpp"
#include "medsuggest/env.hpp"
#include "medsuggest/hyper.hpp"
#include "medsuggest/net.hpp"

namespace medsuggest {

enum class RolloutMode { Train, Eval };

/// Agent-level switches that are not reward or optimizer settings.
struct AgentOptions {
  bool tests_enabled = true;  // false: q1 is never available (forced-q2 ablation)
};

/// SYM head layout: one query per symptom, then q1, then q2.
inline std::size_t quit1_index(const FeatureSchema& s) { return s.num_symptoms(); }
inline std::size_t quit2_index(const FeatureSchema& s) { return s.num_symptoms() + 1; }

/// SYM entries the agent may not pick: known symptoms, q1 when tests are
/// disabled, and in eval mode every query once t >= k so the agent must quit
/// instead of running into the query-limit penalty.
std::vector<std::uint8_t> sym_blocked(const FeatureSchema& schema, std::span<const std::uint8_t> known, int t,
                                      int query_limit, RolloutMode mode, const AgentOptions& options);

/// One chosen action with the statistics of the distribution it came from.
struct Decision {
  EnvAction action;
  std::size_t choice = 0;      // categorical index (SYM, DIS)
  std::vector<double> probs;   // masked categorical, or Bernoulli p for MED
  double log_prob = 0.0;
  double entropy = 0.0;
};

/// Picks an action from network outputs: sampled in train mode, argmax (and
/// argmax_subset for MED) in eval mode. `rng` may be null in eval mode.
Decision choose_action(const FeatureSchema& schema, const ForwardCache& cache, const PolicyOutputs& outputs,
                       Stage stage, std::span<const std::uint8_t> blocked, RolloutMode mode, Rng* rng);

/// Log-probability and entropy of a fixed categorical choice under masked logits.
double masked_log_prob(std::span<const double> logits, std::span<const std::uint8_t> blocked, std::size_t choice);

struct TargetVector {
  std::vector<double> g;  // 1 where the symptom is present or the test abnormal
};

TargetVector build_target_vector(const FeatureSchema& schema, const Patient& patient);

/// Binary cross-entropy -g.log z - (1-g).log(1-z), with z clamped.
double rebuild_loss(std::span<const double> z, const TargetVector& g);
/// d rebuild_loss / d z.
std::vector<double> rebuild_loss_gradient(std::span<const double> z, const TargetVector& g);

/// R_t = sum_{i>=t} gamma^{i-t} r_i
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

struct StepRecord {
  Stage stage = Stage::Sym;
  std::vector<double> observation;
  EnvAction action;
  std::size_t choice = 0;
  std::vector<std::uint8_t> blocked;  // SYM only
  std::vector<double> probs;
  double log_prob = 0.0;
  double entropy = 0.0;
  double reward = 0.0;
  std::vector<double> z;
  bool forced = false;  // label-guided replacement at DIS
  ForwardCache cache;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  bool terminal = false;
  std::size_t disease = 0;
  TargetVector target;

  std::vector<double> rewards() const;
};

/// Runs one episode. Train mode samples every stage and, at DIS, replaces the
/// sampled disease by the true label with probability epsilon (marked
/// forced). Eval mode is deterministic given params and patient.
Trajectory collect_episode(const StagewiseEnv& env, const Params& params, const Patient& patient, Rng* rng,
                           RolloutMode mode, const AgentOptions& options = {});

struct LossBreakdown {
  double ret = 0.0;  // sum_t gamma^t r_t
  double ent = 0.0;  // sum_t H(pi(s_t, .))
  double reb = 0.0;  // sum_t l(z_t, g)
  double total = 0.0;  // ret + beta*ent - kappa*reb
};

struct EpisodeGradients {
  LossBreakdown loss;
  std::vector<HeadGradients> heads;  // one per step, ascent direction of the surrogate
};

/// Head-logit gradients of
///   sum_t (R_t - baseline) log pi(a_t|s_t) + beta sum_t H_t - kappa sum_t l(z_t, g)
/// with returns-to-go R_t held fixed.
EpisodeGradients episode_objective(const Trajectory& traj, const HyperParams& hp, double return_baseline = 0.0);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  static AdamState for_params(const Params& p) {
    return {std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0), 0};
  }
};

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) ascending `grads`.
void adam_update(Params& params, std::span<const double> grads, AdamState& state, double learning_rate);

struct EpochMetrics {
  std::size_t epoch = 0;
  double top1 = 0.0;
  double top3 = 0.0;
  double top5 = 0.0;
  double avg_suggested = 0.0;
  double abnormal_found = 0.0;
  double suggestion_ratio = 0.0;
  double j_ret = 0.0;
  double j_ent = 0.0;
  double j_reb = 0.0;
};

struct TrainOptions {
  NetConfig net;
  std::uint64_t seed = 0;
  AgentOptions agent;
  bool return_baseline = false;  // batch-mean return baseline
  std::size_t threads = 1;       // episode collection workers; results do not depend on it
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;   // highest validation top-1
  Checkpoint last;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> history;
};

TrainResult train(const WorldModel& world, const Dataset& train_set, const Dataset& val_set, const HyperParams& hp,
                  const TrainOptions& options);

/// Everything the train command reads from its config file: the
/// hyperparameters (published defaults) plus network widths and agent flags.
struct TrainConfig {
  HyperParams hp;
  std::array<std::size_t, 2> encoder{256, 128};
  std::size_t decoder_hidden = 128;
  AgentOptions agent;
  bool return_baseline = false;
  std::size_t threads = 1;

  TrainOptions options(const WorldModel& world, std::uint64_t seed) const;
};

/// Missing keys keep their defaults. "network" may be "desk", "full" or
/// {"encoder": [h1, h2], "decoder_hidden": h}.
TrainConfig train_config_from_json(const nlohmann::json& doc);
nlohmann::json train_config_to_json(const TrainConfig& config);

void write_metrics_csv(const std::vector<EpochMetrics>& history, std::ostream& out);

}  // namespace medsuggest
