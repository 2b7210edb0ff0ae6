#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "medsuggest/trainer.hpp"

namespace medsuggest {

/// What one deterministic (eval-mode) episode did.
struct EpisodeOutcome {
  std::size_t disease = 0;
  bool reached_prediction = false;
  std::vector<double> pi_dis;       // distribution at the DIS step
  std::size_t true_rank = 0;        // 0-based rank of the true label in pi_dis
  std::size_t predicted = 0;
  bool entered_med = false;
  ActionSet suggested;              // empty unless entered_med
  std::size_t abnormal_found = 0;   // abnormal results among suggested tests
  std::size_t abnormal_total = 0;   // abnormal test results the patient carries
  std::size_t queries = 0;
};

/// 0-based position of `label` when diseases are sorted by descending
/// probability; ties resolve to the lower disease index first.
std::size_t rank_of(std::span<const double> probs, std::size_t label);

EpisodeOutcome run_eval_episode(const StagewiseEnv& env, const Params& params, const Patient& patient,
                                const AgentOptions& options = {});

double top_k_accuracy(const StagewiseEnv& env, const Params& params, const Dataset& dataset, std::size_t k,
                      const AgentOptions& options = {});

struct SuggestionStats {
  double suggestion_ratio = 0.0;  // episodes with a nonempty suggestion set
  double med_entry_ratio = 0.0;   // episodes that entered MED, empty sets included
  double mean_suggested = 0.0;    // mean |set| over nonempty suggestions; 0 if none
  double discovery_ratio = 0.0;   // abnormal found / abnormal results in the dataset; 0 if none
  double mean_abnormal_found = 0.0;  // per nonempty-suggestion episode
};

SuggestionStats suggestion_stats(const StagewiseEnv& env, const Params& params, const Dataset& dataset,
                                 const AgentOptions& options = {});

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> top_k;  // aligned with ks
  double top1 = 0.0;
  double top3 = 0.0;
  double top5 = 0.0;
  SuggestionStats suggestions;
  std::size_t episodes = 0;
  double mean_queries = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Aggregates top-k accuracies, suggestion statistics and the confusion
/// matrix from a single eval pass. Rejects an empty dataset.
EvalReport evaluate(const StagewiseEnv& env, const Params& params, const Dataset& dataset,
                    const AgentOptions& options = {}, std::vector<std::size_t> ks = {1, 3, 5});

nlohmann::json report_to_json(const EvalReport& report, const WorldModel& world);
/// Writes report.json and confusion.csv into `dir` (created if missing).
void write_report(const EvalReport& report, const WorldModel& world, const std::filesystem::path& dir);

}  // namespace medsuggest
