#include "medsuggest/eval.hpp"

#include <fstream>
#include <stdexcept>

namespace medsuggest {

std::size_t rank_of(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("rank_of: label out of range");
  std::size_t rank = 0;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (probs[j] > probs[label] || (probs[j] == probs[label] && j < label)) ++rank;
  return rank;
}

EpisodeOutcome run_eval_episode(const StagewiseEnv& env, const Params& params, const Patient& patient,
                                const AgentOptions& options) {
  const auto& schema = env.world().schema();
  const auto traj = collect_episode(env, params, patient, nullptr, RolloutMode::Eval, options);
  EpisodeOutcome out;
  out.disease = patient.disease;
  out.suggested = ActionSet(schema.num_tests());
  for (std::size_t j = 0; j < schema.num_tests(); ++j)
    if (patient.test_value(schema, j) > 0) ++out.abnormal_total;
  for (const auto& rec : traj.steps) {
    switch (rec.stage) {
      case Stage::Sym:
        if (std::holds_alternative<QuerySymptom>(rec.action)) ++out.queries;
        break;
      case Stage::Med:
        out.entered_med = true;
        out.suggested = std::get<SuggestTests>(rec.action).tests;
        for (auto j : out.suggested.members())
          if (patient.test_value(schema, j) > 0) ++out.abnormal_found;
        break;
      case Stage::Dis:
        out.reached_prediction = true;
        out.pi_dis = rec.probs;
        out.predicted = rec.choice;
        out.true_rank = rank_of(out.pi_dis, patient.disease);
        break;
      case Stage::Terminal: break;
    }
  }
  return out;
}

namespace {

struct Tally {
  std::size_t episodes = 0;
  std::size_t entered_med = 0;
  std::size_t nonempty = 0;
  std::size_t suggested_total = 0;
  std::size_t abnormal_found = 0;
  std::size_t abnormal_total = 0;
  std::size_t queries = 0;

  void add(const EpisodeOutcome& o) {
    ++episodes;
    queries += o.queries;
    abnormal_total += o.abnormal_total;
    if (!o.entered_med) return;
    ++entered_med;
    const auto n = o.suggested.count();
    if (n == 0) return;
    ++nonempty;
    suggested_total += n;
    abnormal_found += o.abnormal_found;
  }

  SuggestionStats stats() const {
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    return {ratio(nonempty, episodes), ratio(entered_med, episodes), ratio(suggested_total, nonempty),
            ratio(abnormal_found, abnormal_total), ratio(abnormal_found, nonempty)};
  }
};

}  // namespace

double top_k_accuracy(const StagewiseEnv& env, const Params& params, const Dataset& dataset, std::size_t k,
                      const AgentOptions& options) {
  if (k < 1) throw std::invalid_argument("top_k_accuracy: k must be >= 1");
  if (dataset.patients.empty()) throw std::invalid_argument("top_k_accuracy: empty dataset");
  std::size_t hits = 0;
  for (const auto& p : dataset.patients) {
    const auto o = run_eval_episode(env, params, p, options);
    if (o.reached_prediction && o.true_rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.patients.size());
}

SuggestionStats suggestion_stats(const StagewiseEnv& env, const Params& params, const Dataset& dataset,
                                 const AgentOptions& options) {
  Tally tally;
  for (const auto& p : dataset.patients) tally.add(run_eval_episode(env, params, p, options));
  return tally.stats();
}

EvalReport evaluate(const StagewiseEnv& env, const Params& params, const Dataset& dataset, const AgentOptions& options,
                    std::vector<std::size_t> ks) {
  if (dataset.patients.empty()) throw std::invalid_argument("evaluate: empty dataset");
  for (auto k : ks)
    if (k < 1) throw std::invalid_argument("evaluate: k must be >= 1");
  const std::size_t nd = env.world().num_diseases();
  EvalReport report;
  report.ks = ks;
  report.confusion.assign(nd, std::vector<std::size_t>(nd, 0));
  std::vector<std::size_t> hits(ks.size(), 0);
  std::size_t hit1 = 0, hit3 = 0, hit5 = 0;
  Tally tally;
  for (const auto& p : dataset.patients) {
    const auto o = run_eval_episode(env, params, p, options);
    tally.add(o);
    if (!o.reached_prediction) continue;
    ++report.confusion[o.disease][o.predicted];
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (o.true_rank < ks[i]) ++hits[i];
    hit1 += o.true_rank < 1;
    hit3 += o.true_rank < 3;
    hit5 += o.true_rank < 5;
  }
  const double n = static_cast<double>(dataset.patients.size());
  for (auto h : hits) report.top_k.push_back(static_cast<double>(h) / n);
  report.top1 = static_cast<double>(hit1) / n;
  report.top3 = static_cast<double>(hit3) / n;
  report.top5 = static_cast<double>(hit5) / n;
  report.suggestions = tally.stats();
  report.episodes = dataset.patients.size();
  report.mean_queries = static_cast<double>(tally.queries) / n;
  return report;
}

nlohmann::json report_to_json(const EvalReport& report, const WorldModel& world) {
  nlohmann::json top_k = nlohmann::json::object();
  for (std::size_t i = 0; i < report.ks.size(); ++i) top_k[std::to_string(report.ks[i])] = report.top_k[i];
  const auto& s = report.suggestions;
  return {{"schema_version", 1},
          {"episodes", report.episodes},
          {"top_k", top_k},
          {"top1", report.top1},
          {"top3", report.top3},
          {"top5", report.top5},
          {"suggestion_ratio", s.suggestion_ratio},
          {"suggestion_ratio_including_empty", s.med_entry_ratio},
          {"mean_suggested_tests", s.mean_suggested},
          {"abnormality_discovery_ratio", s.discovery_ratio},
          {"mean_abnormal_found", s.mean_abnormal_found},
          {"mean_symptom_queries", report.mean_queries},
          {"diseases", world.diseases()},
          {"confusion", report.confusion}};
}

void write_report(const EvalReport& report, const WorldModel& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "report.json").string());
    out << report_to_json(report, world).dump(2) << "\n";
  }
  std::ofstream csv(dir / "confusion.csv");
  if (!csv) throw std::runtime_error("cannot write " + (dir / "confusion.csv").string());
  csv << "true\\predicted";
  for (const auto& d : world.diseases()) csv << ',' << d;
  csv << '\n';
  for (std::size_t i = 0; i < report.confusion.size(); ++i) {
    csv << world.diseases()[i];
    for (auto c : report.confusion[i]) csv << ',' << c;
    csv << '\n';
  }
}

}  // namespace medsuggest
