#include "medsuggest/hyper.hpp"

#include <stdexcept>
#include <string>

namespace medsuggest {

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be > 0");
  };
  positive(correct_reward, "m");
  positive(wrong_penalty, "n");
  positive(test_cost, "c");
  positive(abnormality_weight, "lambda");
  positive(entropy_weight, "beta");
  positive(rebuild_weight, "kappa");
  positive(learning_rate, "alpha");
  if (!(label_guided_epsilon >= 0.0 && label_guided_epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (query_limit < 1) throw std::invalid_argument("k must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

HyperParams hyper_from_json(const nlohmann::json& doc) {
  HyperParams hp;
  hp.correct_reward = doc.value("m", hp.correct_reward);
  hp.wrong_penalty = doc.value("n", hp.wrong_penalty);
  hp.test_cost = doc.value("c", hp.test_cost);
  hp.abnormality_weight = doc.value("lambda", hp.abnormality_weight);
  hp.query_limit = doc.value("k", hp.query_limit);
  hp.discount = doc.value("gamma", hp.discount);
  hp.entropy_weight = doc.value("beta", hp.entropy_weight);
  hp.rebuild_weight = doc.value("kappa", hp.rebuild_weight);
  hp.label_guided_epsilon = doc.value("epsilon", hp.label_guided_epsilon);
  hp.learning_rate = doc.value("alpha", hp.learning_rate);
  hp.batch_size = doc.value("batch_size", hp.batch_size);
  hp.epochs = doc.value("epochs", hp.epochs);
  hp.validate();
  return hp;
}

nlohmann::json hyper_to_json(const HyperParams& hp) {
  return {{"m", hp.correct_reward},      {"n", hp.wrong_penalty},
          {"c", hp.test_cost},           {"lambda", hp.abnormality_weight},
          {"k", hp.query_limit},         {"gamma", hp.discount},
          {"beta", hp.entropy_weight},   {"kappa", hp.rebuild_weight},
          {"epsilon", hp.label_guided_epsilon}, {"alpha", hp.learning_rate},
          {"batch_size", hp.batch_size}, {"epochs", hp.epochs}};
}

}  // namespace medsuggest
