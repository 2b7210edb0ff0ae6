#pragma once

#include <cstddef>
#include <filesystem>

#include "json.hpp"

namespace medsuggest {

/// Reward constants, episode limits and optimizer settings. Defaults are the
/// published values; n and c are stored as magnitudes and applied negated.
struct HyperParams {
  double correct_reward = 0.8743;    // m
  double wrong_penalty = 0.7075;     // n
  double test_cost = 0.0084;         // c
  double abnormality_weight = 0.1915;  // lambda
  int query_limit = 9;               // k
  double discount = 0.99;            // gamma
  double entropy_weight = 0.0117;    // beta
  double rebuild_weight = 10.0;      // kappa
  double label_guided_epsilon = 0.0056;
  double learning_rate = 1e-4;       // alpha
  std::size_t batch_size = 512;
  std::size_t epochs = 30;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void validate() const;
};

HyperParams hyper_from_json(const nlohmann::json& doc);
nlohmann::json hyper_to_json(const HyperParams& hp);

}  // namespace medsuggest
