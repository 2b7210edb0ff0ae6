#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medsuggest/world.hpp"

namespace medsuggest {

/// Recipe for a synthetic world with controlled confusability.
///
/// Diseases are partitioned into groups. Each group owns a block of
/// signature symptoms that are likely present for every member, so the
/// members of one group share their symptom and demographic tables exactly.
/// Inside a group of size g, the first g-1 members each own a dedicated test
/// that tends to come back abnormal for that member only; the last member is
/// identified by all of those tests being normal. Tests beyond the dedicated
/// ones are background noise for every disease.
struct WorldRecipe {
  std::uint64_t seed = 1;
  std::vector<Demographic> demographics;
  std::vector<std::vector<std::string>> groups;  // disease ids, grouped
  std::size_t num_symptoms = 20;
  std::size_t signature_symptoms_per_group = 3;
  std::vector<TestSpec> tests;
  double p_signature = 0.85;    // P(+1) of a group's signature symptom
  double p_background = 0.05;   // mean P(+1) of any other symptom
  double p_dedicated = 0.95;    // P(abnormal) of a member's dedicated test
  double p_test_background = 0.03;
};

WorldRecipe parse_recipe(const nlohmann::json& doc);
WorldRecipe load_recipe(const std::filesystem::path& path);

/// Builds the world; deterministic in the recipe (including its seed).
WorldModel generate_world(const WorldRecipe& recipe);

/// Number of diseases that share their symptom and demographic tables with
/// no other disease, and the number that do.
struct Confusability {
  std::size_t separable = 0;
  std::size_t confusable = 0;
  std::size_t groups = 0;
  std::size_t diseases = 0;

  /// Best top-1 accuracy reachable without tests under uniform disease
  /// sampling: one disease per indistinguishable group can be called.
  double symptom_only_ceiling() const {
    return diseases == 0 ? 0.0 : static_cast<double>(groups) / static_cast<double>(diseases);
  }
};

/// Groups diseases whose symptom and demographic rows are identical and
/// counts singleton versus shared groups. Any world can be analysed; the
/// result feeds the symptoms-only accuracy ceiling.
Confusability analyse_confusability(const WorldModel& world, double tolerance = 1e-12);

}  // namespace medsuggest
