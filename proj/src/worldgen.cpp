#include "medsuggest/worldgen.hpp"

#include <cmath>
#include <fstream>

namespace medsuggest {

using nlohmann::json;

WorldRecipe parse_recipe(const json& doc) {
  WorldRecipe r;
  try {
    r.seed = doc.value("seed", r.seed);
    if (doc.contains("demographics"))
      for (const auto& d : doc.at("demographics"))
        r.demographics.push_back({d.at("id").get<std::string>(), d.at("values").get<std::vector<std::string>>()});
    r.groups = doc.at("groups").get<std::vector<std::vector<std::string>>>();
    r.num_symptoms = doc.value("num_symptoms", r.num_symptoms);
    r.signature_symptoms_per_group = doc.value("signature_symptoms_per_group", r.signature_symptoms_per_group);
    if (doc.contains("tests"))
      for (const auto& t : doc.at("tests"))
        r.tests.push_back({t.at("id").get<std::string>(), t.value("categories", 3)});
    r.p_signature = doc.value("p_signature", r.p_signature);
    r.p_background = doc.value("p_background", r.p_background);
    r.p_dedicated = doc.value("p_dedicated", r.p_dedicated);
    r.p_test_background = doc.value("p_test_background", r.p_test_background);
  } catch (const json::exception& e) {
    throw WorldError("recipe", e.what());
  }
  return r;
}

WorldRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw WorldError(path.string(), "cannot open recipe file");
  try {
    return parse_recipe(json::parse(in));
  } catch (const json::parse_error& e) {
    throw WorldError(path.string(), std::string("parse error: ") + e.what());
  }
}

namespace {

std::vector<double> abnormal_row(double p_abnormal, const std::vector<double>& category_weights) {
  std::vector<double> row{1.0 - p_abnormal};
  double total = 0.0;
  for (double w : category_weights) total += w;
  for (double w : category_weights) row.push_back(p_abnormal * w / total);
  return row;
}

}  // namespace

WorldModel generate_world(const WorldRecipe& recipe) {
  if (recipe.groups.empty()) throw WorldError("recipe.groups", "no disease groups");
  const std::size_t num_groups = recipe.groups.size();
  if (num_groups * recipe.signature_symptoms_per_group > recipe.num_symptoms)
    throw WorldError("recipe.num_symptoms", "not enough symptoms for the signature blocks");
  std::size_t dedicated_needed = 0;
  for (const auto& g : recipe.groups) {
    if (g.empty()) throw WorldError("recipe.groups", "empty group");
    dedicated_needed += g.size() - 1;
  }
  if (dedicated_needed > recipe.tests.size())
    throw WorldError("recipe.tests", "need " + std::to_string(dedicated_needed) + " tests to separate group members");

  Rng rng(recipe.seed);
  std::vector<std::string> symptoms;
  for (std::size_t s = 0; s < recipe.num_symptoms; ++s) symptoms.push_back("s" + std::to_string(s));
  FeatureSchema schema(recipe.demographics, symptoms, recipe.tests);

  std::vector<std::string> diseases;
  std::vector<std::size_t> group_of;
  std::vector<std::optional<std::size_t>> dedicated_test;
  std::size_t next_test = 0;
  for (std::size_t g = 0; g < num_groups; ++g) {
    for (std::size_t i = 0; i < recipe.groups[g].size(); ++i) {
      diseases.push_back(recipe.groups[g][i]);
      group_of.push_back(g);
      if (i + 1 < recipe.groups[g].size()) dedicated_test.push_back(next_test++);
      else dedicated_test.push_back(std::nullopt);
    }
  }

  // Per-group tables shared by every member; drawn once so members stay identical.
  std::vector<std::vector<std::vector<double>>> demo_rows(num_groups);
  std::vector<std::vector<double>> symptom_p(num_groups, std::vector<double>(recipe.num_symptoms));
  std::vector<std::vector<double>> noise_test_p(num_groups, std::vector<double>(recipe.tests.size()));
  for (std::size_t g = 0; g < num_groups; ++g) {
    for (const auto& demo : recipe.demographics) {
      std::vector<double> w;
      double total = 0.0;
      for (std::size_t v = 0; v < demo.values.size(); ++v) {
        w.push_back(0.5 + rng.uniform());
        total += w.back();
      }
      for (double& x : w) x /= total;
      demo_rows[g].push_back(std::move(w));
    }
    const std::size_t first_sig = g * recipe.signature_symptoms_per_group;
    for (std::size_t s = 0; s < recipe.num_symptoms; ++s) {
      const bool signature = s >= first_sig && s < first_sig + recipe.signature_symptoms_per_group;
      symptom_p[g][s] = signature ? recipe.p_signature : recipe.p_background * (0.5 + rng.uniform());
    }
    for (std::size_t t = 0; t < recipe.tests.size(); ++t)
      noise_test_p[g][t] = recipe.p_test_background * (0.5 + rng.uniform());
  }
  std::vector<std::vector<double>> category_weights;
  for (const auto& t : recipe.tests) {
    std::vector<double> w;
    for (int c = 0; c < t.categories; ++c) w.push_back(0.5 + rng.uniform());
    category_weights.push_back(std::move(w));
  }
  std::vector<bool> is_dedicated(recipe.tests.size(), false);
  for (const auto& t : dedicated_test)
    if (t) is_dedicated[*t] = true;

  std::vector<std::vector<WorldModel::Row>> cpt(diseases.size());
  for (std::size_t d = 0; d < diseases.size(); ++d) {
    const std::size_t g = group_of[d];
    for (std::size_t i = 0; i < recipe.demographics.size(); ++i) cpt[d].push_back(demo_rows[g][i]);
    for (std::size_t s = 0; s < recipe.num_symptoms; ++s) cpt[d].push_back({1.0 - symptom_p[g][s], symptom_p[g][s]});
    for (std::size_t t = 0; t < recipe.tests.size(); ++t) {
      double p_abn;
      if (dedicated_test[d] == t) p_abn = recipe.p_dedicated;
      else if (is_dedicated[t]) p_abn = recipe.p_test_background;
      else p_abn = noise_test_p[g][t];
      cpt[d].push_back(abnormal_row(p_abn, category_weights[t]));
    }
  }
  return WorldModel(std::move(schema), std::move(diseases), std::move(cpt));
}

Confusability analyse_confusability(const WorldModel& world, double tolerance) {
  const auto& schema = world.schema();
  auto same = [&](std::size_t a, std::size_t b) {
    for (std::size_t f = 0; f < schema.num_features(); ++f) {
      if (schema.kind(f) == FeatureKind::Test) continue;
      const auto& ra = world.cpt(a, f);
      const auto& rb = world.cpt(b, f);
      for (std::size_t i = 0; i < ra.size(); ++i)
        if (std::abs(ra[i] - rb[i]) > tolerance) return false;
    }
    return true;
  };
  const std::size_t n = world.num_diseases();
  std::vector<std::size_t> group(n, n);
  Confusability c;
  c.diseases = n;
  for (std::size_t d = 0; d < n; ++d) {
    if (group[d] != n) continue;
    group[d] = c.groups;
    std::size_t members = 1;
    for (std::size_t e = d + 1; e < n; ++e)
      if (group[e] == n && same(d, e)) {
        group[e] = c.groups;
        ++members;
      }
    if (members == 1) ++c.separable;
    else c.confusable += members;
    ++c.groups;
  }
  return c;
}

}  // namespace medsuggest
