#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "medsuggest/rng.hpp"

namespace medsuggest {

/// Raised when a world or dataset file fails validation. `location` names the
/// offending entry, e.g. "cpt.flu.cough".
class WorldError : public std::runtime_error {
 public:
  WorldError(std::string location, const std::string& message)
      : std::runtime_error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

struct Demographic {
  std::string id;
  std::vector<std::string> values;
};

struct TestSpec {
  std::string id;
  int categories = 1;  // abnormal outcomes 1..categories; -1 is normal
};

enum class FeatureKind { Demographic, Symptom, Test };

/// Feature identifiers and value domains. Features are indexed globally in
/// schema order: demographics, then symptoms, then tests.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<Demographic> demographics, std::vector<std::string> symptoms,
                std::vector<TestSpec> tests);

  const std::vector<Demographic>& demographics() const { return demographics_; }
  const std::vector<std::string>& symptoms() const { return symptoms_; }
  const std::vector<TestSpec>& tests() const { return tests_; }

  std::size_t num_demographics() const { return demographics_.size(); }
  std::size_t num_symptoms() const { return symptoms_.size(); }
  std::size_t num_tests() const { return tests_.size(); }
  std::size_t num_features() const { return demographics_.size() + symptoms_.size() + tests_.size(); }

  std::size_t symptom_feature(std::size_t symptom) const { return demographics_.size() + symptom; }
  std::size_t test_feature(std::size_t test) const {
    return demographics_.size() + symptoms_.size() + test;
  }

  FeatureKind kind(std::size_t feature) const;
  const std::string& feature_id(std::size_t feature) const;
  std::optional<std::size_t> find_feature(const std::string& id) const;
  std::optional<std::size_t> find_symptom(const std::string& id) const;
  std::optional<std::size_t> find_test(const std::string& id) const;

  /// Number of values a feature can take (length of its CPT row).
  std::size_t domain_size(std::size_t feature) const;
  /// Realized value for a CPT domain position: symptoms {-1,+1}, tests
  /// {-1,1..C}, demographics the category index itself.
  int value_at(std::size_t feature, std::size_t domain_index) const;
  /// Inverse of value_at; nullopt when the value is outside the domain.
  std::optional<std::size_t> domain_index(std::size_t feature, int value) const;
  bool in_domain(std::size_t feature, int value) const { return domain_index(feature, value).has_value(); }

  /// Symptom and test slots plus one-hot widths of every demographic.
  std::size_t observation_dim() const;
  /// Symptoms followed by tests; the length of the rebuild target.
  std::size_t num_abnormality_slots() const { return symptoms_.size() + tests_.size(); }

 private:
  std::vector<Demographic> demographics_;
  std::vector<std::string> symptoms_;
  std::vector<TestSpec> tests_;
};

/// Disease list plus P(feature value | disease) for every pair. Immutable
/// after construction.
class WorldModel {
 public:
  using Row = std::vector<double>;

  WorldModel() = default;
  /// Validates and renormalizes rows. `cpt[d][f]` is the row for disease d and
  /// global feature f. Throws WorldError.
  WorldModel(FeatureSchema schema, std::vector<std::string> diseases,
             std::vector<std::vector<Row>> cpt, double tolerance = 1e-6);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<std::string>& diseases() const { return diseases_; }
  std::size_t num_diseases() const { return diseases_.size(); }
  std::optional<std::size_t> find_disease(const std::string& id) const;
  const Row& cpt(std::size_t disease, std::size_t feature) const { return cpt_[disease][feature]; }
  std::size_t num_cpt_rows() const { return diseases_.size() * schema_.num_features(); }

 private:
  FeatureSchema schema_;
  std::vector<std::string> diseases_;
  std::vector<std::vector<Row>> cpt_;
};

WorldModel parse_world(const nlohmann::json& doc);
nlohmann::json world_to_json(const WorldModel& world);
WorldModel load_world(const std::filesystem::path& path);
void save_world(const WorldModel& world, const std::filesystem::path& path);

struct Patient {
  std::size_t disease = 0;
  std::vector<int> values;  // indexed by global feature
  std::size_t initial_symptom = 0;  // symptom index

  int symptom_value(const FeatureSchema& s, std::size_t symptom) const {
    return values[s.symptom_feature(symptom)];
  }
  int test_value(const FeatureSchema& s, std::size_t test) const { return values[s.test_feature(test)]; }
};

/// Checks the Patient invariants against a world; throws WorldError.
void validate_patient(const WorldModel& world, const Patient& patient);

/// Uniform over the patient's present symptoms.
std::size_t pick_initial_symptom(const FeatureSchema& schema, const Patient& patient, Rng& rng);

/// Disease uniform unless given; features drawn independently from the CPT.
/// Draws with no present symptom are rejected and redrawn.
Patient sample_patient(const WorldModel& world, Rng& rng, std::optional<std::size_t> disease = std::nullopt);

enum class Split { Train, Val, Test };
const char* split_name(Split split);

struct Dataset {
  const WorldModel* world = nullptr;
  std::vector<Patient> patients;
  Split split = Split::Train;

  std::size_t size() const { return patients.size(); }
};

Dataset generate_dataset(const WorldModel& world, std::size_t n, Rng& rng, Split split);

void write_dataset_csv(const Dataset& dataset, std::ostream& out);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset_csv(const WorldModel& world, std::istream& in, Split split);
Dataset load_dataset(const WorldModel& world, const std::filesystem::path& path, Split split);

}  // namespace medsuggest
