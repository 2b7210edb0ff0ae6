#include "medsuggest/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace medsuggest {

using nlohmann::json;

FeatureSchema::FeatureSchema(std::vector<Demographic> demographics, std::vector<std::string> symptoms,
                             std::vector<TestSpec> tests)
    : demographics_(std::move(demographics)), symptoms_(std::move(symptoms)), tests_(std::move(tests)) {
  std::set<std::string> seen;
  auto claim = [&](const std::string& where, const std::string& id) {
    if (id.empty()) throw WorldError(where, "empty identifier");
    if (!seen.insert(id).second) throw WorldError(where, "duplicate identifier '" + id + "'");
  };
  for (std::size_t i = 0; i < demographics_.size(); ++i) {
    const auto where = "demographics[" + std::to_string(i) + "]";
    claim(where, demographics_[i].id);
    if (demographics_[i].values.empty()) throw WorldError(where, "demographic needs at least one value");
  }
  for (std::size_t i = 0; i < symptoms_.size(); ++i) claim("symptoms[" + std::to_string(i) + "]", symptoms_[i]);
  for (std::size_t i = 0; i < tests_.size(); ++i) {
    const auto where = "tests[" + std::to_string(i) + "]";
    claim(where, tests_[i].id);
    if (tests_[i].categories < 1) throw WorldError(where, "categories must be >= 1");
  }
}

FeatureKind FeatureSchema::kind(std::size_t feature) const {
  if (feature < demographics_.size()) return FeatureKind::Demographic;
  if (feature < demographics_.size() + symptoms_.size()) return FeatureKind::Symptom;
  if (feature < num_features()) return FeatureKind::Test;
  throw std::out_of_range("feature index out of range");
}

const std::string& FeatureSchema::feature_id(std::size_t feature) const {
  switch (kind(feature)) {
    case FeatureKind::Demographic: return demographics_[feature].id;
    case FeatureKind::Symptom: return symptoms_[feature - demographics_.size()];
    case FeatureKind::Test: return tests_[feature - demographics_.size() - symptoms_.size()].id;
  }
  throw std::logic_error("unreachable");
}

std::optional<std::size_t> FeatureSchema::find_feature(const std::string& id) const {
  for (std::size_t f = 0; f < num_features(); ++f)
    if (feature_id(f) == id) return f;
  return std::nullopt;
}

std::optional<std::size_t> FeatureSchema::find_symptom(const std::string& id) const {
  for (std::size_t i = 0; i < symptoms_.size(); ++i)
    if (symptoms_[i] == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> FeatureSchema::find_test(const std::string& id) const {
  for (std::size_t i = 0; i < tests_.size(); ++i)
    if (tests_[i].id == id) return i;
  return std::nullopt;
}

std::size_t FeatureSchema::domain_size(std::size_t feature) const {
  switch (kind(feature)) {
    case FeatureKind::Demographic: return demographics_[feature].values.size();
    case FeatureKind::Symptom: return 2;
    case FeatureKind::Test:
      return 1 + static_cast<std::size_t>(tests_[feature - demographics_.size() - symptoms_.size()].categories);
  }
  return 0;
}

int FeatureSchema::value_at(std::size_t feature, std::size_t domain_index) const {
  if (domain_index >= domain_size(feature)) throw std::out_of_range("domain index out of range");
  switch (kind(feature)) {
    case FeatureKind::Demographic: return static_cast<int>(domain_index);
    case FeatureKind::Symptom: return domain_index == 0 ? -1 : 1;
    case FeatureKind::Test: return domain_index == 0 ? -1 : static_cast<int>(domain_index);
  }
  return 0;
}

std::optional<std::size_t> FeatureSchema::domain_index(std::size_t feature, int value) const {
  const auto size = static_cast<int>(domain_size(feature));
  switch (kind(feature)) {
    case FeatureKind::Demographic:
      if (value >= 0 && value < size) return static_cast<std::size_t>(value);
      return std::nullopt;
    case FeatureKind::Symptom:
      if (value == -1) return 0;
      if (value == 1) return 1;
      return std::nullopt;
    case FeatureKind::Test:
      if (value == -1) return 0;
      if (value >= 1 && value < size) return static_cast<std::size_t>(value);
      return std::nullopt;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::observation_dim() const {
  std::size_t dim = symptoms_.size() + tests_.size();
  for (const auto& d : demographics_) dim += d.values.size();
  return dim;
}

WorldModel::WorldModel(FeatureSchema schema, std::vector<std::string> diseases,
                       std::vector<std::vector<Row>> cpt, double tolerance)
    : schema_(std::move(schema)), diseases_(std::move(diseases)), cpt_(std::move(cpt)) {
  if (diseases_.empty()) throw WorldError("diseases", "at least one disease is required");
  if (schema_.num_symptoms() == 0) throw WorldError("symptoms", "at least one symptom is required");
  std::set<std::string> seen;
  for (std::size_t d = 0; d < diseases_.size(); ++d) {
    const auto where = "diseases[" + std::to_string(d) + "]";
    if (diseases_[d].empty()) throw WorldError(where, "empty identifier");
    if (!seen.insert(diseases_[d]).second) throw WorldError(where, "duplicate disease '" + diseases_[d] + "'");
    if (schema_.find_feature(diseases_[d])) throw WorldError(where, "disease id collides with a feature id");
  }
  if (cpt_.size() != diseases_.size()) throw WorldError("cpt", "expected one table per disease");
  for (std::size_t d = 0; d < diseases_.size(); ++d) {
    if (cpt_[d].size() != schema_.num_features())
      throw WorldError("cpt." + diseases_[d], "expected one row per feature");
    double p_no_present = 1.0;
    for (std::size_t f = 0; f < schema_.num_features(); ++f) {
      const auto where = "cpt." + diseases_[d] + "." + schema_.feature_id(f);
      auto& row = cpt_[d][f];
      if (row.size() != schema_.domain_size(f))
        throw WorldError(where, "expected " + std::to_string(schema_.domain_size(f)) + " probabilities, got " +
                                    std::to_string(row.size()));
      double sum = 0.0;
      for (double p : row) {
        if (!std::isfinite(p) || p < 0.0) throw WorldError(where, "probabilities must be finite and nonnegative");
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance) {
        std::ostringstream msg;
        msg << "probabilities sum to " << sum << ", expected 1";
        throw WorldError(where, msg.str());
      }
      for (double& p : row) p /= sum;
      if (schema_.kind(f) == FeatureKind::Symptom) p_no_present *= row[0];
    }
    if (p_no_present >= 1.0)
      throw WorldError("cpt." + diseases_[d], "disease can never present a symptom");
  }
}

std::optional<std::size_t> WorldModel::find_disease(const std::string& id) const {
  for (std::size_t d = 0; d < diseases_.size(); ++d)
    if (diseases_[d] == id) return d;
  return std::nullopt;
}

namespace {

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw WorldError(where, std::string("missing key '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw WorldError(where + "." + key, e.what());
  }
}

}  // namespace

WorldModel parse_world(const json& doc) {
  if (!doc.is_object()) throw WorldError("", "world document must be a JSON object");
  auto diseases = get_field<std::vector<std::string>>(doc, "diseases", "world");
  auto symptoms = get_field<std::vector<std::string>>(doc, "symptoms", "world");

  std::vector<Demographic> demographics;
  if (doc.contains("demographics")) {
    const auto& arr = doc.at("demographics");
    if (!arr.is_array()) throw WorldError("demographics", "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto where = "demographics[" + std::to_string(i) + "]";
      demographics.push_back({get_field<std::string>(arr[i], "id", where),
                              get_field<std::vector<std::string>>(arr[i], "values", where)});
    }
  }
  std::vector<TestSpec> tests;
  if (doc.contains("tests")) {
    const auto& arr = doc.at("tests");
    if (!arr.is_array()) throw WorldError("tests", "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto where = "tests[" + std::to_string(i) + "]";
      tests.push_back({get_field<std::string>(arr[i], "id", where), get_field<int>(arr[i], "categories", where)});
    }
  }
  FeatureSchema schema(std::move(demographics), std::move(symptoms), std::move(tests));

  if (!doc.contains("cpt") || !doc.at("cpt").is_object()) throw WorldError("cpt", "missing or not an object");
  const auto& cpt_doc = doc.at("cpt");
  for (const auto& [key, _] : cpt_doc.items())
    if (std::find(diseases.begin(), diseases.end(), key) == diseases.end())
      throw WorldError("cpt." + key, "unknown disease");

  std::vector<std::vector<WorldModel::Row>> cpt(diseases.size());
  for (std::size_t d = 0; d < diseases.size(); ++d) {
    const auto where = "cpt." + diseases[d];
    if (!cpt_doc.contains(diseases[d])) throw WorldError(where, "missing table for disease");
    const auto& table = cpt_doc.at(diseases[d]);
    if (!table.is_object()) throw WorldError(where, "must be an object");
    for (const auto& [key, _] : table.items())
      if (!schema.find_feature(key)) throw WorldError(where + "." + key, "unknown feature");
    cpt[d].resize(schema.num_features());
    for (std::size_t f = 0; f < schema.num_features(); ++f) {
      const auto& id = schema.feature_id(f);
      if (!table.contains(id)) throw WorldError(where + "." + id, "missing row");
      cpt[d][f] = get_field<std::vector<double>>(table, id.c_str(), where);
    }
  }
  return WorldModel(std::move(schema), std::move(diseases), std::move(cpt));
}

json world_to_json(const WorldModel& world) {
  const auto& schema = world.schema();
  json doc;
  doc["diseases"] = world.diseases();
  doc["demographics"] = json::array();
  for (const auto& d : schema.demographics()) doc["demographics"].push_back({{"id", d.id}, {"values", d.values}});
  doc["symptoms"] = schema.symptoms();
  doc["tests"] = json::array();
  for (const auto& t : schema.tests()) doc["tests"].push_back({{"id", t.id}, {"categories", t.categories}});
  json cpt = json::object();
  for (std::size_t d = 0; d < world.num_diseases(); ++d) {
    json table = json::object();
    for (std::size_t f = 0; f < schema.num_features(); ++f) table[schema.feature_id(f)] = world.cpt(d, f);
    cpt[world.diseases()[d]] = std::move(table);
  }
  doc["cpt"] = std::move(cpt);
  return doc;
}

WorldModel load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw WorldError(path.string(), "cannot open world file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw WorldError(path.string(), std::string("parse error: ") + e.what());
  }
  return parse_world(doc);
}

void save_world(const WorldModel& world, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << world_to_json(world).dump(2) << "\n";
}

void validate_patient(const WorldModel& world, const Patient& patient) {
  const auto& schema = world.schema();
  if (patient.disease >= world.num_diseases()) throw WorldError("patient.disease", "unknown disease");
  if (patient.values.size() != schema.num_features()) throw WorldError("patient.values", "wrong feature count");
  for (std::size_t f = 0; f < schema.num_features(); ++f)
    if (!schema.in_domain(f, patient.values[f]))
      throw WorldError("patient." + schema.feature_id(f), "value " + std::to_string(patient.values[f]) +
                                                              " outside domain");
  if (patient.initial_symptom >= schema.num_symptoms() ||
      patient.symptom_value(schema, patient.initial_symptom) != 1)
    throw WorldError("patient.initial_symptom", "initial symptom must be present");
}

std::size_t pick_initial_symptom(const FeatureSchema& schema, const Patient& patient, Rng& rng) {
  std::vector<std::size_t> present;
  for (std::size_t s = 0; s < schema.num_symptoms(); ++s)
    if (patient.symptom_value(schema, s) == 1) present.push_back(s);
  if (present.empty()) throw std::logic_error("pick_initial_symptom: patient has no present symptom");
  return present[rng.index(present.size())];
}

Patient sample_patient(const WorldModel& world, Rng& rng, std::optional<std::size_t> disease) {
  const auto& schema = world.schema();
  Patient patient;
  if (disease) {
    if (*disease >= world.num_diseases()) throw std::invalid_argument("sample_patient: unknown disease");
    patient.disease = *disease;
  } else {
    patient.disease = rng.index(world.num_diseases());
  }
  patient.values.resize(schema.num_features());
  for (;;) {
    bool any_present = false;
    for (std::size_t f = 0; f < schema.num_features(); ++f) {
      const auto idx = rng.categorical(world.cpt(patient.disease, f));
      patient.values[f] = schema.value_at(f, idx);
      if (schema.kind(f) == FeatureKind::Symptom && patient.values[f] == 1) any_present = true;
    }
    if (any_present) break;
  }
  patient.initial_symptom = pick_initial_symptom(schema, patient, rng);
  return patient;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Dataset generate_dataset(const WorldModel& world, std::size_t n, Rng& rng, Split split) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be >= 1");
  Dataset ds{&world, {}, split};
  ds.patients.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.patients.push_back(sample_patient(world, rng));
  return ds;
}

void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
  if (!dataset.world) throw std::invalid_argument("write_dataset_csv: dataset has no world");
  const auto& world = *dataset.world;
  const auto& schema = world.schema();
  out << "disease,initial_symptom";
  for (std::size_t f = 0; f < schema.num_features(); ++f) out << ',' << schema.feature_id(f);
  out << '\n';
  for (const auto& p : dataset.patients) {
    out << world.diseases()[p.disease] << ',' << schema.symptoms()[p.initial_symptom];
    for (int v : p.values) out << ',' << v;
    out << '\n';
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset_csv(dataset, out);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset read_dataset_csv(const WorldModel& world, std::istream& in, Split split) {
  const auto& schema = world.schema();
  std::string line;
  if (!std::getline(in, line)) throw WorldError("csv:1", "missing header");
  const auto header = split_csv_line(line);
  if (header.size() != 2 + schema.num_features() || header[0] != "disease" || header[1] != "initial_symptom")
    throw WorldError("csv:1", "header must be disease,initial_symptom,<features in schema order>");
  for (std::size_t f = 0; f < schema.num_features(); ++f)
    if (header[2 + f] != schema.feature_id(f))
      throw WorldError("csv:1", "column '" + header[2 + f] + "' does not match feature '" + schema.feature_id(f) + "'");

  Dataset ds{&world, {}, split};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto where = "csv:" + std::to_string(lineno);
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw WorldError(where, "wrong number of columns");
    Patient p;
    const auto disease = world.find_disease(cells[0]);
    if (!disease) throw WorldError(where, "unknown disease '" + cells[0] + "'");
    const auto initial = schema.find_symptom(cells[1]);
    if (!initial) throw WorldError(where, "unknown symptom '" + cells[1] + "'");
    p.disease = *disease;
    p.initial_symptom = *initial;
    p.values.resize(schema.num_features());
    for (std::size_t f = 0; f < schema.num_features(); ++f) {
      try {
        std::size_t used = 0;
        p.values[f] = std::stoi(cells[2 + f], &used);
        if (used != cells[2 + f].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw WorldError(where, "bad integer in column '" + schema.feature_id(f) + "'");
      }
    }
    try {
      validate_patient(world, p);
    } catch (const WorldError& e) {
      throw WorldError(where, e.what());
    }
    ds.patients.push_back(std::move(p));
  }
  return ds;
}

Dataset load_dataset(const WorldModel& world, const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw WorldError(path.string(), "cannot open dataset file");
  return read_dataset_csv(world, in, split);
}

}  // namespace medsuggest
