#include "relex/prior.hpp"

#include <fstream>
#include <string>

#include "relex/errors.hpp"

namespace relex {

using nlohmann::json;

namespace {

void check_id(int id, std::size_t bound, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= bound) {
    throw BoundsError(std::string(what) + " id " + std::to_string(id) + " outside [0, " +
                      std::to_string(bound) + ")");
  }
}

}  // namespace

PriorTable PriorTable::uniform(std::size_t num_predicates, std::size_t num_classes) {
  if (num_predicates == 0 || num_classes == 0) {
    throw ValidationError("prior needs at least one predicate and one class");
  }
  PriorTable t;
  t.mode_ = Mode::Uniform;
  t.num_predicates_ = num_predicates;
  t.num_classes_ = num_classes;
  t.observed_.assign(num_predicates, false);
  return t;
}

PriorTable PriorTable::frequency(std::span<const TripletClass> triplets,
                                 std::size_t num_predicates, std::size_t num_classes) {
  PriorTable t = uniform(num_predicates, num_classes);
  t.mode_ = Mode::Frequency;
  t.table_.assign(num_predicates * num_classes * num_classes, 0.0);
  std::vector<std::size_t> per_predicate(num_predicates, 0);
  std::vector<std::size_t> counts(t.table_.size(), 0);
  for (const TripletClass& tc : triplets) {
    check_id(tc.subject_class, num_classes, "subject class");
    check_id(tc.object_class, num_classes, "object class");
    check_id(tc.predicate, num_predicates, "predicate");
    ++counts[t.index(tc.predicate, tc.subject_class, tc.object_class)];
    ++per_predicate[tc.predicate];
  }
  const double fallback = 1.0 / static_cast<double>(num_classes * num_classes);
  for (std::size_t k = 0; k < num_predicates; ++k) {
    t.observed_[k] = per_predicate[k] > 0;
    for (std::size_t ci = 0; ci < num_classes; ++ci) {
      for (std::size_t cj = 0; cj < num_classes; ++cj) {
        const std::size_t i = t.index(k, ci, cj);
        t.table_[i] = t.observed_[k] ? static_cast<double>(counts[i]) /
                                           static_cast<double>(per_predicate[k])
                                     : fallback;
      }
    }
  }
  return t;
}

double PriorTable::lookup(int subject_class, int object_class, int predicate) const {
  check_id(subject_class, num_classes_, "subject class");
  check_id(object_class, num_classes_, "object class");
  check_id(predicate, num_predicates_, "predicate");
  if (mode_ == Mode::Uniform) {
    return 1.0 / static_cast<double>(num_classes_ * num_classes_);
  }
  return table_[index(predicate, subject_class, object_class)];
}

bool PriorTable::observed(std::size_t predicate) const {
  if (predicate >= num_predicates_) throw BoundsError("predicate id out of range");
  return observed_[predicate];
}

json PriorTable::to_json() const {
  json doc = {{"format", "relex-prior"},
              {"version", 1},
              {"mode", mode_ == Mode::Uniform ? "uniform" : "frequency"},
              {"num_predicates", num_predicates_},
              {"num_classes", num_classes_}};
  if (mode_ == Mode::Frequency) {
    json entries = json::array();
    json unobserved = json::array();
    for (std::size_t k = 0; k < num_predicates_; ++k) {
      if (!observed_[k]) {
        unobserved.push_back(k);
        continue;
      }
      for (std::size_t ci = 0; ci < num_classes_; ++ci) {
        for (std::size_t cj = 0; cj < num_classes_; ++cj) {
          const double v = table_[index(k, ci, cj)];
          if (v != 0.0) entries.push_back({k, ci, cj, v});
        }
      }
    }
    doc["entries"] = std::move(entries);
    doc["unobserved_predicates"] = std::move(unobserved);
  }
  return doc;
}

PriorTable PriorTable::from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "relex-prior") {
      throw FormatError("document is not a relationship prior");
    }
    if (doc.at("version").get<int>() != 1) {
      throw VersionError("unsupported prior version " + doc.at("version").dump());
    }
    const auto num_predicates = doc.at("num_predicates").get<std::size_t>();
    const auto num_classes = doc.at("num_classes").get<std::size_t>();
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "uniform") return uniform(num_predicates, num_classes);
    if (mode != "frequency") throw FormatError("unknown prior mode '" + mode + "'");

    PriorTable t = uniform(num_predicates, num_classes);
    t.mode_ = Mode::Frequency;
    t.table_.assign(num_predicates * num_classes * num_classes, 0.0);
    t.observed_.assign(num_predicates, true);
    const double fallback = 1.0 / static_cast<double>(num_classes * num_classes);
    for (const json& k : doc.at("unobserved_predicates")) {
      const auto kk = k.get<std::size_t>();
      if (kk >= num_predicates) throw BoundsError("unobserved predicate id out of range");
      t.observed_[kk] = false;
      for (std::size_t i = 0; i < num_classes * num_classes; ++i) {
        t.table_[kk * num_classes * num_classes + i] = fallback;
      }
    }
    for (const json& e : doc.at("entries")) {
      const int k = e.at(0).get<int>();
      const int ci = e.at(1).get<int>();
      const int cj = e.at(2).get<int>();
      check_id(k, num_predicates, "predicate");
      check_id(ci, num_classes, "subject class");
      check_id(cj, num_classes, "object class");
      const double v = e.at(3).get<double>();
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("prior entry outside [0, 1]");
      t.table_[t.index(k, ci, cj)] = v;
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed prior: ") + e.what());
  }
}

void PriorTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write prior " + path.string());
  out << to_json().dump() << '\n';
}

PriorTable PriorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read prior " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError("malformed prior " + path.string() + ": " + e.what());
  }
}

}  // namespace relex
