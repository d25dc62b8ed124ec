#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace relex {

struct TripletClass {
  int subject_class = 0;
  int predicate = 0;
  int object_class = 0;

  friend auto operator<=>(const TripletClass&, const TripletClass&) = default;
};

// P(subject class, object class | predicate).
class PriorTable {
 public:
  enum class Mode { Uniform, Frequency };

  PriorTable() = default;

  static PriorTable uniform(std::size_t num_predicates, std::size_t num_classes);

  // freq(c_i, c_j | k) = count(c_i, k, c_j) / count(k). Predicates never
  // observed keep the uniform value 1/C^2 for every pair.
  static PriorTable frequency(std::span<const TripletClass> triplets,
                              std::size_t num_predicates, std::size_t num_classes);

  // Throws BoundsError for out-of-range ids.
  double lookup(int subject_class, int object_class, int predicate) const;

  Mode mode() const noexcept { return mode_; }
  std::size_t num_predicates() const noexcept { return num_predicates_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  bool observed(std::size_t predicate) const;

  nlohmann::json to_json() const;
  static PriorTable from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static PriorTable load(const std::filesystem::path& path);

  friend bool operator==(const PriorTable&, const PriorTable&) = default;

 private:
  std::size_t index(std::size_t k, std::size_t ci, std::size_t cj) const {
    return (k * num_classes_ + ci) * num_classes_ + cj;
  }

  Mode mode_ = Mode::Uniform;
  std::size_t num_predicates_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> table_;
  std::vector<bool> observed_;
};

}  // namespace relex
