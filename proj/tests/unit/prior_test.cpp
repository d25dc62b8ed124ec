#include <doctest.h>

#include <filesystem>

#include "relex/errors.hpp"
#include "relex/prior.hpp"

using namespace relex;

namespace {
constexpr int person = 0, horse = 1, bike = 2, ride = 0;
}

TEST_CASE("frequency counts") {
  const std::vector<TripletClass> t = {{person, ride, horse}, {person, ride, horse},
                                       {person, ride, horse}, {person, ride, bike}};
  const PriorTable p = PriorTable::frequency(t, 2, 3);
  CHECK(p.mode() == PriorTable::Mode::Frequency);
  CHECK(p.lookup(person, horse, ride) == 0.75);
  CHECK(p.lookup(person, bike, ride) == 0.25);
  CHECK(p.lookup(horse, person, ride) == 0.0);
  CHECK(p.observed(ride));
  CHECK_FALSE(p.observed(1));
  CHECK(p.lookup(bike, bike, 1) == doctest::Approx(1.0 / 9.0));

  double sum = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) sum += p.lookup(a, b, ride);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("empty triplet list falls back to uniform rows") {
  const PriorTable p = PriorTable::frequency({}, 3, 4);
  for (int k = 0; k < 3; ++k) {
    CHECK_FALSE(p.observed(static_cast<std::size_t>(k)));
    CHECK(p.lookup(1, 2, k) == 1.0 / 16.0);
  }
}

TEST_CASE("uniform prior") {
  const PriorTable p = PriorTable::uniform(5, 10);
  CHECK(p.lookup(3, 7, 4) == doctest::Approx(0.01));
  CHECK(p.lookup(0, 0, 0) == p.lookup(9, 9, 4));
}

TEST_CASE("out of range ids") {
  const PriorTable p = PriorTable::uniform(2, 3);
  CHECK_THROWS_AS(p.lookup(3, 0, 0), BoundsError);
  CHECK_THROWS_AS(p.lookup(0, -1, 0), BoundsError);
  CHECK_THROWS_AS(p.lookup(0, 0, 2), BoundsError);
  CHECK_THROWS_AS(PriorTable::frequency(std::vector<TripletClass>{{0, 5, 0}}, 2, 3), BoundsError);
}

TEST_CASE("serialization round trip") {
  const std::vector<TripletClass> t = {{0, 0, 1}, {1, 0, 1}, {2, 2, 0}};
  const PriorTable p = PriorTable::frequency(t, 4, 3);
  CHECK(PriorTable::from_json(p.to_json()) == p);
  CHECK(PriorTable::from_json(PriorTable::uniform(4, 3).to_json()) == PriorTable::uniform(4, 3));

  const auto path = std::filesystem::temp_directory_path() / "relex-unit-prior.json";
  p.save(path);
  CHECK(PriorTable::load(path) == p);

  nlohmann::json doc = p.to_json();
  doc["version"] = 2;
  CHECK_THROWS_AS(PriorTable::from_json(doc), VersionError);
  doc = p.to_json();
  doc.erase("entries");
  CHECK_THROWS_AS(PriorTable::from_json(doc), FormatError);
  doc = p.to_json();
  doc["entries"].push_back({0, 9, 0, 0.5});
  CHECK_THROWS_AS(PriorTable::from_json(doc), BoundsError);
}
