#include "relex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "relex/errors.hpp"
#include "relex/random.hpp"

namespace relex {

using nlohmann::json;

namespace {

constexpr double kAngleSpread = 15.0 * M_PI / 180.0;
constexpr int kMaxPlacementAttempts = 10000;

bool inside_image(const BBox& b, double w, double h) {
  return b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= w && b.y2 <= h && b.x2 > b.x1 && b.y2 > b.y1;
}

BBox box_at(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

BBox random_box(Rng& rng, double W, double H, double lo = 0.08, double hi = 0.25) {
  const double w = rng.uniform(lo, hi) * W;
  const double h = rng.uniform(lo, hi) * H;
  const double x1 = rng.uniform(0.0, W - w);
  const double y1 = rng.uniform(0.0, H - h);
  return {x1, y1, x1 + w, y1 + h};
}

// Places a (subject, object) pair that satisfies `t` with some margin.
std::pair<BBox, BBox> place_pair(Rng& rng, SpatialTemplate t, double W, double H) {
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    BBox subject = random_box(rng, W, H);
    BBox object;
    switch (t) {
      case SpatialTemplate::LeftOf:
      case SpatialTemplate::Above: {
        const double base = t == SpatialTemplate::LeftOf ? 0.0 : 0.5 * M_PI;
        const double angle = base + rng.uniform(-kAngleSpread, kAngleSpread);
        const double dist = rng.uniform(0.2, 0.5) * (t == SpatialTemplate::LeftOf ? W : H);
        object = box_at(subject.center_x() + dist * std::cos(angle),
                        subject.center_y() + dist * std::sin(angle),
                        rng.uniform(0.08, 0.25) * W, rng.uniform(0.08, 0.25) * H);
        break;
      }
      case SpatialTemplate::Containing: {
        subject = random_box(rng, W, H, 0.3, 0.5);
        const double w = subject.width() * rng.uniform(0.3, 0.6);
        const double h = subject.height() * rng.uniform(0.3, 0.6);
        const double x1 = rng.uniform(subject.x1, subject.x2 - w);
        const double y1 = rng.uniform(subject.y1, subject.y2 - h);
        object = {x1, y1, x1 + w, y1 + h};
        break;
      }
      case SpatialTemplate::Near: {
        const double angle = rng.uniform(-M_PI, M_PI);
        const double dist = rng.uniform(0.02, 0.1) * std::sqrt(W * H);
        object = box_at(subject.center_x() + dist * std::cos(angle),
                        subject.center_y() + dist * std::sin(angle),
                        rng.uniform(0.08, 0.25) * W, rng.uniform(0.08, 0.25) * H);
        break;
      }
    }
    if (inside_image(object, W, H) && inside_image(subject, W, H) &&
        satisfies(t, subject, object, W, H)) {
      return {subject, object};
    }
  }
  throw Error("could not place a pair for spatial template " + std::string(to_string(t)));
}

Array visual_feature(Rng& rng, const std::vector<std::vector<double>>& embedding, int cls,
                     const SynthConfig& config) {
  const std::vector<double>& e = embedding[static_cast<std::size_t>(cls)];
  if (!config.visual_maps) {
    std::vector<double> v(e.size());
    for (std::size_t d = 0; d < e.size(); ++d) v[d] = e[d] + config.visual_noise * rng.normal();
    return Array::vector(std::move(v));
  }
  // Stored as 32-bit floats in the sidecar, so quantize here to keep
  // in-memory and on-disk values identical.
  Array map({e.size(), 7, 7});
  for (std::size_t c = 0; c < e.size(); ++c) {
    for (std::size_t p = 0; p < 49; ++p) {
      map[c * 49 + p] =
          static_cast<float>(e[c] + config.visual_noise * rng.normal());
    }
  }
  return map;
}

BBox jitter(Rng& rng, const BBox& b, double amount, double W, double H) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double dw = amount * b.width();
    const double dh = amount * b.height();
    BBox j{std::clamp(b.x1 + rng.uniform(-dw, dw), 0.0, W),
           std::clamp(b.y1 + rng.uniform(-dh, dh), 0.0, H),
           std::clamp(b.x2 + rng.uniform(-dw, dw), 0.0, W),
           std::clamp(b.y2 + rng.uniform(-dh, dh), 0.0, H)};
    if (j.x2 > j.x1 && j.y2 > j.y1) return j;
  }
  return b;
}

std::string split_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%06zu", prefix, i);
  return buf;
}

}  // namespace

const char* to_string(SpatialTemplate t) {
  switch (t) {
    case SpatialTemplate::LeftOf: return "left-of";
    case SpatialTemplate::Above: return "above";
    case SpatialTemplate::Containing: return "containing";
    case SpatialTemplate::Near: return "near";
  }
  return "left-of";
}

SpatialTemplate spatial_template_from_string(std::string_view name) {
  if (name == "left-of") return SpatialTemplate::LeftOf;
  if (name == "above") return SpatialTemplate::Above;
  if (name == "containing") return SpatialTemplate::Containing;
  if (name == "near") return SpatialTemplate::Near;
  throw ValidationError("unknown spatial template '" + std::string(name) + "'");
}

bool satisfies(SpatialTemplate t, const BBox& subject, const BBox& object, double image_width,
               double image_height) {
  const auto e = edge_features(subject, object, image_width, image_height);
  switch (t) {
    case SpatialTemplate::LeftOf: return e[2] > 0.9;
    case SpatialTemplate::Above: return e[1] > 0.9;
    case SpatialTemplate::Containing:
      return object.x1 >= subject.x1 && object.y1 >= subject.y1 && object.x2 <= subject.x2 &&
             object.y2 <= subject.y2 && e[4] <= 0.5;
    case SpatialTemplate::Near: return e[0] < 0.15;
  }
  return false;
}

std::vector<SynthRule> SynthConfig::default_rules() {
  return {
      {0, 1, SpatialTemplate::LeftOf, 0},     {2, 3, SpatialTemplate::Above, 1},
      {4, 5, SpatialTemplate::Containing, 2}, {6, 7, SpatialTemplate::Near, 3},
      {1, 8, SpatialTemplate::Above, 4},      {9, 2, SpatialTemplate::LeftOf, 5},
  };
}

void SynthConfig::validate() const {
  if (num_classes < 2 || num_predicates < 1) {
    throw ValidationError("synthetic data needs at least 2 classes and 1 predicate");
  }
  if (min_objects < 2 || max_objects < min_objects) {
    throw ValidationError("unsatisfiable object counts: need 2 <= min_objects <= max_objects");
  }
  if (max_planted < 1 || 2 * max_planted > max_objects) {
    throw ValidationError("unsatisfiable rule set: max_planted pairs do not fit max_objects");
  }
  if (visual_dim == 0 || visual_noise < 0.0) {
    throw ValidationError("visual_dim must be positive and visual_noise non-negative");
  }
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw ValidationError("image dimensions must be positive");
  }
  std::vector<bool> covered(num_predicates, false);
  for (const SynthRule& r : rules) {
    if (r.subject_class < 0 || static_cast<std::size_t>(r.subject_class) >= num_classes ||
        r.object_class < 0 || static_cast<std::size_t>(r.object_class) >= num_classes ||
        r.predicate < 0 || static_cast<std::size_t>(r.predicate) >= num_predicates) {
      throw ValidationError("unsatisfiable rule set: rule ids out of range");
    }
    covered[static_cast<std::size_t>(r.predicate)] = true;
  }
  for (std::size_t k = 0; k < num_predicates; ++k) {
    if (!covered[k]) {
      throw ValidationError("unsatisfiable rule set: predicate " + std::to_string(k) +
                            " has no rule");
    }
  }
}

json SynthConfig::to_json() const {
  json rs = json::array();
  for (const SynthRule& r : rules) {
    rs.push_back({{"subject_class", r.subject_class},
                  {"object_class", r.object_class},
                  {"relation", relex::to_string(r.relation)},
                  {"predicate", r.predicate}});
  }
  return {{"seed", seed},
          {"num_classes", num_classes},
          {"num_predicates", num_predicates},
          {"train_images", train_images},
          {"test_images", test_images},
          {"min_objects", min_objects},
          {"max_objects", max_objects},
          {"max_planted", max_planted},
          {"rules", rs},
          {"visual_noise", visual_noise},
          {"visual_dim", visual_dim},
          {"visual_maps", visual_maps},
          {"image_width", image_width},
          {"image_height", image_height},
          {"detection_jitter", detection_jitter},
          {"false_positive_rate", false_positive_rate}};
}

SynthConfig SynthConfig::from_json(const json& doc) {
  SynthConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    c.num_classes = doc.value("num_classes", c.num_classes);
    c.num_predicates = doc.value("num_predicates", c.num_predicates);
    c.train_images = doc.value("train_images", c.train_images);
    c.test_images = doc.value("test_images", c.test_images);
    c.min_objects = doc.value("min_objects", c.min_objects);
    c.max_objects = doc.value("max_objects", c.max_objects);
    c.max_planted = doc.value("max_planted", c.max_planted);
    c.visual_noise = doc.value("visual_noise", c.visual_noise);
    c.visual_dim = doc.value("visual_dim", c.visual_dim);
    c.visual_maps = doc.value("visual_maps", c.visual_maps);
    c.image_width = doc.value("image_width", c.image_width);
    c.image_height = doc.value("image_height", c.image_height);
    c.detection_jitter = doc.value("detection_jitter", c.detection_jitter);
    c.false_positive_rate = doc.value("false_positive_rate", c.false_positive_rate);
    if (doc.contains("rules")) {
      c.rules.clear();
      for (const json& r : doc.at("rules")) {
        c.rules.push_back({r.at("subject_class").get<int>(), r.at("object_class").get<int>(),
                           spatial_template_from_string(r.at("relation").get<std::string>()),
                           r.at("predicate").get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed synthetic config: ") + e.what());
  }
  return c;
}

SynthSplits generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double W = config.image_width;
  const double H = config.image_height;

  std::vector<std::vector<double>> embedding(config.num_classes,
                                             std::vector<double>(config.visual_dim));
  for (auto& row : embedding) {
    for (double& v : row) v = rng.normal();
  }

  DatasetHeader header;
  header.num_classes = config.num_classes;
  header.num_predicates = config.num_predicates;
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    header.class_names.push_back("class" + std::to_string(c));
  }
  for (std::size_t k = 0; k < config.num_predicates; ++k) {
    std::string name = "predicate" + std::to_string(k);
    for (const SynthRule& r : config.rules) {
      if (static_cast<std::size_t>(r.predicate) == k) {
        name += std::string("_") + to_string(r.relation);
        break;
      }
    }
    header.predicate_names.push_back(name);
  }
  header.visual = config.visual_maps ? VisualSpec::map(config.visual_dim)
                                     : VisualSpec::flat(config.visual_dim);

  auto make_image = [&](const std::string& id) {
    ImageRecord img;
    img.image_id = id;
    img.width = W;
    img.height = H;
    const auto n = static_cast<std::size_t>(rng.integer(
        static_cast<std::int64_t>(config.min_objects), static_cast<std::int64_t>(config.max_objects)));
    const std::size_t planted =
        std::min<std::size_t>(n / 2, static_cast<std::size_t>(rng.integer(
                                         1, static_cast<std::int64_t>(config.max_planted))));
    std::vector<std::pair<int, BBox>> placed;
    for (std::size_t p = 0; p < planted; ++p) {
      const SynthRule& rule = config.rules[rng.index(config.rules.size())];
      const auto [sb, ob] = place_pair(rng, rule.relation, W, H);
      placed.emplace_back(rule.subject_class, sb);
      placed.emplace_back(rule.object_class, ob);
    }
    while (placed.size() < n) {
      placed.emplace_back(static_cast<int>(rng.index(config.num_classes)), random_box(rng, W, H));
    }
    // Planted pairs should not always occupy the leading indices.
    rng.shuffle(placed);

    for (const auto& [cls, box] : placed) {
      img.objects.push_back({box, cls, 1.0, visual_feature(rng, embedding, cls, config)});
    }

    img.predicate_labels.assign(config.num_predicates, 0);
    std::set<std::tuple<std::size_t, int, std::size_t>> seen;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const DetectedObject& s = img.objects[i];
        const DetectedObject& o = img.objects[j];
        for (const SynthRule& r : config.rules) {
          if (r.subject_class != s.class_id || r.object_class != o.class_id) continue;
          if (!satisfies(r.relation, s.box, o.box, W, H)) continue;
          if (!seen.emplace(i, r.predicate, j).second) continue;
          img.gt_triplets.push_back(
              {i, j, s.class_id, r.predicate, o.class_id, s.box, o.box});
          img.predicate_labels[static_cast<std::size_t>(r.predicate)] = 1;
        }
      }
    }

    for (const DetectedObject& o : img.objects) {
      img.detections.push_back({jitter(rng, o.box, config.detection_jitter, W, H), o.class_id,
                                rng.uniform(0.5, 1.0),
                                visual_feature(rng, embedding, o.class_id, config)});
    }
    if (rng.bernoulli(config.false_positive_rate)) {
      const int cls = static_cast<int>(rng.index(config.num_classes));
      img.detections.push_back({random_box(rng, W, H), cls, rng.uniform(0.05, 0.6),
                                visual_feature(rng, embedding, cls, config)});
    }
    return img;
  };

  SynthSplits out;
  out.train.header = header;
  out.test.header = header;
  if (config.visual_maps) {
    out.train.header.feature_file = "train.features.bin";
    out.test.header.feature_file = "test.features.bin";
  }
  for (std::size_t i = 0; i < config.train_images; ++i) {
    out.train.images.push_back(make_image(split_id("train", i)));
  }
  for (std::size_t i = 0; i < config.test_images; ++i) {
    out.test.images.push_back(make_image(split_id("test", i)));
  }
  return out;
}

}  // namespace relex
