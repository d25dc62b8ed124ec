#include "relex/pipeline.hpp"

#include <fstream>

#include "relex/errors.hpp"
#include "relex/train.hpp"

namespace relex {

using nlohmann::json;

namespace {

json box_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

std::string name_or_id(const std::vector<std::string>& names, int id) {
  if (id >= 0 && static_cast<std::size_t>(id) < names.size()) {
    return names[static_cast<std::size_t>(id)];
  }
  return std::to_string(id);
}

}  // namespace

const char* to_string(ObjectSource source) {
  return source == ObjectSource::GroundTruth ? "ground-truth" : "detected";
}

ObjectSource object_source_from_string(std::string_view name) {
  if (name == "ground-truth") return ObjectSource::GroundTruth;
  if (name == "detected") return ObjectSource::Detected;
  throw ValidationError("unknown object source '" + std::string(name) + "'");
}

std::vector<DetectedObject> graph_objects(const ImageRecord& image, const DetectOptions& options) {
  if (options.objects == ObjectSource::GroundTruth) {
    std::vector<DetectedObject> objects = image.objects;
    for (DetectedObject& o : objects) o.score = 1.0;
    return objects;
  }
  return filter_detections(image.detections, options.score_threshold);
}

std::vector<ImageDetections> run_detection(const ModelParams& params, const Dataset& dataset,
                                           const PriorTable* prior,
                                           const DetectOptions& options) {
  check_compatible(params, dataset.header.task());
  options.explain.validate();
  if (prior && (prior->num_predicates() != dataset.header.num_predicates ||
                prior->num_classes() != dataset.header.num_classes)) {
    throw ShapeError("prior covers " + std::to_string(prior->num_predicates()) +
                     " predicates x " + std::to_string(prior->num_classes()) +
                     " classes, dataset declares " +
                     std::to_string(dataset.header.num_predicates) + " x " +
                     std::to_string(dataset.header.num_classes));
  }
  std::vector<ImageDetections> out;
  out.reserve(dataset.images.size());
  for (const ImageRecord& img : dataset.images) {
    const ImageGraph graph =
        build_graph(graph_objects(img, options), img.width, img.height, options.structure);
    out.push_back({img.image_id, img.width, img.height,
                   detect_relationships(params, graph, prior, options.explain)});
  }
  return out;
}

json detections_to_json(const std::vector<ImageDetections>& images, const DatasetHeader& header,
                        const DetectOptions& options, const std::string& prior_description) {
  json settings = {{"objects", to_string(options.objects)},
                   {"score_threshold", options.score_threshold},
                   {"top_n", options.explain.top_n},
                   {"norm", to_string(options.explain.norm)},
                   {"cap", options.explain.cap},
                   {"explain_logit", options.explain.explain_logit},
                   {"prior", prior_description}};
  if (options.structure.kind == EdgeStructure::Kind::SubjectClassRestricted) {
    settings["subject_classes"] = options.structure.subject_classes;
  }
  json jimages = json::array();
  for (const ImageDetections& img : images) {
    json dets = json::array();
    for (const RelationshipDetection& d : img.detections) {
      dets.push_back({{"subject_index", d.subject},
                      {"object_index", d.object},
                      {"subject_class", d.subject_class},
                      {"predicate", d.predicate},
                      {"object_class", d.object_class},
                      {"subject_box", box_json(d.subject_box)},
                      {"object_box", box_json(d.object_box)},
                      {"score", d.score},
                      {"factors",
                       {{"pair_likelihood", d.factors.pair_likelihood},
                        {"subject_score", d.factors.subject_score},
                        {"object_score", d.factors.object_score},
                        {"predicate_score", d.factors.predicate_score},
                        {"prior", d.factors.prior}}},
                      {"relevance", {d.subject_relevance, d.edge_relevance, d.object_relevance}}});
    }
    jimages.push_back({{"image_id", img.image_id},
                       {"width", img.width},
                       {"height", img.height},
                       {"detections", std::move(dets)}});
  }
  return {{"format", "relex-detections"},
          {"version", kDetectionFormatVersion},
          {"num_classes", header.num_classes},
          {"num_predicates", header.num_predicates},
          {"settings", std::move(settings)},
          {"images", std::move(jimages)}};
}

std::map<std::string, std::vector<Triplet>> triplets_from_detection_json(const json& doc) {
  std::map<std::string, std::vector<Triplet>> out;
  try {
    if (doc.at("format").get<std::string>() != "relex-detections") {
      throw FormatError("document is not a detection file");
    }
    if (doc.at("version").get<int>() != kDetectionFormatVersion) {
      throw VersionError("unsupported detection file version " + doc.at("version").dump());
    }
    for (const json& img : doc.at("images")) {
      std::vector<Triplet>& list = out[img.at("image_id").get<std::string>()];
      for (const json& d : img.at("detections")) {
        Triplet t;
        t.subject_box = box_from(d.at("subject_box"));
        t.object_box = box_from(d.at("object_box"));
        t.subject_class = d.at("subject_class").get<int>();
        t.object_class = d.at("object_class").get<int>();
        t.predicate = d.at("predicate").get<int>();
        t.score = d.at("score").get<double>();
        list.push_back(t);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed detection file: ") + e.what());
  }
  return out;
}

json visualization_report(const std::vector<ImageDetections>& images, const Dataset& dataset,
                          const DetectOptions& options, std::size_t top) {
  const DatasetHeader& h = dataset.header;
  json jimages = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageDetections& img = images[i];
    const std::vector<DetectedObject> objects = graph_objects(dataset.images[i], options);
    json boxes = json::array();
    for (std::size_t o = 0; o < objects.size(); ++o) {
      boxes.push_back({{"index", o},
                       {"box", box_json(objects[o].box)},
                       {"class", objects[o].class_id},
                       {"label", name_or_id(h.class_names, objects[o].class_id)},
                       {"score", objects[o].score}});
    }
    json triplets = json::array();
    for (std::size_t r = 0; r < std::min(top, img.detections.size()); ++r) {
      const RelationshipDetection& d = img.detections[r];
      triplets.push_back({{"rank", r + 1},
                          {"subject", d.subject},
                          {"object", d.object},
                          {"predicate", d.predicate},
                          {"label", name_or_id(h.class_names, d.subject_class) + " " +
                                        name_or_id(h.predicate_names, d.predicate) + " " +
                                        name_or_id(h.class_names, d.object_class)},
                          {"score", d.score}});
    }
    jimages.push_back({{"image_id", img.image_id},
                       {"width", img.width},
                       {"height", img.height},
                       {"boxes", std::move(boxes)},
                       {"triplets", std::move(triplets)}});
  }
  return {{"format", "relex-overlay"}, {"version", 1}, {"images", std::move(jimages)}};
}

std::vector<Triplet> ground_truth_triplets(const ImageRecord& image) {
  std::vector<Triplet> out;
  for (const GtTriplet& g : image.gt_triplets) {
    out.push_back({g.subject_box, g.subject_class, g.predicate, g.object_box, g.object_class, 0.0});
  }
  return out;
}

std::vector<ImageEval> build_eval_set(
    const Dataset& dataset, const std::map<std::string, std::vector<Triplet>>& detections,
    const std::map<std::string, std::vector<Triplet>>* distractors,
    const std::set<TripletClass>* seen) {
  std::set<std::string> known;
  std::vector<ImageEval> out;
  for (const ImageRecord& img : dataset.images) {
    known.insert(img.image_id);
    ImageEval e;
    e.image_id = img.image_id;
    e.ground_truth = ground_truth_triplets(img);
    if (seen) e.ground_truth = zero_shot_filter(e.ground_truth, *seen);
    if (auto it = detections.find(img.image_id); it != detections.end()) {
      e.detections = it->second;
    }
    out.push_back(std::move(e));
  }
  for (const auto& [id, dets] : detections) {
    if (!known.contains(id)) {
      throw ValidationError("detections reference image '" + id + "' absent from the dataset");
    }
  }
  if (distractors) {
    for (const auto& [id, dets] : *distractors) {
      if (known.contains(id)) {
        throw ValidationError("distractor image '" + id + "' also appears in the dataset");
      }
      out.push_back({id, dets, {}});
    }
  }
  return out;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace relex
