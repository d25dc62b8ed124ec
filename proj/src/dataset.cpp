#include "relex/dataset.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "relex/errors.hpp"

namespace relex {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "feature sidecars are read as little-endian");

std::string where(const std::string& image_id, const std::string& field) {
  return "image '" + image_id + "': " + field + ": ";
}

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("box must be [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json visual_spec_to_json(const VisualSpec& v) {
  json out = {{"mode", to_string(v.mode)}};
  if (v.mode == VisualSpec::Mode::Flat) out["dim"] = v.dim;
  if (v.mode == VisualSpec::Mode::Map) {
    out["channels"] = v.channels;
    out["height"] = v.height;
    out["width"] = v.width;
  }
  return out;
}

VisualSpec visual_spec_from_json(const json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "none") return VisualSpec::none();
  if (mode == "flat") return VisualSpec::flat(j.at("dim").get<std::size_t>());
  if (mode == "map") {
    return VisualSpec::map(j.at("channels").get<std::size_t>(), j.value("height", 7),
                           j.value("width", 7));
  }
  throw FormatError("unknown visual mode '" + mode + "'");
}

class SidecarReader {
 public:
  explicit SidecarReader(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFeatureError("cannot open feature file " + path.string());
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::vector<double> read(std::uint64_t offset, const std::string& context) const {
    std::uint32_t count = 0;
    if (offset + sizeof(count) > bytes_.size()) {
      throw MissingFeatureError(context + "feature offset " + std::to_string(offset) +
                                " beyond end of feature file");
    }
    std::memcpy(&count, bytes_.data() + offset, sizeof(count));
    const std::uint64_t begin = offset + sizeof(count);
    if (begin + std::uint64_t{count} * sizeof(float) > bytes_.size()) {
      throw MissingFeatureError(context + "feature blob truncated");
    }
    std::vector<double> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes_.data() + begin + i * sizeof(float), sizeof(float));
      out[i] = f;
    }
    return out;
  }

 private:
  std::vector<char> bytes_;
};

class SidecarWriter {
 public:
  std::uint64_t append(const Array& a) {
    const std::uint64_t offset = bytes_.size();
    const auto count = static_cast<std::uint32_t>(a.size());
    put(&count, sizeof(count));
    for (double v : a.values()) {
      const auto f = static_cast<float>(v);
      put(&f, sizeof(f));
    }
    return offset;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write feature file " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
  }

 private:
  void put(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  std::vector<char> bytes_;
};

json object_to_json(const DetectedObject& o, const VisualSpec& spec, SidecarWriter& sidecar) {
  json out = {{"box", box_to_json(o.box)}, {"class", o.class_id}, {"score", o.score}};
  if (spec.mode == VisualSpec::Mode::Flat) out["visual"] = o.visual.values();
  if (spec.mode == VisualSpec::Mode::Map) out["feature_offset"] = sidecar.append(o.visual);
  return out;
}

DetectedObject object_from_json(const json& j, const VisualSpec& spec,
                                const SidecarReader* sidecar, const std::string& context) {
  DetectedObject o;
  try {
    o.box = box_from_json(j.at("box"));
  } catch (const FormatError& e) {
    throw FormatError(context + e.what());
  }
  o.class_id = j.at("class").get<int>();
  o.score = j.value("score", 1.0);
  const Shape shape = spec.shape();
  switch (spec.mode) {
    case VisualSpec::Mode::None:
      break;
    case VisualSpec::Mode::Flat: {
      if (!j.contains("visual")) throw MissingFeatureError(context + "missing visual vector");
      auto values = j.at("visual").get<std::vector<double>>();
      if (values.size() != spec.dim) {
        throw MissingFeatureError(context + "visual vector has " +
                                  std::to_string(values.size()) + " entries, header declares " +
                                  std::to_string(spec.dim));
      }
      o.visual = Array(shape, std::move(values));
      break;
    }
    case VisualSpec::Mode::Map: {
      if (!j.contains("feature_offset")) {
        throw MissingFeatureError(context + "missing feature_offset");
      }
      if (!sidecar) throw MissingFeatureError(context + "dataset has no feature file");
      auto values = sidecar->read(j.at("feature_offset").get<std::uint64_t>(), context);
      if (values.size() != shape_size(shape)) {
        throw MissingFeatureError(context + "feature blob has " +
                                  std::to_string(values.size()) + " values, header declares " +
                                  shape_to_string(shape));
      }
      o.visual = Array(shape, std::move(values));
      break;
    }
  }
  return o;
}

void validate_object(const DetectedObject& o, const ImageRecord& img, const DatasetHeader& h,
                     const std::string& field) {
  try {
    validate_box(o.box);
  } catch (const ValidationError& e) {
    throw ValidationError(where(img.image_id, field + ".box") + e.what());
  }
  if (o.box.x2 > img.width || o.box.y2 > img.height) {
    throw ValidationError(where(img.image_id, field + ".box") + "box exceeds the image");
  }
  if (o.class_id < 0 || static_cast<std::size_t>(o.class_id) >= h.num_classes) {
    throw BoundsError(where(img.image_id, field + ".class") + "class " +
                      std::to_string(o.class_id) + " outside [0, " +
                      std::to_string(h.num_classes) + ")");
  }
  if (!(o.score > 0.0 && o.score <= 1.0)) {
    throw ValidationError(where(img.image_id, field + ".score") + "score must lie in (0, 1]");
  }
  if (o.visual.shape() != h.visual.shape()) {
    throw MissingFeatureError(where(img.image_id, field + ".visual") + "shape " +
                              shape_to_string(o.visual.shape()) + ", header declares " +
                              shape_to_string(h.visual.shape()));
  }
}

}  // namespace

void validate_dataset(const Dataset& dataset) {
  const DatasetHeader& h = dataset.header;
  if (h.schema_version != kDatasetSchemaVersion) {
    throw VersionError("dataset schema version " + std::to_string(h.schema_version) +
                       " is not supported (expected " +
                       std::to_string(kDatasetSchemaVersion) + ")");
  }
  if (h.num_classes == 0 || h.num_predicates == 0) {
    throw ValidationError("header must declare at least one class and one predicate");
  }
  if (!h.class_names.empty() && h.class_names.size() != h.num_classes) {
    throw ValidationError("header lists " + std::to_string(h.class_names.size()) +
                          " class names for " + std::to_string(h.num_classes) + " classes");
  }
  if (!h.predicate_names.empty() && h.predicate_names.size() != h.num_predicates) {
    throw ValidationError("header lists " + std::to_string(h.predicate_names.size()) +
                          " predicate names for " + std::to_string(h.num_predicates) +
                          " predicates");
  }
  for (const ImageRecord& img : dataset.images) {
    if (!(img.width > 0.0) || !(img.height > 0.0)) {
      throw ValidationError(where(img.image_id, "width/height") + "must be positive");
    }
    for (std::size_t i = 0; i < img.objects.size(); ++i) {
      validate_object(img.objects[i], img, h, "objects[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < img.detections.size(); ++i) {
      validate_object(img.detections[i], img, h, "detections[" + std::to_string(i) + "]");
    }
    if (img.predicate_labels.size() != h.num_predicates) {
      throw ShapeError(where(img.image_id, "predicates") + "label vector has length " +
                       std::to_string(img.predicate_labels.size()) + ", expected " +
                       std::to_string(h.num_predicates));
    }
    for (std::size_t t = 0; t < img.gt_triplets.size(); ++t) {
      const GtTriplet& g = img.gt_triplets[t];
      const std::string field = "triplets[" + std::to_string(t) + "]";
      if (g.subject >= img.objects.size() || g.object >= img.objects.size()) {
        throw BoundsError(where(img.image_id, field) + "object index out of range");
      }
      if (g.subject == g.object) {
        throw ValidationError(where(img.image_id, field) + "subject and object coincide");
      }
      if (g.predicate < 0 || static_cast<std::size_t>(g.predicate) >= h.num_predicates) {
        throw BoundsError(where(img.image_id, field + ".predicate") + "predicate " +
                          std::to_string(g.predicate) + " outside [0, " +
                          std::to_string(h.num_predicates) + ")");
      }
    }
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read dataset " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("malformed dataset " + path.string() + ": " + e.what());
  }

  Dataset ds;
  std::string image_id = "<header>";
  try {
    if (doc.value("format", std::string{}) != "relex-dataset") {
      throw FormatError("file " + path.string() + " is not a dataset");
    }
    DatasetHeader& h = ds.header;
    h.schema_version = doc.at("schema_version").get<int>();
    if (h.schema_version != kDatasetSchemaVersion) {
      throw VersionError("dataset schema version " + std::to_string(h.schema_version) +
                         " is not supported (expected " +
                         std::to_string(kDatasetSchemaVersion) + ")");
    }
    h.num_classes = doc.at("num_classes").get<std::size_t>();
    h.num_predicates = doc.at("num_predicates").get<std::size_t>();
    h.class_names = doc.value("class_names", std::vector<std::string>{});
    h.predicate_names = doc.value("predicate_names", std::vector<std::string>{});
    h.visual = visual_spec_from_json(doc.at("visual"));
    h.feature_file = doc.value("feature_file", std::string{});

    std::unique_ptr<SidecarReader> sidecar;
    if (h.visual.mode == VisualSpec::Mode::Map) {
      if (h.feature_file.empty()) throw MissingFeatureError("map-mode dataset has no feature_file");
      sidecar = std::make_unique<SidecarReader>(path.parent_path() / h.feature_file);
    }

    for (const json& ji : doc.at("images")) {
      ImageRecord img;
      image_id = ji.at("image_id").get<std::string>();
      img.image_id = image_id;
      img.width = ji.at("width").get<double>();
      img.height = ji.at("height").get<double>();
      const json& objs = ji.at("objects");
      for (std::size_t i = 0; i < objs.size(); ++i) {
        img.objects.push_back(object_from_json(
            objs[i], h.visual, sidecar.get(),
            where(image_id, "objects[" + std::to_string(i) + "]")));
      }
      if (ji.contains("detections")) {
        const json& dets = ji.at("detections");
        for (std::size_t i = 0; i < dets.size(); ++i) {
          img.detections.push_back(object_from_json(
              dets[i], h.visual, sidecar.get(),
              where(image_id, "detections[" + std::to_string(i) + "]")));
        }
      }
      img.predicate_labels.assign(h.num_predicates, 0);
      for (const json& k : ji.value("predicates", json::array())) {
        const int kk = k.get<int>();
        if (kk < 0 || static_cast<std::size_t>(kk) >= h.num_predicates) {
          throw BoundsError(where(image_id, "predicates") + "predicate " + std::to_string(kk) +
                            " outside [0, " + std::to_string(h.num_predicates) + ")");
        }
        img.predicate_labels[static_cast<std::size_t>(kk)] = 1;
      }
      const json& trips = ji.value("triplets", json::array());
      for (std::size_t t = 0; t < trips.size(); ++t) {
        GtTriplet g;
        g.subject = trips[t].at("subject").get<std::size_t>();
        g.object = trips[t].at("object").get<std::size_t>();
        g.predicate = trips[t].at("predicate").get<int>();
        if (g.subject >= img.objects.size() || g.object >= img.objects.size()) {
          throw BoundsError(where(image_id, "triplets[" + std::to_string(t) + "]") +
                            "object index out of range");
        }
        g.subject_class = img.objects[g.subject].class_id;
        g.object_class = img.objects[g.object].class_id;
        g.subject_box = img.objects[g.subject].box;
        g.object_box = img.objects[g.object].box;
        img.gt_triplets.push_back(g);
      }
      ds.images.push_back(std::move(img));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed dataset " + path.string() + " at image '" + image_id +
                      "': " + e.what());
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  validate_dataset(dataset);
  const DatasetHeader& h = dataset.header;
  std::string feature_file = h.feature_file;
  if (h.visual.mode == VisualSpec::Mode::Map && feature_file.empty()) {
    feature_file = path.stem().string() + ".features.bin";
  }

  SidecarWriter sidecar;
  json images = json::array();
  for (const ImageRecord& img : dataset.images) {
    json objs = json::array();
    for (const DetectedObject& o : img.objects) objs.push_back(object_to_json(o, h.visual, sidecar));
    json dets = json::array();
    for (const DetectedObject& o : img.detections) {
      dets.push_back(object_to_json(o, h.visual, sidecar));
    }
    json preds = json::array();
    for (std::size_t k = 0; k < img.predicate_labels.size(); ++k) {
      if (img.predicate_labels[k]) preds.push_back(k);
    }
    json trips = json::array();
    for (const GtTriplet& g : img.gt_triplets) {
      trips.push_back({{"subject", g.subject}, {"predicate", g.predicate}, {"object", g.object}});
    }
    json ji = {{"image_id", img.image_id}, {"width", img.width}, {"height", img.height},
               {"objects", std::move(objs)}, {"predicates", std::move(preds)},
               {"triplets", std::move(trips)}};
    if (!img.detections.empty()) ji["detections"] = std::move(dets);
    images.push_back(std::move(ji));
  }

  json doc = {{"format", "relex-dataset"},
              {"schema_version", h.schema_version},
              {"num_classes", h.num_classes},
              {"num_predicates", h.num_predicates},
              {"class_names", h.class_names},
              {"predicate_names", h.predicate_names},
              {"visual", visual_spec_to_json(h.visual)}};
  if (h.visual.mode == VisualSpec::Mode::Map) {
    doc["feature_file"] = feature_file;
    sidecar.write(path.parent_path() / feature_file);
  }
  doc["images"] = std::move(images);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset " + path.string());
  out << doc.dump() << '\n';
}

std::vector<TripletClass> triplet_classes(std::span<const ImageRecord> images) {
  std::vector<TripletClass> out;
  for (const ImageRecord& img : images) {
    for (const GtTriplet& g : img.gt_triplets) {
      out.push_back({g.subject_class, g.predicate, g.object_class});
    }
  }
  return out;
}

std::vector<ImageRecord> select(std::span<const ImageRecord> images,
                                std::span<const std::size_t> indices) {
  std::vector<ImageRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(images[i]);
  return out;
}

}  // namespace relex
