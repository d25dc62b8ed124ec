#include "relex/scene_graph.hpp"

#include <algorithm>
#include <cmath>

#include "relex/errors.hpp"

namespace relex {

Shape VisualSpec::shape() const {
  switch (mode) {
    case Mode::None: return {};
    case Mode::Flat: return {dim};
    case Mode::Map: return {channels, height, width};
  }
  return {};
}

const char* to_string(VisualSpec::Mode mode) {
  switch (mode) {
    case VisualSpec::Mode::None: return "none";
    case VisualSpec::Mode::Flat: return "flat";
    case VisualSpec::Mode::Map: return "map";
  }
  return "none";
}

void validate_box(const BBox& box) {
  for (double v : {box.x1, box.y1, box.x2, box.y2}) {
    if (!std::isfinite(v)) throw ValidationError("box coordinate is not finite");
    if (v < 0.0) throw ValidationError("box coordinate is negative");
  }
  if (!(box.x2 > box.x1) || !(box.y2 > box.y1)) {
    throw ValidationError("degenerate box: requires x2 > x1 and y2 > y1");
  }
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

BBox union_box(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

std::array<double, 3> spatial_features(const BBox& box, double image_width,
                                       double image_height) {
  const double w = box.width();
  const double h = box.height();
  return {w / h, h / w, (w * h) / (image_width * image_height)};
}

std::array<double, 5> edge_features(const BBox& from, const BBox& to,
                                    double image_width, double image_height) {
  const double dx = to.center_x() - from.center_x();
  const double dy = to.center_y() - from.center_y();
  const double dist = std::hypot(dx, dy);
  double sin_a = 0.0;
  double cos_a = 0.0;
  if (dist > 0.0) {
    sin_a = dy / dist;
    cos_a = dx / dist;
  }
  return {dist / std::sqrt(image_width * image_height), sin_a, cos_a, iou(to, from),
          to.area() / from.area()};
}

std::vector<DetectedObject> filter_detections(const std::vector<DetectedObject>& objects,
                                              double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw ValidationError("score threshold must lie in [0, 1]");
  }
  std::vector<DetectedObject> kept;
  std::copy_if(objects.begin(), objects.end(), std::back_inserter(kept),
               [threshold](const DetectedObject& o) { return o.score >= threshold; });
  return kept;
}

bool EdgeStructure::allows(int subject_class) const {
  if (kind == Kind::FullyConnected) return true;
  return std::find(subject_classes.begin(), subject_classes.end(), subject_class) !=
         subject_classes.end();
}

ImageGraph build_graph(const std::vector<DetectedObject>& objects, double image_width,
                       double image_height, const EdgeStructure& structure) {
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw ValidationError("image dimensions must be positive");
  }
  ImageGraph graph;
  graph.width = image_width;
  graph.height = image_height;
  graph.structure = structure;
  graph.nodes.reserve(objects.size());
  for (const DetectedObject& o : objects) {
    validate_box(o.box);
    const auto s = spatial_features(o.box, image_width, image_height);
    graph.nodes.push_back(
        {o.box, o.class_id, o.score, Array::vector({s[0], s[1], s[2]}), o.visual});
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!structure.allows(objects[i].class_id)) continue;
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (i == j) continue;
      const auto e = edge_features(objects[i].box, objects[j].box, image_width, image_height);
      graph.edges.push_back({i, j, Array::vector({e[0], e[1], e[2], e[3], e[4]})});
    }
  }
  return graph;
}

}  // namespace relex
