#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "relex/array.hpp"

namespace relex {

// Axis-aligned box in pixels; image frame, y grows downward.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x1 + x2); }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Throws ValidationError unless the box is finite, non-negative and has
// positive width and height.
void validate_box(const BBox& box);

double iou(const BBox& a, const BBox& b);

// Smallest box enclosing both.
BBox union_box(const BBox& a, const BBox& b);

// [w/h, h/w, w*h/(W*H)]
std::array<double, 3> spatial_features(const BBox& box, double image_width,
                                       double image_height);

// [|x_j - x_i| / sqrt(W*H), sin(angle), cos(angle), IoU(b_j, b_i),
//  area_j / area_i], where the angle is that of the displacement between
// box centers measured from the positive x axis in image coordinates. When
// the centers coincide, sin and cos are both reported as 0.
std::array<double, 5> edge_features(const BBox& from, const BBox& to,
                                    double image_width, double image_height);

// Dataset-level declaration of the per-object visual representation.
struct VisualSpec {
  enum class Mode { None, Flat, Map };

  Mode mode = Mode::None;
  std::size_t dim = 0;       // Flat
  std::size_t channels = 0;  // Map
  std::size_t height = 7;    // Map
  std::size_t width = 7;     // Map

  static VisualSpec none() { return {}; }
  static VisualSpec flat(std::size_t d) { return {Mode::Flat, d, 0, 7, 7}; }
  static VisualSpec map(std::size_t c, std::size_t h = 7, std::size_t w = 7) {
    return {Mode::Map, 0, c, h, w};
  }

  // Shape a conforming feature must have; empty for Mode::None.
  Shape shape() const;

  friend bool operator==(const VisualSpec&, const VisualSpec&) = default;
};

const char* to_string(VisualSpec::Mode mode);

struct DetectedObject {
  BBox box;
  int class_id = 0;
  double score = 1.0;
  // Rank 1 (flat vector), rank 3 (c x h x w map), or empty when the
  // dataset carries no visual features.
  Array visual;
};

std::vector<DetectedObject> filter_detections(const std::vector<DetectedObject>& objects,
                                              double threshold);

// Ground-truth relationship. Subject and object index into
// ImageRecord::objects.
struct GtTriplet {
  std::size_t subject = 0;
  std::size_t object = 0;
  int subject_class = 0;
  int predicate = 0;
  int object_class = 0;
  BBox subject_box;
  BBox object_box;
};

struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  // Ground-truth objects (score 1).
  std::vector<DetectedObject> objects;
  // Detector output, when available.
  std::vector<DetectedObject> detections;
  // Binary presence vector of length K.
  std::vector<std::uint8_t> predicate_labels;
  std::vector<GtTriplet> gt_triplets;
};

// Which ordered pairs become edges.
struct EdgeStructure {
  enum class Kind { FullyConnected, SubjectClassRestricted };

  Kind kind = Kind::FullyConnected;
  // Only meaningful for SubjectClassRestricted.
  std::vector<int> subject_classes;

  static EdgeStructure fully_connected() { return {}; }
  static EdgeStructure subject_restricted(std::vector<int> classes) {
    return {Kind::SubjectClassRestricted, std::move(classes)};
  }

  bool allows(int subject_class) const;
};

struct GraphNode {
  BBox box;
  int class_id = 0;
  double score = 1.0;
  Array spatial;  // length 3
  Array visual;
};

struct GraphEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  Array attributes;  // length 5
};

struct ImageGraph {
  double width = 0.0;
  double height = 0.0;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  EdgeStructure structure;
};

// Edges are enumerated in lexicographic (from, to) order.
ImageGraph build_graph(const std::vector<DetectedObject>& objects, double image_width,
                       double image_height,
                       const EdgeStructure& structure = EdgeStructure::fully_connected());

}  // namespace relex
