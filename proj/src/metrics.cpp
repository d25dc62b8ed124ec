#include "relex/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "relex/errors.hpp"

namespace relex {

using nlohmann::json;

const char* to_string(MatchVariant variant) {
  switch (variant) {
    case MatchVariant::Relationship: return "relationship";
    case MatchVariant::Phrase: return "phrase";
    case MatchVariant::Predicate: return "predicate";
    case MatchVariant::SubjectOnly: return "subject-only";
  }
  return "relationship";
}

MatchVariant match_variant_from_string(std::string_view name) {
  if (name == "relationship") return MatchVariant::Relationship;
  if (name == "phrase") return MatchVariant::Phrase;
  if (name == "predicate") return MatchVariant::Predicate;
  if (name == "subject-only" || name == "subject") return MatchVariant::SubjectOnly;
  throw ValidationError("unknown match mode '" + std::string(name) + "'");
}

void MatchMode::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("IoU threshold must lie in (0, 1]");
  }
}

const char* to_string(ClassKey key) { return key == ClassKey::Hoi ? "hoi" : "triplet"; }

ClassKey class_key_from_string(std::string_view name) {
  if (name == "hoi") return ClassKey::Hoi;
  if (name == "triplet") return ClassKey::Triplet;
  throw ValidationError("unknown class key '" + std::string(name) + "'");
}

std::array<int, 3> class_of(const Triplet& t, ClassKey key) {
  if (key == ClassKey::Hoi) return {-1, t.predicate, t.object_class};
  return {t.subject_class, t.predicate, t.object_class};
}

namespace {

// Overlap used to decide eligibility and to rank eligible ground truths;
// negative when the pair is not eligible.
double match_overlap(const Triplet& det, const Triplet& gt, const MatchMode& mode) {
  if (det.subject_class != gt.subject_class || det.predicate != gt.predicate ||
      det.object_class != gt.object_class) {
    return -1.0;
  }
  const double thr = mode.iou_threshold;
  switch (mode.variant) {
    case MatchVariant::Relationship:
    case MatchVariant::Predicate: {
      const double s = iou(det.subject_box, gt.subject_box);
      const double o = iou(det.object_box, gt.object_box);
      return (s > thr && o > thr) ? std::min(s, o) : -1.0;
    }
    case MatchVariant::Phrase: {
      const double u = iou(union_box(det.subject_box, det.object_box),
                           union_box(gt.subject_box, gt.object_box));
      return u > thr ? u : -1.0;
    }
    case MatchVariant::SubjectOnly: {
      const double s = iou(det.subject_box, gt.subject_box);
      return s > thr ? s : -1.0;
    }
  }
  return -1.0;
}

std::vector<Triplet> capped(std::span<const Triplet> detections, std::size_t cap) {
  std::vector<Triplet> sorted = sorted_by_score(detections);
  if (cap > 0 && sorted.size() > cap) sorted.resize(cap);
  return sorted;
}

}  // namespace

std::vector<bool> match_detections(std::span<const Triplet> detections,
                                   std::span<const Triplet> ground_truth,
                                   const MatchMode& mode) {
  mode.validate();
  std::vector<bool> used(ground_truth.size(), false);
  std::vector<bool> tp(detections.size(), false);
  for (std::size_t d = 0; d < detections.size(); ++d) {
    double best = -1.0;
    std::size_t best_gt = ground_truth.size();
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (used[g]) continue;
      const double overlap = match_overlap(detections[d], ground_truth[g], mode);
      if (overlap > best) {
        best = overlap;
        best_gt = g;
      }
    }
    if (best_gt < ground_truth.size()) {
      used[best_gt] = true;
      tp[d] = true;
    }
  }
  return tp;
}

std::vector<Triplet> sorted_by_score(std::span<const Triplet> detections) {
  std::vector<Triplet> sorted(detections.begin(), detections.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Triplet& a, const Triplet& b) { return a.score > b.score; });
  return sorted;
}

double recall_at_x(std::span<const ImageEval> images, std::size_t x, const MatchMode& mode) {
  if (x < 1) throw ValidationError("recall@x requires x >= 1");
  std::size_t total = 0;
  std::size_t matched = 0;
  for (const ImageEval& img : images) {
    total += img.ground_truth.size();
    const std::vector<Triplet> top = capped(img.detections, x);
    const std::vector<bool> tp = match_detections(top, img.ground_truth, mode);
    matched += static_cast<std::size_t>(std::count(tp.begin(), tp.end(), true));
  }
  if (total == 0) throw ValidationError("recall@x is undefined without ground truth");
  return static_cast<double>(matched) / static_cast<double>(total);
}

double eleven_point_ap(const std::vector<bool>& true_positive, std::size_t num_ground_truth) {
  if (num_ground_truth == 0) return 0.0;
  // best[t]: highest precision at any rank whose recall reaches t / 10.
  std::array<double, 11> best{};
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < true_positive.size(); ++rank) {
    if (true_positive[rank]) ++tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(rank + 1);
    for (std::size_t t = 0; t <= 10; ++t) {
      if (tp * 10 >= t * num_ground_truth) best[t] = std::max(best[t], precision);
    }
  }
  double sum = 0.0;
  for (double b : best) sum += b;
  return sum / 11.0;
}

EvalReport interpolated_map(std::span<const ImageEval> images, const MatchMode& mode,
                            ClassKey key, std::size_t max_per_image) {
  mode.validate();
  struct Ranked {
    double score;
    bool tp;
  };
  std::map<std::array<int, 3>, std::vector<Ranked>> detections_by_class;
  std::map<std::array<int, 3>, std::size_t> gt_by_class;

  EvalReport report;
  report.mode = mode;
  report.class_key = key;
  report.num_images = images.size();
  for (const ImageEval& img : images) {
    for (const Triplet& gt : img.ground_truth) ++gt_by_class[class_of(gt, key)];
    report.num_ground_truth += img.ground_truth.size();
    // Categories must agree for a match, so matching the whole image at
    // once gives the same flags as matching each class separately.
    const std::vector<Triplet> dets = capped(img.detections, max_per_image);
    report.num_detections += dets.size();
    const std::vector<bool> tp = match_detections(dets, img.ground_truth, mode);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      detections_by_class[class_of(dets[d], key)].push_back({dets[d].score, tp[d]});
    }
  }

  double sum = 0.0;
  for (const auto& [cls, num_gt] : gt_by_class) {
    std::vector<Ranked> ranked = detections_by_class[cls];
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    std::vector<bool> flags;
    flags.reserve(ranked.size());
    for (const Ranked& r : ranked) flags.push_back(r.tp);
    ClassAp entry;
    entry.key = cls;
    entry.num_ground_truth = num_gt;
    entry.num_detections = ranked.size();
    entry.ap = eleven_point_ap(flags, num_gt);
    sum += entry.ap;
    report.per_class.push_back(entry);
  }
  report.mean_ap = report.per_class.empty()
                       ? 0.0
                       : sum / static_cast<double>(report.per_class.size());
  return report;
}

EvalReport evaluate(std::span<const ImageEval> images, const MatchMode& mode, ClassKey key,
                    std::span<const std::size_t> recall_xs, std::size_t max_per_image) {
  EvalReport report = interpolated_map(images, mode, key, max_per_image);
  for (std::size_t x : recall_xs) report.recall_at[x] = recall_at_x(images, x, mode);
  return report;
}

std::vector<Triplet> zero_shot_filter(std::span<const Triplet> ground_truth,
                                      const std::set<TripletClass>& seen) {
  std::vector<Triplet> out;
  for (const Triplet& t : ground_truth) {
    if (!seen.contains(t.classes())) out.push_back(t);
  }
  return out;
}

json EvalReport::to_json() const {
  json classes = json::array();
  for (const ClassAp& c : per_class) {
    classes.push_back({{"key", c.key},
                       {"ap", c.ap},
                       {"num_ground_truth", c.num_ground_truth},
                       {"num_detections", c.num_detections}});
  }
  json recalls = json::object();
  for (const auto& [x, r] : recall_at) recalls[std::to_string(x)] = r;
  return {{"format", "relex-eval"},
          {"version", 1},
          {"mode", relex::to_string(mode.variant)},
          {"iou_threshold", mode.iou_threshold},
          {"class_key", relex::to_string(class_key)},
          {"num_images", num_images},
          {"num_ground_truth", num_ground_truth},
          {"num_detections", num_detections},
          {"map", mean_ap},
          {"recall_at", recalls},
          {"per_class", classes}};
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "mode " << relex::to_string(mode.variant) << "  iou>" << mode.iou_threshold
      << "  classes " << relex::to_string(class_key) << "\n";
  out << "images " << num_images << "  ground truth " << num_ground_truth
      << "  detections " << num_detections << "\n";
  out << "mAP (11-pt)  " << mean_ap << "  over " << per_class.size() << " classes\n";
  for (const auto& [x, r] : recall_at) out << "recall@" << x << "  " << r << "\n";
  return out.str();
}

}  // namespace relex
