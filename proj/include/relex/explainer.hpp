#pragma once

// Explanation-based relationship detection.
//
// For a predicate k, the relevance of node i is the norm of dy_k/dn_i over
// the concatenated raw spatial and visual input, and the relevance of edge
// (i, j) is the norm of dy_k/de_ij. A pair is scored by
//   r_i * r_ij * r_j * det_i * det_j * y_k * prior(c_i, c_j | k)
// for each of the N best-scoring predicates.

#include <cstddef>
#include <string_view>
#include <vector>

#include "relex/model.hpp"
#include "relex/prior.hpp"
#include "relex/scene_graph.hpp"

namespace relex {

enum class RelevanceNorm {
  L1,                      // sum |g|
  L2,                      // sqrt(sum g^2)
  GradientTimesInput,      // sum |g * x|
  PositiveGradientTimesInput,  // sum max(g * x, 0)
};

const char* to_string(RelevanceNorm norm);
RelevanceNorm relevance_norm_from_string(std::string_view name);

struct RelevanceMap {
  std::size_t predicate = 0;
  RelevanceNorm norm = RelevanceNorm::L1;
  std::vector<double> nodes;  // one per graph node
  std::vector<double> edges;  // one per graph edge, same order as the graph
};

// Relevances for predicate k from a recorded forward pass. `explain_logit`
// differentiates the pre-sigmoid score instead of y_k.
RelevanceMap relevances(const ad::Tape& tape, const ForwardPass& pass, std::size_t k,
                        RelevanceNorm norm, bool explain_logit = false);

// Convenience overload that records its own forward pass.
RelevanceMap relevances(const ModelParams& params, const ImageGraph& graph, std::size_t k,
                        RelevanceNorm norm, bool explain_logit = false);

inline double pair_likelihood(double subject_relevance, double edge_relevance,
                              double object_relevance) {
  return subject_relevance * edge_relevance * object_relevance;
}

struct ExplainConfig {
  std::size_t top_n = 10;
  RelevanceNorm norm = RelevanceNorm::L1;
  std::size_t cap = 100;
  bool explain_logit = false;

  void validate() const;
};

struct ScoreFactors {
  double pair_likelihood = 0.0;
  double subject_score = 1.0;
  double object_score = 1.0;
  double predicate_score = 0.0;
  double prior = 1.0;

  // Multiplied in this fixed order, so a stored score is reproducible.
  double product() const {
    return pair_likelihood * subject_score * object_score * predicate_score * prior;
  }
};

struct RelationshipDetection {
  std::size_t subject = 0;
  std::size_t object = 0;
  int predicate = 0;
  int subject_class = 0;
  int object_class = 0;
  BBox subject_box;
  BBox object_box;
  double score = 0.0;
  ScoreFactors factors;
  double subject_relevance = 0.0;
  double edge_relevance = 0.0;
  double object_relevance = 0.0;
};

// Every candidate for the N top predicates and every edge of the graph,
// ranked by descending score with ties broken by (predicate, subject,
// object). A null prior contributes a factor of 1.
std::vector<RelationshipDetection> score_candidates(const ModelParams& params,
                                                    const ImageGraph& graph,
                                                    const PriorTable* prior,
                                                    const ExplainConfig& config);

// score_candidates truncated to config.cap.
std::vector<RelationshipDetection> detect_relationships(const ModelParams& params,
                                                        const ImageGraph& graph,
                                                        const PriorTable* prior,
                                                        const ExplainConfig& config);

}  // namespace relex
