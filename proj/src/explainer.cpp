#include "relex/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "relex/errors.hpp"

namespace relex {

namespace {

// Accumulates one input block into a running norm.
class NormAccumulator {
 public:
  explicit NormAccumulator(RelevanceNorm norm) : norm_(norm) {}

  void add(const Array& grad, const Array& input) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i];
      switch (norm_) {
        case RelevanceNorm::L1: total_ += std::abs(g); break;
        case RelevanceNorm::L2: total_ += g * g; break;
        case RelevanceNorm::GradientTimesInput: total_ += std::abs(g * input[i]); break;
        case RelevanceNorm::PositiveGradientTimesInput:
          total_ += std::max(g * input[i], 0.0);
          break;
      }
    }
  }

  double result() const { return norm_ == RelevanceNorm::L2 ? std::sqrt(total_) : total_; }

 private:
  RelevanceNorm norm_;
  double total_ = 0.0;
};

}  // namespace

const char* to_string(RelevanceNorm norm) {
  switch (norm) {
    case RelevanceNorm::L1: return "l1";
    case RelevanceNorm::L2: return "l2";
    case RelevanceNorm::GradientTimesInput: return "gxi";
    case RelevanceNorm::PositiveGradientTimesInput: return "gxi+";
  }
  return "l1";
}

RelevanceNorm relevance_norm_from_string(std::string_view name) {
  if (name == "l1") return RelevanceNorm::L1;
  if (name == "l2") return RelevanceNorm::L2;
  if (name == "gxi") return RelevanceNorm::GradientTimesInput;
  if (name == "gxi+") return RelevanceNorm::PositiveGradientTimesInput;
  throw ValidationError("unknown relevance norm '" + std::string(name) + "'");
}

void ExplainConfig::validate() const {
  if (top_n < 1) throw ValidationError("number of explained predicates must be at least 1");
  if (cap < 1) throw ValidationError("detection cap must be at least 1");
}

RelevanceMap relevances(const ad::Tape& tape, const ForwardPass& pass, std::size_t k,
                        RelevanceNorm norm, bool explain_logit) {
  const std::size_t num_predicates = pass.probabilities.value().size();
  if (k >= num_predicates) {
    throw BoundsError("predicate " + std::to_string(k) + " outside [0, " +
                      std::to_string(num_predicates) + ")");
  }
  const ad::Gradients grads =
      tape.backward(explain_logit ? pass.logits : pass.probabilities, k);

  RelevanceMap map;
  map.predicate = k;
  map.norm = norm;
  for (std::size_t i = 0; i < pass.node_spatial.size(); ++i) {
    NormAccumulator acc(norm);
    acc.add(grads.of(pass.node_spatial[i]), pass.node_spatial[i].value());
    if (pass.node_visual[i].valid()) {
      acc.add(grads.of(pass.node_visual[i]), pass.node_visual[i].value());
    }
    map.nodes.push_back(acc.result());
  }
  for (const ad::Var& e : pass.edge_attributes) {
    NormAccumulator acc(norm);
    acc.add(grads.of(e), e.value());
    map.edges.push_back(acc.result());
  }
  return map;
}

RelevanceMap relevances(const ModelParams& params, const ImageGraph& graph, std::size_t k,
                        RelevanceNorm norm, bool explain_logit) {
  ad::Tape tape;
  const ForwardPass pass = forward(params, graph, tape);
  return relevances(tape, pass, k, norm, explain_logit);
}

std::vector<RelationshipDetection> score_candidates(const ModelParams& params,
                                                    const ImageGraph& graph,
                                                    const PriorTable* prior,
                                                    const ExplainConfig& config) {
  config.validate();
  std::vector<RelationshipDetection> out;
  if (graph.nodes.empty()) return out;

  ad::Tape tape;
  const ForwardPass pass = forward(params, graph, tape);
  const std::vector<double>& y = pass.probabilities.value().values();

  std::vector<std::size_t> predicates(y.size());
  std::iota(predicates.begin(), predicates.end(), 0);
  std::stable_sort(predicates.begin(), predicates.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  predicates.resize(std::min(config.top_n, predicates.size()));

  out.reserve(predicates.size() * graph.edges.size());
  for (std::size_t k : predicates) {
    if (graph.edges.empty()) break;
    const RelevanceMap rel = relevances(tape, pass, k, config.norm, config.explain_logit);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const GraphEdge& edge = graph.edges[e];
      const GraphNode& subj = graph.nodes[edge.from];
      const GraphNode& obj = graph.nodes[edge.to];
      RelationshipDetection det;
      det.subject = edge.from;
      det.object = edge.to;
      det.predicate = static_cast<int>(k);
      det.subject_class = subj.class_id;
      det.object_class = obj.class_id;
      det.subject_box = subj.box;
      det.object_box = obj.box;
      det.subject_relevance = rel.nodes[edge.from];
      det.edge_relevance = rel.edges[e];
      det.object_relevance = rel.nodes[edge.to];
      det.factors.pair_likelihood =
          pair_likelihood(det.subject_relevance, det.edge_relevance, det.object_relevance);
      det.factors.subject_score = subj.score;
      det.factors.object_score = obj.score;
      det.factors.predicate_score = y[k];
      det.factors.prior =
          prior ? prior->lookup(subj.class_id, obj.class_id, static_cast<int>(k)) : 1.0;
      det.score = det.factors.product();
      out.push_back(det);
    }
  }

  std::sort(out.begin(), out.end(),
            [](const RelationshipDetection& a, const RelationshipDetection& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.predicate != b.predicate) return a.predicate < b.predicate;
              if (a.subject != b.subject) return a.subject < b.subject;
              return a.object < b.object;
            });
  return out;
}

std::vector<RelationshipDetection> detect_relationships(const ModelParams& params,
                                                        const ImageGraph& graph,
                                                        const PriorTable* prior,
                                                        const ExplainConfig& config) {
  std::vector<RelationshipDetection> ranked = score_candidates(params, graph, prior, config);
  if (ranked.size() > config.cap) ranked.resize(config.cap);
  return ranked;
}

}  // namespace relex
