#include <doctest.h>

#include <cmath>
#include <map>

#include "../support/helpers.hpp"
#include "relex/errors.hpp"
#include "relex/explainer.hpp"

using namespace relex;
using namespace relex::testing;

namespace {

const VisualSpec kVisual = VisualSpec::flat(3);

ModelParams model(std::size_t k = 4, std::uint64_t seed = 1) {
  return ModelParams::initialize(small_dims(kVisual, k, 8), seed);
}

double y_of(const ModelParams& p, const ImageGraph& g, std::size_t k) { return predict(p, g)[k]; }

}  // namespace

TEST_CASE("pair likelihood") {
  CHECK(pair_likelihood(2, 3, 0.5) == 3.0);
  CHECK(pair_likelihood(0, 3, 0.5) == 0.0);
  CHECK(pair_likelihood(2, 0, 0.5) == 0.0);
  CHECK(pair_likelihood(2, 3 * 4.0, 0.5) == 4.0 * pair_likelihood(2, 3, 0.5));
}

TEST_CASE("relevance norms") {
  CHECK(relevance_norm_from_string("gxi+") == RelevanceNorm::PositiveGradientTimesInput);
  CHECK(std::string(to_string(RelevanceNorm::L2)) == "l2");
  CHECK_THROWS_AS(relevance_norm_from_string("linf"), ValidationError);

  const ModelParams params = model();
  const ImageGraph g = random_graph(3, 3, kVisual);
  ad::Tape tape;
  const ForwardPass pass = forward(params, g, tape);
  const std::size_t k = 2;
  const ad::Gradients grads = tape.backward(pass.probabilities, k);

  // Recompute every norm by hand from the raw gradients.
  std::map<RelevanceNorm, std::vector<double>> want;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    std::vector<double> gv, xv;
    for (const ad::Var v : {pass.node_spatial[i], pass.node_visual[i]}) {
      const Array& gr = grads.of(v);
      gv.insert(gv.end(), gr.data().begin(), gr.data().end());
      xv.insert(xv.end(), v.value().data().begin(), v.value().data().end());
    }
    double l1 = 0, l2 = 0, gxi = 0, gxip = 0;
    for (std::size_t c = 0; c < gv.size(); ++c) {
      l1 += std::abs(gv[c]);
      l2 += gv[c] * gv[c];
      gxi += std::abs(gv[c] * xv[c]);
      gxip += std::max(gv[c] * xv[c], 0.0);
    }
    want[RelevanceNorm::L1].push_back(l1);
    want[RelevanceNorm::L2].push_back(std::sqrt(l2));
    want[RelevanceNorm::GradientTimesInput].push_back(gxi);
    want[RelevanceNorm::PositiveGradientTimesInput].push_back(gxip);
  }
  for (auto& [norm, nodes] : want) {
    const RelevanceMap r = relevances(tape, pass, k, norm);
    CHECK(r.predicate == k);
    REQUIRE(r.nodes.size() == 3);
    CHECK(r.edges.size() == 6);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.nodes[i] == doctest::Approx(nodes[i]).epsilon(1e-12));
    for (double e : r.edges) CHECK(e >= 0.0);
  }
  CHECK_THROWS_AS(relevances(tape, pass, 4, RelevanceNorm::L1), BoundsError);
}

TEST_CASE("L1 relevance agrees with finite differences of y_k") {
  const ModelParams params = model(3, 7);
  const ImageGraph g = random_graph(8, 3, kVisual);
  const std::size_t k = 1;
  const RelevanceMap r = relevances(params, g, k, RelevanceNorm::L1);
  const double h = kFiniteDifferenceStep;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    double l1 = 0.0;
    for (Array GraphNode::*field : {&GraphNode::spatial, &GraphNode::visual}) {
      for (std::size_t c = 0; c < (g.nodes[i].*field).size(); ++c) {
        ImageGraph up = g, down = g;
        (up.nodes[i].*field)[c] += h;
        (down.nodes[i].*field)[c] -= h;
        l1 += std::abs((y_of(params, up, k) - y_of(params, down, k)) / (2 * h));
      }
    }
    CHECK(relative_error(r.nodes[i], l1) <= kGradientTolerance);
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      ImageGraph up = g, down = g;
      up.edges[e].attributes[c] += h;
      down.edges[e].attributes[c] -= h;
      l1 += std::abs((y_of(params, up, k) - y_of(params, down, k)) / (2 * h));
    }
    CHECK(relative_error(r.edges[e], l1) <= kGradientTolerance);
  }
}

TEST_CASE("a node whose features are unused has zero relevance") {
  ModelParams params = model();
  // Zeroing every relation weight cuts all paths from the inputs to y.
  for (std::size_t p = 0; p < params.names().size(); ++p) {
    if (params.names()[p] == "relation.weight") params.values()[p].fill(0.0);
  }
  const RelevanceMap r = relevances(params, random_graph(4, 3, kVisual), 0, RelevanceNorm::L2);
  for (double v : r.nodes) CHECK(v == 0.0);
  for (double v : r.edges) CHECK(v == 0.0);
}

TEST_CASE("relevances follow node relabeling") {
  const ModelParams params = model();
  Rng rng(12);
  const auto objects = random_objects(rng, 4, kVisual);
  const ImageGraph g = build_graph(objects, kImageWidth, kImageHeight);
  for (RelevanceNorm norm : {RelevanceNorm::L1, RelevanceNorm::GradientTimesInput}) {
    const RelevanceMap base = relevances(params, g, 0, norm);
    const auto perm = random_permutation(rng, 4);
    const ImageGraph pg = build_graph(permuted(objects, perm), kImageWidth, kImageHeight);
    const RelevanceMap r = relevances(params, pg, 0, norm);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(r.nodes[i] - base.nodes[perm[i]]) <= 1e-12);
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      const std::size_t a = perm[pg.edges[e].from], b = perm[pg.edges[e].to];
      const std::size_t orig = a * 3 + (b < a ? b : b - 1);  // lexicographic index
      CHECK(std::abs(r.edges[e] - base.edges[orig]) <= 1e-12);
    }
  }
}

TEST_CASE("candidate scoring") {
  const ModelParams params = model(4);
  const ImageGraph g = random_graph(20, 4, kVisual);
  ExplainConfig config;
  config.top_n = 2;

  const auto all = score_candidates(params, g, nullptr, config);
  CHECK(all.size() == 24);
  const auto y = predict(params, g);
  std::vector<std::size_t> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] > y[b]; });

  for (std::size_t i = 0; i < all.size(); ++i) {
    const RelationshipDetection& d = all[i];
    CHECK(d.subject != d.object);
    CHECK((d.predicate == static_cast<int>(order[0]) || d.predicate == static_cast<int>(order[1])));
    CHECK(d.score == d.factors.product());
    CHECK(d.factors.predicate_score == y[static_cast<std::size_t>(d.predicate)]);
    CHECK(d.factors.subject_score == g.nodes[d.subject].score);
    CHECK(d.factors.pair_likelihood ==
          pair_likelihood(d.subject_relevance, d.edge_relevance, d.object_relevance));
    CHECK(d.subject_box == g.nodes[d.subject].box);
    if (i > 0) {
      const RelationshipDetection& p = all[i - 1];
      CHECK(p.score >= d.score);
      if (p.score == d.score) {
        CHECK(std::tuple(p.predicate, p.subject, p.object) < std::tuple(d.predicate, d.subject, d.object));
      }
    }
  }

  config.cap = 5;
  const auto capped = detect_relationships(params, g, nullptr, config);
  REQUIRE(capped.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(capped[i].score == all[i].score);

  CHECK(score_candidates(params, random_graph(1, 0, kVisual), nullptr, config).empty());
  config.top_n = 0;
  CHECK_THROWS_AS(score_candidates(params, g, nullptr, config), ValidationError);
}

TEST_CASE("zero prior sinks a class pair") {
  const ModelParams params = model(2);
  Rng rng(30);
  auto objects = random_objects(rng, 3, kVisual);
  objects[0].class_id = 0;
  objects[1].class_id = 1;
  objects[2].class_id = 1;
  const ImageGraph g = build_graph(objects, kImageWidth, kImageHeight);
  // Predicate 0 only ever links class 1 -> class 1; predicate 1 is unobserved.
  const std::vector<TripletClass> seen = {{1, 0, 1}};
  const PriorTable prior = PriorTable::frequency(seen, 2, 5);
  ExplainConfig config;
  const auto all = score_candidates(params, g, &prior, config);
  bool zero_block = false;
  for (const RelationshipDetection& d : all) {
    const bool allowed = d.predicate == 1 || (d.subject_class == 1 && d.object_class == 1);
    if (!allowed) {
      CHECK(d.score == 0.0);
      zero_block = true;
    } else {
      // Zero-prior triplets rank after every triplet with a positive score.
      if (zero_block) CHECK(d.score == 0.0);
    }
  }
  CHECK(zero_block);
}

TEST_CASE("explanation leaves parameters and graph untouched") {
  const ModelParams params = model();
  const ImageGraph g = random_graph(40, 5, kVisual);
  const ModelParams p_copy = params;
  const std::vector<GraphNode> nodes = g.nodes;
  detect_relationships(params, g, nullptr, ExplainConfig{});
  CHECK(params == p_copy);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    CHECK(g.nodes[i].spatial == nodes[i].spatial);
    CHECK(g.nodes[i].visual == nodes[i].visual);
  }
}

TEST_CASE("logit explanation and subject-restricted graphs") {
  const ModelParams params = model();
  Rng rng(50);
  auto objects = random_objects(rng, 4, kVisual);
  const ImageGraph g = build_graph(objects, kImageWidth, kImageHeight,
                                   EdgeStructure::subject_restricted({objects[0].class_id}));
  ExplainConfig config;
  config.top_n = 3;
  config.explain_logit = true;
  CHECK(score_candidates(params, g, nullptr, config).size() == 3 * g.edges.size());

  const ImageGraph full = random_graph(51, 3, kVisual);
  const RelevanceMap prob = relevances(params, full, 0, RelevanceNorm::L1, false);
  const RelevanceMap logit = relevances(params, full, 0, RelevanceNorm::L1, true);
  const double y = predict(params, full)[0];
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(prob.nodes[i] == doctest::Approx(logit.nodes[i] * y * (1 - y)).epsilon(1e-10));
  }
}
