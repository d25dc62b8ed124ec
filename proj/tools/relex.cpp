#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "relex/cli.hpp"

namespace {

// Turns "50,100" style lists into numbers; CLI11 handles the splitting.
template <class T>
void add_list(CLI::App* app, const std::string& name, std::vector<T>& out,
              const std::string& help) {
  app->add_option(name, out, help)->delimiter(',')->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace relex::cli;
  CLI::App app{"Weakly-supervised visual relationship detection"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a planted-relation dataset");
  synth_cmd->add_option("--config", synth_args.config, "SynthConfig JSON");
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "fit the predicate classifier");
  train_cmd->add_option("--data", train_args.data, "training dataset")->required();
  train_cmd->add_option("--out", train_args.out, "checkpoint path")->required();
  train_cmd->add_option("--config", train_args.config, "TrainConfig JSON");
  train_cmd->add_option("--seed", train_args.seed, "overrides the config seed");
  train_cmd->add_option("--log", train_args.log, "epoch log (default <stem>.log.jsonl)");
  train_cmd->add_flag("--quiet", train_args.quiet, "do not echo the log to stderr");

  DetectArgs detect_args;
  CLI::App* detect_cmd = app.add_subcommand("detect", "explain the classifier into triplets");
  detect_cmd->add_option("--data", detect_args.data, "dataset to run on")->required();
  detect_cmd->add_option("--checkpoint", detect_args.checkpoint, "trained model")->required();
  detect_cmd->add_option("--prior", detect_args.prior, "PriorTable JSON (uniform if absent)");
  detect_cmd->add_option("--objects", detect_args.objects, "graph nodes")
      ->check(CLI::IsMember({"detected", "ground-truth"}))
      ->capture_default_str();
  detect_cmd->add_option("--score-threshold", detect_args.score_threshold,
                         "minimum detection score")
      ->capture_default_str();
  detect_cmd->add_option("--top-n", detect_args.top_n, "predicates explained per image")
      ->capture_default_str();
  detect_cmd->add_option("--norm", detect_args.norm, "relevance norm")
      ->check(CLI::IsMember({"l1", "l2", "gxi", "gxi+"}))
      ->capture_default_str();
  detect_cmd->add_option("--cap", detect_args.cap, "detections kept per image")
      ->capture_default_str();
  detect_cmd->add_flag("--logit", detect_args.logit, "explain the pre-sigmoid score");
  add_list(detect_cmd, "--subject-classes", detect_args.subject_classes,
           "only these classes act as subjects");
  detect_cmd->add_option("--out", detect_args.out, "detection JSON")->required();
  detect_cmd->add_option("--viz", detect_args.viz, "overlay report JSON");
  detect_cmd->add_option("--viz-top", detect_args.viz_top, "triplets per overlay image")
      ->capture_default_str();

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score detections against ground truth");
  eval_cmd->add_option("--detections", eval_args.detections, "detection JSON")->required();
  eval_cmd->add_option("--data", eval_args.data, "ground-truth dataset")->required();
  eval_cmd->add_option("--mode", eval_args.mode, "matching rule")
      ->check(CLI::IsMember({"relationship", "phrase", "predicate", "subject-only"}))
      ->capture_default_str();
  eval_cmd->add_option("--iou", eval_args.iou, "IoU threshold")->capture_default_str();
  add_list(eval_cmd, "--recall-at", eval_args.recall_at, "recall cut-offs");
  eval_cmd->add_option("--map-class-key", eval_args.map_class_key, "mAP class grouping")
      ->check(CLI::IsMember({"hoi", "triplet"}))
      ->capture_default_str();
  eval_cmd->add_option("--zero-shot-against", eval_args.zero_shot_against,
                       "training dataset; keep only unseen triplets");
  eval_cmd->add_option("--distractors", eval_args.distractors,
                       "detection JSON for images without ground truth");
  eval_cmd->add_option("--max-per-image", eval_args.max_per_image,
                       "detections kept per image for mAP (0 keeps all)")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "report JSON");

  PriorBuildArgs prior_args;
  CLI::App* prior_cmd = app.add_subcommand("prior-build", "estimate the frequency prior");
  prior_cmd->add_option("--data", prior_args.data, "training dataset")->required();
  prior_cmd->add_option("--fraction", prior_args.fraction, "share of images used")
      ->capture_default_str();
  prior_cmd->add_option("--seed", prior_args.seed, "subset seed")->capture_default_str();
  prior_cmd->add_option("--out", prior_args.out, "PriorTable JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth_cmd->parsed()) synth(synth_args);
    if (train_cmd->parsed()) train(train_args);
    if (detect_cmd->parsed()) detect(detect_args);
    if (eval_cmd->parsed()) std::cout << evaluate(eval_args).to_table();
    if (prior_cmd->parsed()) prior_build(prior_args);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "relex " << app.get_subcommands().front()->get_name() << ": " << msg << '\n';
    return 1;
  }
  return 0;
}
