#include "relex/cli.hpp"

#include <fstream>
#include <iostream>

#include "relex/errors.hpp"
#include "relex/synth.hpp"
#include "relex/train.hpp"

namespace relex::cli {

void synth(const SynthArgs& args) {
  SynthConfig config;
  if (args.config) config = SynthConfig::from_json(read_json(*args.config));
  config.validate();
  const SynthSplits splits = generate_synthetic(config);
  fs::create_directories(args.out);
  save_dataset(splits.train, args.out / "train.json");
  save_dataset(splits.test, args.out / "test.json");
  write_json(config.to_json(), args.out / "synth_config.json");
}

fs::path default_log_path(const fs::path& checkpoint) {
  fs::path log = checkpoint;
  log.replace_extension(".log.jsonl");
  return log;
}

void train(const TrainArgs& args) {
  TrainConfig config;
  if (args.config) config = TrainConfig::from_json(read_json(*args.config));
  if (args.seed) config.seed = *args.seed;
  config.validate();
  const Dataset data = load_dataset(args.data);

  const fs::path log_path = args.log ? *args.log : default_log_path(args.out);
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw Error("cannot write " + log_path.string());
  const TrainResult result =
      relex::train(data.images, data.header.task(), config, [&](const EpochRecord& r) {
        const std::string line = to_log_line(r);
        log << line << '\n';
        log.flush();
        if (!args.quiet) std::cerr << line << '\n';
      });
  if (!log) throw Error("failed writing " + log_path.string());
  save_checkpoint(result.params, args.out);
}

void detect(const DetectArgs& args) {
  DetectOptions options;
  options.objects = object_source_from_string(args.objects);
  options.score_threshold = args.score_threshold;
  options.explain.top_n = args.top_n;
  options.explain.norm = relevance_norm_from_string(args.norm);
  options.explain.cap = args.cap;
  options.explain.explain_logit = args.logit;
  if (!args.subject_classes.empty()) {
    options.structure.kind = EdgeStructure::Kind::SubjectClassRestricted;
    options.structure.subject_classes = args.subject_classes;
  }
  options.explain.validate();

  // Every compatibility check happens before the first forward pass.
  const ModelParams params = load_checkpoint(args.checkpoint);
  const Dataset data = load_dataset(args.data);
  check_compatible(params, data.header.task());
  const PriorTable prior =
      args.prior ? PriorTable::load(*args.prior)
                 : PriorTable::uniform(data.header.num_predicates, data.header.num_classes);
  const std::string prior_name =
      prior.mode() == PriorTable::Mode::Frequency ? "frequency" : "uniform";

  const std::vector<ImageDetections> dets = run_detection(params, data, &prior, options);
  write_json(detections_to_json(dets, data.header, options, prior_name), args.out);
  if (args.viz) write_json(visualization_report(dets, data, options, args.viz_top), *args.viz);
}

EvalReport evaluate(const EvaluateArgs& args) {
  MatchMode mode{match_variant_from_string(args.mode), args.iou};
  mode.validate();
  const ClassKey key = class_key_from_string(args.map_class_key);
  for (std::size_t x : args.recall_at) {
    if (x == 0) throw ValidationError("recall cut-offs must be positive");
  }

  const Dataset data = load_dataset(args.data);
  const auto detections = triplets_from_detection_json(read_json(args.detections));
  std::optional<std::map<std::string, std::vector<Triplet>>> distractors;
  if (args.distractors) distractors = triplets_from_detection_json(read_json(*args.distractors));
  std::optional<std::set<TripletClass>> seen;
  if (args.zero_shot_against) {
    const Dataset train = load_dataset(*args.zero_shot_against);
    const std::vector<TripletClass> classes = triplet_classes(train.images);
    seen.emplace(classes.begin(), classes.end());
  }

  const std::vector<ImageEval> images = build_eval_set(
      data, detections, distractors ? &*distractors : nullptr, seen ? &*seen : nullptr);
  EvalReport report = relex::evaluate(images, mode, key, args.recall_at, args.max_per_image);
  if (args.out) write_json(report.to_json(), *args.out);
  return report;
}

void prior_build(const PriorBuildArgs& args) {
  if (!(args.fraction > 0.0 && args.fraction <= 1.0)) {
    throw ValidationError("fraction must lie in (0, 1]");
  }
  const Dataset data = load_dataset(args.data);
  const Split split = split_holdout(data.images.size(), args.fraction, args.seed);
  const std::vector<ImageRecord> subset = select(data.images, split.held_out);
  const std::vector<TripletClass> triplets = triplet_classes(subset);
  PriorTable::frequency(triplets, data.header.num_predicates, data.header.num_classes)
      .save(args.out);
}

}  // namespace relex::cli
