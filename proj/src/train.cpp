#include "relex/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "relex/adam.hpp"
#include "relex/errors.hpp"

namespace relex {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch size must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5)) {
    throw ValidationError("validation fraction must lie in [0, 0.5]");
  }
  if (learning_rate < 0.0 || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be finite and non-negative");
  }
  if (weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  if (hidden == 0) throw ValidationError("hidden width must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"validation_fraction", validation_fraction},
          {"hidden", hidden},
          {"conv_kernels", conv_kernels},
          {"conv_layers", conv_layers},
          {"pooling", ad::to_string(pooling)},
          {"readout_bias", readout_bias}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  if (!doc.is_object()) throw FormatError("training config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "validation_fraction") c.validation_fraction = v.get<double>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "conv_kernels") c.conv_kernels = v.get<std::size_t>();
      else if (key == "conv_layers") c.conv_layers = v.get<std::size_t>();
      else if (key == "pooling") c.pooling = ad::pool_mode_from_string(v.get<std::string>());
      else if (key == "readout_bias") c.readout_bias = v.get<bool>();
      else throw ValidationError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelDims TrainConfig::model_dims(const TaskShape& task) const {
  ModelDims dims;
  dims.task = task;
  dims.hidden = hidden;
  dims.conv_kernels = conv_kernels;
  dims.conv_layers = conv_layers;
  dims.pooling = pooling;
  dims.readout_bias = readout_bias;
  return dims;
}

std::string to_log_line(const EpochRecord& record) {
  json line = {{"epoch", record.epoch}, {"mean_loss", record.mean_loss}};
  line["val_recall_at_5"] = record.validation_recall_at_5
                                ? json(*record.validation_recall_at_5)
                                : json(nullptr);
  return line.dump();
}

TrainResult train(std::span<const ImageRecord> records, const TaskShape& task,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (records.empty()) throw ValidationError("cannot train on an empty dataset");

  std::vector<ImageGraph> graphs;
  graphs.reserve(records.size());
  for (const ImageRecord& r : records) {
    if (r.predicate_labels.size() != task.num_predicates) {
      throw ShapeError("image " + r.image_id + " has " +
                       std::to_string(r.predicate_labels.size()) + " labels, expected " +
                       std::to_string(task.num_predicates));
    }
    graphs.push_back(build_graph(r.objects, r.width, r.height));
  }

  TrainResult result;
  result.split = split_holdout(records.size(), config.validation_fraction, config.seed);
  if (result.split.kept.empty()) throw ValidationError("training split is empty");
  result.params = ModelParams::initialize(config.model_dims(task), config.seed);

  ModelParams& params = result.params;
  ad::AdamState adam = ad::make_adam_state(params.values());
  std::vector<Array> grad_sum;
  for (const Array& p : params.values()) grad_sum.emplace_back(p.shape());

  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = result.split.kept;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (Array& g : grad_sum) g.fill(0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        ad::Tape tape;
        const ForwardPass pass = forward(params, graphs[idx], tape);
        const ad::Var l = loss(pass, records[idx].predicate_labels);
        epoch_loss += l.value()[0];
        const ad::Gradients grads = tape.backward(l);
        for (std::size_t p = 0; p < grad_sum.size(); ++p) {
          const Array& g = grads.of(pass.parameters[p]);
          auto acc = grad_sum[p].data();
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j] * inv_batch;
        }
      }
      if (config.learning_rate > 0.0) {
        ad::adam_step(params.values(), grad_sum, adam, config.learning_rate,
                      config.weight_decay);
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = epoch_loss / static_cast<double>(order.size());
    if (!result.split.held_out.empty()) {
      double recall = 0.0;
      for (std::size_t idx : result.split.held_out) {
        recall += recall_at_k(predict(params, graphs[idx]), records[idx].predicate_labels, 5);
      }
      record.validation_recall_at_5 = recall / static_cast<double>(result.split.held_out.size());
    }
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

namespace {

json visual_to_json(const VisualSpec& v) {
  json out = {{"mode", to_string(v.mode)}};
  if (v.mode == VisualSpec::Mode::Flat) out["dim"] = v.dim;
  if (v.mode == VisualSpec::Mode::Map) {
    out["channels"] = v.channels;
    out["height"] = v.height;
    out["width"] = v.width;
  }
  return out;
}

VisualSpec visual_from_json(const json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "none") return VisualSpec::none();
  if (mode == "flat") return VisualSpec::flat(j.at("dim").get<std::size_t>());
  if (mode == "map") {
    return VisualSpec::map(j.at("channels").get<std::size_t>(), j.value("height", 7),
                           j.value("width", 7));
  }
  throw FormatError("unknown visual mode '" + mode + "'");
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const ModelDims& d = params.dims();
  json doc;
  doc["format"] = "relex-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["dims"] = {{"num_classes", d.task.num_classes},
                 {"num_predicates", d.task.num_predicates},
                 {"visual", visual_to_json(d.task.visual)},
                 {"hidden", d.hidden},
                 {"conv_kernels", d.conv_kernels},
                 {"conv_layers", d.conv_layers},
                 {"pooling", ad::to_string(d.pooling)},
                 {"readout_bias", d.readout_bias}};
  json tensors = json::array();
  for (std::size_t i = 0; i < params.names().size(); ++i) {
    const Array& a = params.values()[i];
    tensors.push_back({{"name", params.names()[i]}, {"shape", a.shape()}, {"data", a.values()}});
  }
  doc["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "relex-checkpoint") {
      throw FormatError("file " + path.string() + " is not a checkpoint");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionError("checkpoint version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    }
    const json& jd = doc.at("dims");
    ModelDims dims;
    dims.task.num_classes = jd.at("num_classes").get<std::size_t>();
    dims.task.num_predicates = jd.at("num_predicates").get<std::size_t>();
    dims.task.visual = visual_from_json(jd.at("visual"));
    dims.hidden = jd.at("hidden").get<std::size_t>();
    dims.conv_kernels = jd.at("conv_kernels").get<std::size_t>();
    dims.conv_layers = jd.at("conv_layers").get<std::size_t>();
    dims.pooling = ad::pool_mode_from_string(jd.at("pooling").get<std::string>());
    dims.readout_bias = jd.at("readout_bias").get<bool>();

    const auto layout = parameter_layout(dims);
    const json& tensors = doc.at("tensors");
    if (tensors.size() != layout.size()) {
      throw ShapeError("checkpoint holds " + std::to_string(tensors.size()) +
                       " tensors, its dims require " + std::to_string(layout.size()));
    }
    std::vector<Array> values;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const json& t = tensors[i];
      if (t.at("name").get<std::string>() != layout[i].first) {
        throw ShapeError("checkpoint tensor " + std::to_string(i) + " is '" +
                         t.at("name").get<std::string>() + "', expected '" +
                         layout[i].first + "'");
      }
      Shape shape = t.at("shape").get<Shape>();
      if (shape != layout[i].second) {
        throw ShapeError("checkpoint tensor " + layout[i].first + " has shape " +
                         shape_to_string(shape) + ", expected " +
                         shape_to_string(layout[i].second));
      }
      values.emplace_back(std::move(shape), t.at("data").get<std::vector<double>>());
    }
    return ModelParams(dims, std::move(values));
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

void check_compatible(const ModelParams& params, const TaskShape& task) {
  const TaskShape& have = params.dims().task;
  if (have.num_predicates != task.num_predicates) {
    throw ShapeError("checkpoint predicts " + std::to_string(have.num_predicates) +
                     " predicates, dataset declares " + std::to_string(task.num_predicates));
  }
  if (have.num_classes != task.num_classes) {
    throw ShapeError("checkpoint was trained on " + std::to_string(have.num_classes) +
                     " classes, dataset declares " + std::to_string(task.num_classes));
  }
  if (!(have.visual == task.visual)) {
    throw ShapeError(std::string("checkpoint expects visual features of mode ") +
                     to_string(have.visual.mode) + " " + shape_to_string(have.visual.shape()) +
                     ", dataset declares " + to_string(task.visual.mode) + " " +
                     shape_to_string(task.visual.shape()));
  }
}

}  // namespace relex
