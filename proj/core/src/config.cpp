#include "dfi/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dfi/error.hpp"
#include "json.hpp"

namespace dfi {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (lr_drop_epoch < 0 || lr_drop_epoch > epochs) throw ConfigError("train.lr_drop_epoch must lie in [0, epochs]");
  if (!(lr_drop_factor > 0.0)) throw ConfigError("train.lr_drop_factor must be > 0");
  if (optimizer != "adam") throw ConfigError("train.optimizer must be 'adam', got '" + optimizer + "'");
  if (grad_accumulation != "sequential") {
    throw ConfigError("train.grad_accumulation must be 'sequential', got '" + grad_accumulation + "'");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be > 0");
}

double TrainConfig::lr_for_epoch(int epoch) const {
  return epoch >= lr_drop_epoch ? learning_rate / lr_drop_factor : learning_rate;
}

bool DataConfig::is_synthetic(Task task) const {
  auto it = sources.find(task);
  return it == sources.end() || it->second == "synthetic";
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  loss.validate();
  data.synthetic.validate();
  if (data.synthetic_count < 1) throw ConfigError("data.synthetic_count must be >= 1");
  for (Task t : model.tasks) {
    auto it = data.sources.find(t);
    if (it != data.sources.end() && it->second.empty()) {
      throw ConfigError("data." + std::string(task_name(t)) + " must be a directory or 'synthetic'");
    }
  }
  if (!(metrics.tolerance.delta >= 0.0)) throw ConfigError("metrics.match_tolerance must be >= 0");
  if (metrics.saliency_steps < 1) throw ConfigError("metrics.saliency_thresholds must be >= 1");
  if (metrics.boundary_steps < 1) throw ConfigError("metrics.boundary_thresholds must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

namespace {

std::string_view norm_name(NormKind k) { return k == NormKind::Group ? "group" : "frozen_batch"; }

NormKind parse_norm(const std::string& s) {
  if (s == "group") return NormKind::Group;
  if (s == "frozen_batch") return NormKind::FrozenBatch;
  throw ConfigError("model.norm must be group or frozen_batch, got '" + s + "'");
}

std::string_view shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Capsule: return "capsule";
  }
  return "ellipse";
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "ellipse") return ShapeKind::Ellipse;
  if (s == "rectangle") return ShapeKind::Rectangle;
  if (s == "capsule") return ShapeKind::Capsule;
  throw ConfigError("data.shape_kinds entries must be ellipse, rectangle or capsule, got '" + s + "'");
}

std::vector<std::string> task_names(const std::vector<Task>& tasks) {
  std::vector<std::string> out;
  for (Task t : tasks) out.emplace_back(task_name(t));
  return out;
}

// Reads keys of one section, rejecting anything not consumed.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_ + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(prefix_ + "." + key + " has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + prefix_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json model_to_json(const ModelConfig& m) {
  json j;
  j["input_channels"] = m.backbone.input_channels;
  j["stage_channels"] = m.backbone.stage_channels;
  j["ppm_channels"] = m.backbone.ppm_channels;
  j["ppm_bins"] = m.backbone.ppm_bin_sizes;
  j["norm"] = std::string(norm_name(m.backbone.norm));
  j["norm_groups"] = m.backbone.norm_groups;
  j["common_channels"] = m.dfim.common_channels;
  j["dfim_variant"] = std::string(variant_name(m.dfim.variant));
  j["tam_mode"] = std::string(tam_mode_name(m.tam.mode));
  j["tam_hidden_channels"] = m.tam.resolved_hidden();
  j["rates"] = m.rates;
  j["tasks"] = task_names(m.tasks);
  j["input_mean"] = m.preprocess.mean;
  j["input_std"] = m.preprocess.stddev;
  j["init_seed"] = m.init_seed;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  Section s(j, "model");
  s.read("input_channels", m.backbone.input_channels);
  s.read("stage_channels", m.backbone.stage_channels);
  s.read("ppm_channels", m.backbone.ppm_channels);
  s.read("ppm_bins", m.backbone.ppm_bin_sizes);
  std::string norm{norm_name(m.backbone.norm)};
  s.read("norm", norm);
  m.backbone.norm = parse_norm(norm);
  s.read("norm_groups", m.backbone.norm_groups);
  s.read("common_channels", m.dfim.common_channels);
  m.tam.channels = m.dfim.common_channels;
  std::string variant{variant_name(m.dfim.variant)};
  s.read("dfim_variant", variant);
  m.dfim.variant = parse_variant(variant);
  std::string mode{tam_mode_name(m.tam.mode)};
  s.read("tam_mode", mode);
  m.tam.mode = parse_tam_mode(mode);
  s.read("tam_hidden_channels", m.tam.hidden_channels);
  s.read("rates", m.rates);
  std::vector<std::string> tasks = task_names(m.tasks);
  s.read("tasks", tasks);
  m.tasks.clear();
  for (const auto& t : tasks) m.tasks.push_back(parse_task(t));
  m.tasks = canonical_task_order(m.tasks);
  s.read("input_mean", m.preprocess.mean);
  s.read("input_std", m.preprocess.stddev);
  s.read("init_seed", m.init_seed);
  s.finish();
  return m;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json root = parse_text(json_text);
  RunConfig c;
  Section top(root, "config");
  if (const json* m = top.take("model")) c.model = model_from_json(*m);

  if (const json* t = top.take("train")) {
    Section s(*t, "train");
    s.read("learning_rate", c.train.learning_rate);
    s.read("weight_decay", c.train.weight_decay);
    s.read("epochs", c.train.epochs);
    s.read("lr_drop_epoch", c.train.lr_drop_epoch);
    s.read("lr_drop_factor", c.train.lr_drop_factor);
    s.read("seed", c.train.seed);
    s.read("optimizer", c.train.optimizer);
    s.read("grad_accumulation", c.train.grad_accumulation);
    s.read("batch_size", c.train.batch_size);
    s.read("beta1", c.train.beta1);
    s.read("beta2", c.train.beta2);
    s.read("adam_epsilon", c.train.adam_epsilon);
    s.finish();
  }

  if (const json* l = top.take("loss")) {
    Section s(*l, "loss");
    s.read("epsilon", c.loss.epsilon);
    s.read("binarize_threshold", c.loss.binarize_threshold);
    s.finish();
  }

  if (const json* d = top.take("data")) {
    Section s(*d, "data");
    for (Task t : kAllTasks) {
      std::string src;
      s.read(std::string(task_name(t)), src);
      if (s.has(std::string(task_name(t)))) c.data.sources[t] = src;
    }
    s.read("synthetic_count", c.data.synthetic_count);
    s.read("canvas", c.data.synthetic.canvas);
    s.read("min_shapes", c.data.synthetic.min_shapes);
    s.read("max_shapes", c.data.synthetic.max_shapes);
    s.read("texture_amplitude", c.data.synthetic.texture_amplitude);
    s.read("synthetic_seed", c.data.synthetic.seed);
    if (s.has("shape_kinds")) {
      std::vector<std::string> kinds;
      s.read("shape_kinds", kinds);
      c.data.synthetic.kinds.clear();
      for (const auto& k : kinds) c.data.synthetic.kinds.push_back(parse_shape(k));
    } else {
      s.take("shape_kinds");
    }
    s.finish();
  }

  if (const json* m = top.take("metrics")) {
    Section s(*m, "metrics");
    s.read("match_tolerance", c.metrics.tolerance.delta);
    s.read("saliency_thresholds", c.metrics.saliency_steps);
    s.read("boundary_thresholds", c.metrics.boundary_steps);
    s.read("thin_predictions", c.metrics.thin_predictions);
    s.finish();
  }

  top.read("output_dir", c.output_dir);
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["model"] = model_to_json(c.model);
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"weight_decay", c.train.weight_decay},
                {"epochs", c.train.epochs},
                {"lr_drop_epoch", c.train.lr_drop_epoch},
                {"lr_drop_factor", c.train.lr_drop_factor},
                {"seed", c.train.seed},
                {"optimizer", c.train.optimizer},
                {"grad_accumulation", c.train.grad_accumulation},
                {"batch_size", c.train.batch_size},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_epsilon", c.train.adam_epsilon}};
  j["loss"] = {{"epsilon", c.loss.epsilon}, {"binarize_threshold", c.loss.binarize_threshold}};
  json data;
  for (Task t : c.model.tasks) data[std::string(task_name(t))] = c.data.is_synthetic(t) ? "synthetic" : c.data.sources.at(t);
  data["synthetic_count"] = c.data.synthetic_count;
  data["canvas"] = c.data.synthetic.canvas;
  data["min_shapes"] = c.data.synthetic.min_shapes;
  data["max_shapes"] = c.data.synthetic.max_shapes;
  data["texture_amplitude"] = c.data.synthetic.texture_amplitude;
  data["synthetic_seed"] = c.data.synthetic.seed;
  std::vector<std::string> kinds;
  for (ShapeKind k : c.data.synthetic.kinds) kinds.emplace_back(shape_name(k));
  data["shape_kinds"] = kinds;
  j["data"] = data;
  j["metrics"] = {{"match_tolerance", c.metrics.tolerance.delta},
                  {"saliency_thresholds", c.metrics.saliency_steps},
                  {"boundary_thresholds", c.metrics.boundary_steps},
                  {"thin_predictions", c.metrics.thin_predictions}};
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

std::string model_config_to_json(const ModelConfig& config) { return model_to_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& json_text) {
  ModelConfig m = model_from_json(parse_text(json_text));
  m.validate();
  return m;
}

}  // namespace dfi
