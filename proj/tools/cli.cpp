#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "dfi/checkpoint.hpp"
#include "dfi/config.hpp"
#include "dfi/data.hpp"
#include "dfi/error.hpp"
#include "dfi/image_io.hpp"
#include "dfi/log.hpp"
#include "dfi/metrics.hpp"
#include "dfi/trainer.hpp"

namespace dfi::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<uint64_t> seed;
  std::string output_dir;
  std::string tasks;
  std::string checkpoint;
  bool synthetic = false;
  std::optional<int> count;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::string predictions;
  std::string input;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "overrides train.seed and model.init_seed");
  cmd->add_option("--output-dir", o.output_dir, "overrides output_dir");
  cmd->add_option("--tasks", o.tasks, "comma-separated subset of saliency,edge,skeleton");
  cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  cmd->add_flag("--synthetic", o.synthetic, "use synthetic data for every task");
  cmd->add_option("--count", o.count, "overrides data.synthetic_count");
}

RunConfig effective_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) {
    c.train.seed = *o.seed;
    c.model.init_seed = *o.seed;
  }
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (!o.tasks.empty()) c.model.tasks = parse_task_list(o.tasks);
  if (o.synthetic) {
    for (Task t : kAllTasks) c.data.sources[t] = "synthetic";
  }
  if (o.count) c.data.synthetic_count = *o.count;
  if (o.epochs) {
    c.train.epochs = *o.epochs;
    c.train.lr_drop_epoch = std::min(c.train.lr_drop_epoch, c.train.epochs);
  }
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  c.validate();
  return c;
}

void echo_config(const RunConfig& c) {
  fs::create_directories(c.output_dir);
  std::ofstream out(fs::path(c.output_dir) / "config.json");
  if (!out) throw IoError("cannot write " + (fs::path(c.output_dir) / "config.json").string());
  out << run_config_to_json(c) << '\n';
}

// Datasets for the requested tasks; synthetic ones share one generated set.
struct Data {
  std::unique_ptr<SyntheticSet> synthetic;
  std::map<Task, Dataset> loaded;
  std::map<Task, const Dataset*> view;
  std::map<Task, std::string> names;
};

Data load_data(const RunConfig& c, const std::vector<Task>& tasks) {
  Data d;
  for (Task t : tasks) {
    if (c.data.is_synthetic(t)) continue;
    const fs::path root = c.data.sources.at(t);
    for (const fs::path p : {root, root / "images", root / "gt"}) {
      if (!fs::is_directory(p)) {
        throw ConfigError("data." + std::string(task_name(t)) + ": directory not found: " + p.string());
      }
    }
  }
  for (Task t : tasks) {
    if (c.data.is_synthetic(t)) {
      if (!d.synthetic) d.synthetic = std::make_unique<SyntheticSet>(generate_synthetic(c.data.synthetic, c.data.synthetic_count));
      d.view[t] = &d.synthetic->for_task(t);
      d.names[t] = "synthetic";
    } else {
      const fs::path root = c.data.sources.at(t);
      std::string name = root.filename().string();
      if (name.empty()) name = root.parent_path().filename().string();
      d.loaded[t] = load_directory(root, t, name);
      d.names[t] = name;
    }
  }
  for (auto& [t, ds] : d.loaded) d.view[t] = &ds;
  return d;
}

std::unique_ptr<Model> require_model(const Options& o, CheckpointMeta* meta = nullptr) {
  if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw UsageError("checkpoint not found: " + o.checkpoint);
  return load_model(o.checkpoint, meta);
}

std::vector<Task> requested_tasks(const Options& o, const Model& model) {
  if (o.tasks.empty()) return canonical_task_order(model.config().tasks);
  std::vector<Task> tasks = parse_task_list(o.tasks);
  for (Task t : tasks) {
    if (!model.has_task(t)) {
      throw UsageError("task " + std::string(task_name(t)) + " is not enabled in checkpoint " + o.checkpoint);
    }
  }
  return tasks;
}

Tensor single(const Tensor& chw) { return Tensor::stack({chw}); }

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  Data data = load_data(c, c.model.tasks);
  echo_config(c);
  Model model(c.model);
  Trainer trainer(model, c.train, c.loss);
  RunOptions ro;
  ro.output_dir = c.output_dir;
  ro.resume_from = o.checkpoint;
  ro.config_json = run_config_to_json(c);
  const TrainState state = trainer.run(data.view, ro);
  out << "trained " << state.step << " steps over " << state.epoch << " epochs\n";
  for (const auto& [t, v] : state.running_loss) out << "  " << task_name(t) << " epoch-mean loss " << v << '\n';
  out << "last checkpoint: " << state.checkpoint_path.string() << '\n';
  return kExitOk;
}

GrayMap read_gray(const fs::path& path) {
  const Image8 img = read_png(path, 1);
  return GrayMap::from_tensor(to_tensor(img));
}

int cmd_eval(const Options& o, std::ostream& out) {
  RunConfig c = effective_config(o);
  std::unique_ptr<Model> model;
  std::vector<Task> tasks = c.model.tasks;
  if (o.predictions.empty()) {
    model = require_model(o);
    tasks = requested_tasks(o, *model);
  } else if (!fs::is_directory(o.predictions)) {
    throw ConfigError("--predictions: directory not found: " + o.predictions);
  }
  Data data = load_data(c, tasks);
  echo_config(c);

  std::vector<MetricReport> reports;
  for (Task t : tasks) {
    const Dataset& ds = *data.view.at(t);
    std::vector<GrayMap> preds, gts;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Sample s = ds.get(i);
      gts.push_back(GrayMap::from_tensor(s.gt));
      if (model) {
        preds.push_back(GrayMap::from_tensor(model->predict(single(s.image), t)));
      } else {
        const fs::path p = fs::path(o.predictions) / (s.id + "_" + std::string(task_name(t)) + ".png");
        if (!fs::exists(p)) throw IoError("missing prediction " + p.string());
        preds.push_back(read_gray(p));
      }
    }
    MetricReport r = evaluate_predictions(preds, gts, t, data.names.at(t), c.metrics);
    const std::string stem = std::string(task_name(t)) + "_" + r.dataset;
    write_report_csv(fs::path(c.output_dir) / ("metrics_" + stem + ".csv"), {r});
    write_pr_csv(fs::path(c.output_dir) / ("pr_" + stem + ".csv"), r.curve);
    out << task_name(t) << " on " << r.dataset << ":";
    for (const auto& [k, v] : r.values) out << ' ' << k << '=' << std::setprecision(6) << v;
    out << '\n';
    reports.push_back(std::move(r));
  }
  write_report_csv(fs::path(c.output_dir) / "metrics.csv", reports);
  write_report_json(fs::path(c.output_dir) / "metrics.json", reports);
  return kExitOk;
}

std::vector<fs::path> input_images(const std::string& input) {
  if (input.empty()) throw UsageError("--input is required");
  if (fs::is_regular_file(input)) return {fs::path(input)};
  if (!fs::is_directory(input)) throw UsageError("input not found: " + input);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no .png images in " + input);
  return files;
}

int cmd_predict(const Options& o, std::ostream& out) {
  auto model = require_model(o);
  const std::vector<Task> tasks = requested_tasks(o, *model);
  const auto files = input_images(o.input);
  const std::string out_dir = o.output_dir.empty() ? "predictions" : o.output_dir;
  fs::create_directories(out_dir);
  for (const fs::path& f : files) {
    const Tensor image = to_tensor(read_png(f, model->config().backbone.input_channels));
    for (Task t : tasks) {
      const Tensor prob = model->predict(single(image), t);
      const fs::path dst = fs::path(out_dir) / (f.stem().string() + "_" + std::string(task_name(t)) + ".png");
      write_png(dst, to_image8(prob));
      out << dst.string() << '\n';
    }
  }
  return kExitOk;
}

int cmd_inspect_selection(const Options& o, std::ostream& out) {
  auto model = require_model(o);
  if (model->config().dfim.variant == DfimVariant::Identity) {
    throw UsageError("the identity variant computes no selection probabilities");
  }
  RunConfig c = effective_config(o);
  const std::vector<Task> tasks = requested_tasks(o, *model);
  Data data = load_data(c, tasks);
  echo_config(c);

  const auto& rates = model->config().rates;
  std::ofstream csv(fs::path(c.output_dir) / "selection.csv");
  if (!csv) throw IoError("cannot write selection.csv in " + c.output_dir);
  csv << "dfim_rate,task,stage_index,mean_probability,keep_frequency\n" << std::setprecision(10);
  for (Task t : tasks) {
    const Dataset& ds = *data.view.at(t);
    std::vector<std::array<double, kNumStages>> prob(rates.size()), keep(rates.size());
    for (auto& a : prob) a.fill(0.0);
    for (auto& a : keep) a.fill(0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      NoGradGuard guard;
      TaskTrace trace;
      model->forward(single(ds.get(i).image), t, &trace);
      for (std::size_t r = 0; r < rates.size(); ++r)
        for (int s = 0; s < kNumStages; ++s) {
          prob[r][static_cast<std::size_t>(s)] += trace.profiles[r].probability(0, s);
          keep[r][static_cast<std::size_t>(s)] += trace.profiles[r].is_kept(0, s) ? 1.0 : 0.0;
        }
    }
    const double n = static_cast<double>(ds.size());
    std::ofstream grid(fs::path(c.output_dir) / ("selection_grid_" + std::string(task_name(t)) + ".csv"));
    grid << "dfim_rate" << std::setprecision(10);
    for (int s = 0; s < kNumStages; ++s) grid << ",stage" << (s + 1);
    grid << '\n';
    for (std::size_t r = 0; r < rates.size(); ++r) {
      grid << rates[r];
      for (int s = 0; s < kNumStages; ++s) {
        const double mp = prob[r][static_cast<std::size_t>(s)] / n;
        const double kf = keep[r][static_cast<std::size_t>(s)] / n;
        grid << ',' << mp;
        csv << rates[r] << ',' << task_name(t) << ',' << (s + 1) << ',' << mp << ',' << kf << '\n';
      }
      grid << '\n';
    }
  }
  out << "wrote " << (fs::path(c.output_dir) / "selection.csv").string() << '\n';
  return kExitOk;
}

int cmd_inspect_attention(const Options& o, std::ostream& out) {
  auto model = require_model(o);
  if (model->config().tam.mode == TamMode::Off) throw UsageError("tam.mode is off; there are no attention maps");
  RunConfig c = effective_config(o);
  const std::vector<Task> tasks = requested_tasks(o, *model);
  Data data = load_data(c, tasks);
  echo_config(c);
  const fs::path dir = fs::path(c.output_dir) / "attention";
  std::size_t written = 0;
  for (Task t : tasks) {
    const Dataset& ds = *data.view.at(t);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      NoGradGuard guard;
      TaskTrace trace;
      model->forward(single(ds.get(i).image), t, &trace);
      for (std::size_t r = 0; r < trace.attention.size(); ++r) {
        const fs::path dst = dir / (ds.id(i) + "_r" + std::to_string(model->config().rates[r]) + "_" +
                                    std::string(task_name(t)) + ".png");
        write_png(dst, to_image8(trace.attention[r].value()));
        ++written;
      }
    }
  }
  out << "wrote " << written << " attention maps to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gen_synthetic(const Options& o, std::ostream& out) {
  const RunConfig c = effective_config(o);
  echo_config(c);
  const SyntheticSet set = generate_synthetic(c.data.synthetic, c.data.synthetic_count);
  for (Task t : kAllTasks) export_dataset(set.for_task(t), fs::path(c.output_dir) / std::string(task_name(t)));
  out << "wrote " << c.data.synthetic_count << " scenes per task to " << c.output_dir << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic feature integration for joint saliency, edge and skeleton prediction", "dfi"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, o);
  train->add_option("--epochs", o.epochs, "overrides train.epochs");
  train->add_option("--learning-rate", o.learning_rate, "overrides train.learning_rate");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a directory of predictions");
  add_common(eval, o);
  eval->add_option("--predictions", o.predictions, "directory of <id>_<task>.png maps");

  auto* predict = app.add_subcommand("predict", "write probability maps for images");
  add_common(predict, o);
  predict->add_option("--input", o.input, "image file or directory of .png images");

  auto* inspect_sel = app.add_subcommand("inspect-selection", "mean stage-selection probabilities per DFIM");
  add_common(inspect_sel, o);
  auto* inspect_att = app.add_subcommand("inspect-attention", "dump attention maps per rate and task");
  add_common(inspect_att, o);
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic dataset to disk");
  add_common(gen, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (inspect_sel->parsed()) return cmd_inspect_selection(o, out);
    if (inspect_att->parsed()) return cmd_inspect_attention(o, out);
    if (gen->parsed()) return cmd_gen_synthetic(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dfi::cli
