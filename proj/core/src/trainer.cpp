#include "dfi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dfi/checkpoint.hpp"
#include "dfi/error.hpp"
#include "dfi/log.hpp"
#include "dfi/ops.hpp"

namespace dfi {

TaskBatch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_batch: no indices");
  std::vector<Tensor> images, gts;
  for (std::size_t i : indices) {
    Sample s = dataset.get(i);
    images.push_back(std::move(s.image));
    gts.push_back(std::move(s.gt));
  }
  return {Tensor::stack(images), Tensor::stack(gts)};
}

namespace {

Var task_loss_var(Model& model, Task task, const TaskBatch& b, const LossConfig& loss) {
  const Var logits = model.forward(b.images, task);
  return task_loss(task, ops::sigmoid(logits), b.gts, loss);
}

}  // namespace

std::map<Task, double> accumulate_gradients(Model& model, const Batch& batch, const LossConfig& loss,
                                            GradPolicy policy) {
  model.parameters().zero_grad();
  std::map<Task, double> out;
  std::vector<Var> terms;
  for (Task task : canonical_task_order(model.config().tasks)) {
    auto it = batch.find(task);
    if (it == batch.end()) throw UsageError("batch has no pair for task " + std::string(task_name(task)));
    Var l = task_loss_var(model, task, it->second, loss);
    out[task] = l.value()[0];
    if (policy == GradPolicy::Sequential) {
      backward(l);
    } else {
      terms.push_back(l);
    }
  }
  if (policy == GradPolicy::Summed) backward(ops::sum_scalars(terms));
  return out;
}

int64_t steps_per_epoch(const std::map<Task, const Dataset*>& datasets, int batch_size) {
  std::size_t largest = 0;
  for (const auto& [task, ds] : datasets) largest = std::max(largest, ds->size());
  const auto bs = static_cast<std::size_t>(std::max(batch_size, 1));
  return static_cast<int64_t>((largest + bs - 1) / bs);
}

Trainer::Trainer(Model& model, TrainConfig train, LossConfig loss)
    : model_(&model),
      train_(std::move(train)),
      loss_(loss),
      adam_(model.parameters(), AdamConfig{train_.learning_rate, train_.beta1, train_.beta2, train_.adam_epsilon,
                                           train_.weight_decay}) {
  train_.validate();
  loss_.validate();
}

std::map<Task, double> Trainer::train_step(const Batch& batch) {
  const auto losses = accumulate_gradients(*model_, batch, loss_, GradPolicy::Sequential);
  for (const auto& [task, value] : losses) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite " + std::string(task_name(task)) + " loss at step " + std::to_string(step_));
    }
  }
  adam_.step();
  ++step_;
  return losses;
}

std::filesystem::path state_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".state");
  return p;
}

namespace {

constexpr char kStateMagic[8] = {'D', 'F', 'I', 'S', 'T', 'A', 'T', 'E'};

void save_state(const std::filesystem::path& path, const TrainState& state, const Adam& adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trainer state " + path.string());
  out.write(kStateMagic, sizeof(kStateMagic));
  out.write(reinterpret_cast<const char*>(&state.step), sizeof(state.step));
  out.write(reinterpret_cast<const char*>(&state.epoch), sizeof(state.epoch));
  std::ostringstream rng_text;
  rng_text << state.rng;
  const std::string s = rng_text.str();
  const uint64_t n = s.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(s.data(), static_cast<std::streamsize>(n));
  adam.save_state(out);
  if (!out) throw IoError("failed writing trainer state " + path.string());
}

void load_state(const std::filesystem::path& path, TrainState& state, Adam& adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trainer state " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(kStateMagic)) != 0) {
    throw IoError("not a trainer state file: " + path.string());
  }
  in.read(reinterpret_cast<char*>(&state.step), sizeof(state.step));
  in.read(reinterpret_cast<char*>(&state.epoch), sizeof(state.epoch));
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n > (uint64_t{1} << 20)) throw IoError("corrupt trainer state " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  std::istringstream rng_text(s);
  rng_text >> state.rng;
  adam.load_state(in);
  if (!in) throw IoError("truncated trainer state " + path.string());
}

void write_rows(std::ostream& out, const std::vector<LogRow>& rows, const std::vector<Task>& tasks) {
  out << std::setprecision(17);
  for (const LogRow& r : rows) {
    out << r.step << ',' << r.epoch;
    for (Task t : tasks) out << ',' << r.losses.at(t);
    out << ',' << r.lr << '\n';
  }
}

void write_header(std::ostream& out, const std::vector<Task>& tasks) {
  out << "step,epoch";
  for (Task t : tasks) out << ",loss_" << task_name(t);
  out << ",lr\n";
}

}  // namespace

void write_train_log(const std::filesystem::path& path, const std::vector<LogRow>& rows,
                     const std::vector<Task>& tasks) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log " + path.string());
  write_header(out, tasks);
  write_rows(out, rows, tasks);
}

TrainState Trainer::run(const std::map<Task, const Dataset*>& datasets, const RunOptions& options) {
  const std::vector<Task> tasks = canonical_task_order(model_->config().tasks);
  for (Task t : tasks) {
    auto it = datasets.find(t);
    if (it == datasets.end() || it->second == nullptr || it->second->empty()) {
      throw UsageError("no training data for task " + std::string(task_name(t)));
    }
  }
  std::map<Task, const Dataset*> used;
  for (Task t : tasks) used[t] = datasets.at(t);

  TrainState state;
  state.rng.seed(train_.seed);
  if (!options.resume_from.empty()) {
    const Checkpoint ck = read_checkpoint(options.resume_from);
    load_parameters(*model_, ck);
    load_state(state_path_for(options.resume_from), state, adam_);
    step_ = state.step;
    state.checkpoint_path = options.resume_from;
  }

  const int64_t per_epoch = steps_per_epoch(used, train_.batch_size);
  std::size_t largest = 0;
  for (const auto& [t, ds] : used) largest = std::max(largest, ds->size());
  const auto bs = static_cast<std::size_t>(train_.batch_size);
  const int last_epoch = options.max_epochs >= 0 ? std::min(options.max_epochs, train_.epochs) : train_.epochs;

  const std::filesystem::path log_path = options.output_dir / "train_log.csv";
  if (options.write_files) {
    std::filesystem::create_directories(options.output_dir);
    if (options.resume_from.empty() || !std::filesystem::exists(log_path)) {
      std::ofstream out(log_path);
      if (!out) throw IoError("cannot write training log " + log_path.string());
      write_header(out, tasks);
    }
  }

  for (int epoch = state.epoch; epoch < last_epoch; ++epoch) {
    const double lr = train_.lr_for_epoch(epoch);
    adam_.set_learning_rate(lr);

    // Sample order: permutation for the largest sets, resampling otherwise.
    std::map<Task, std::vector<std::size_t>> order;
    for (Task t : tasks) {
      const std::size_t n = used[t]->size();
      std::vector<std::size_t> idx;
      if (n == largest) {
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), state.rng);
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < largest; ++i) idx.push_back(pick(state.rng));
      }
      order[t] = std::move(idx);
    }

    std::vector<LogRow> rows;
    std::map<Task, double> sums;
    for (int64_t s = 0; s < per_epoch; ++s) {
      Batch batch;
      for (Task t : tasks) {
        std::vector<std::size_t> picks;
        for (std::size_t k = 0; k < bs; ++k) picks.push_back(order[t][(static_cast<std::size_t>(s) * bs + k) % largest]);
        batch[t] = make_batch(*used[t], picks);
      }
      const auto losses = train_step(batch);
      LogRow row{step_, epoch, losses, lr};
      for (const auto& [t, v] : losses) sums[t] += v;
      rows.push_back(row);
    }
    state.step = step_;
    state.epoch = epoch + 1;
    for (Task t : tasks) state.running_loss[t] = sums[t] / static_cast<double>(per_epoch);
    state.log.insert(state.log.end(), rows.begin(), rows.end());

    std::ostringstream msg;
    msg << "epoch " << state.epoch << " step " << state.step << " lr " << lr;
    for (Task t : tasks) msg << ' ' << task_name(t) << '=' << state.running_loss[t];
    log::info(msg.str());

    if (options.write_files) {
      std::ofstream out(log_path, std::ios::app);
      if (!out) throw IoError("cannot append to training log " + log_path.string());
      write_rows(out, rows, tasks);
      const auto ckpt = options.output_dir / ("checkpoint_epoch" + std::to_string(state.epoch) + ".ckpt");
      CheckpointMeta meta;
      meta.model = model_->config();
      meta.run_config_json = options.config_json;
      meta.step = state.step;
      meta.epoch = state.epoch;
      meta.seed = train_.seed;
      save_checkpoint(ckpt, *model_, meta);
      save_state(state_path_for(ckpt), state, adam_);
      state.checkpoint_path = ckpt;
    }
  }
  return state;
}

std::map<Task, double> mean_pixel_losses(Model& model, const std::map<Task, const Dataset*>& datasets,
                                         const LossConfig& loss) {
  NoGradGuard guard;
  std::map<Task, double> out;
  for (Task t : canonical_task_order(model.config().tasks)) {
    const Dataset* ds = datasets.at(t);
    double sum = 0.0;
    double pixels = 0.0;
    for (std::size_t i = 0; i < ds->size(); ++i) {
      const Sample s = ds->get(i);
      const Tensor images = Tensor::stack({s.image});
      const Tensor prob = model.predict(images, t);
      sum += task_loss(t, prob.values(), s.gt.values(), loss);
      pixels += static_cast<double>(s.gt.numel());
    }
    out[t] = sum / pixels;
  }
  return out;
}

SmokeResult overfit_smoke(Model& model, const std::map<Task, const Dataset*>& datasets, int steps,
                          const TrainConfig& train, const LossConfig& loss) {
  SmokeResult result;
  result.initial = mean_pixel_losses(model, datasets, loss);
  Trainer trainer(model, train, loss);
  const std::vector<Task> tasks = canonical_task_order(model.config().tasks);
  std::map<Task, std::vector<TaskBatch>> cache;
  for (Task t : tasks) {
    const Dataset* ds = datasets.at(t);
    for (std::size_t i = 0; i < ds->size(); ++i) cache[t].push_back(make_batch(*ds, {i}));
  }
  for (int s = 0; s < steps; ++s) {
    Batch batch;
    for (Task t : tasks) batch[t] = cache[t][static_cast<std::size_t>(s) % cache[t].size()];
    trainer.train_step(batch);
  }
  result.final = mean_pixel_losses(model, datasets, loss);
  return result;
}

}  // namespace dfi
