#include "dfi/optimizer.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "dfi/error.hpp"

namespace dfi {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const Parameter& p : params.items()) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (Parameter& p : params_->items()) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (!p.trainable) continue;
    const Tensor& g = p.var.grad();
    Tensor& w = p.var.mutable_value();
    const double decay = p.role == ParamRole::Weight ? config_.weight_decay : 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double gi = (g.empty() ? 0.0 : g[i]) + decay * w[i];
      const auto j = static_cast<std::size_t>(i);
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gi;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
  params_->round_to_storage_precision();
}

void Adam::save_state(std::ostream& out) const {
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  const auto count = static_cast<uint64_t>(m_.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    const auto n = static_cast<uint64_t>(m_[k].size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(m_[k].data()), static_cast<std::streamsize>(n * sizeof(double)));
    out.write(reinterpret_cast<const char*>(v_[k].data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
}

void Adam::load_state(std::istream& in) {
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != m_.size()) throw IoError("optimizer state does not match the model's parameter list");
  for (std::size_t k = 0; k < m_.size(); ++k) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != m_[k].size()) throw IoError("optimizer state entry size mismatch");
    in.read(reinterpret_cast<char*>(m_[k].data()), static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(v_[k].data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!in) throw IoError("truncated optimizer state");
}

}  // namespace dfi
