#include "dfi/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dfi/error.hpp"

namespace dfi::ops {
namespace {

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (!x.defined() || x.value().rank() != rank) {
    throw UsageError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                     (x.defined() ? shape_to_string(x.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n && n->requires_grad; }

// Range of output columns whose input column ow*stride - pad + offset lies in [0, width).
inline void valid_range(int64_t out_size, int64_t in_size, int stride, int64_t offset, int64_t& lo,
                        int64_t& hi) {
  // need 0 <= o*stride + offset <= in_size-1
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  const int64_t top = in_size - 1 - offset;
  hi = top < 0 ? -1 : std::min(out_size - 1, top / stride);
}

struct BilinearTap {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<BilinearTap> bilinear_taps(int64_t in_size, int64_t out_size) {
  std::vector<BilinearTap> taps(static_cast<std::size_t>(out_size));
  const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (int64_t o = 0; o < out_size; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in_size - 1) i0 = in_size - 1;
    const int64_t i1 = std::min(i0 + 1, in_size - 1);
    const double lambda = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - lambda, lambda};
  }
  return taps;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != k) {
    throw UsageError("conv2d: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != cout)) {
    throw UsageError("conv2d: bias shape " + shape_to_string(bias.shape()));
  }
  const int64_t span = static_cast<int64_t>(g.dilation) * (k - 1) + 1;
  const int64_t ho = (h + 2 * g.padding - span) / g.stride + 1;
  const int64_t wo = (w + 2 * g.padding - span) / g.stride + 1;
  if (ho <= 0 || wo <= 0) throw UsageError("conv2d: empty output for input " + shape_to_string(x.shape()));

  Tensor out({batch, cout, ho, wo}, 0.0);
  const double* in = x.value().data();
  const double* wt = weight.value().data();
  double* o = out.data();
  const int s = g.stride;
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t oc = 0; oc < cout; ++oc) {
      double* op = o + (n * cout + oc) * ho * wo;
      if (bias.defined()) std::fill(op, op + ho * wo, bias.value()[oc]);
      for (int64_t ic = 0; ic < cin; ++ic) {
        const double* ip = in + (n * cin + ic) * h * w;
        const double* wp = wt + (oc * cin + ic) * k * k;
        for (int64_t kh = 0; kh < k; ++kh) {
          const int64_t yoff = kh * g.dilation - g.padding;
          int64_t ylo, yhi;
          valid_range(ho, h, s, yoff, ylo, yhi);
          for (int64_t kw = 0; kw < k; ++kw) {
            const double wv = wp[kh * k + kw];
            const int64_t xoff = kw * g.dilation - g.padding;
            int64_t xlo, xhi;
            valid_range(wo, w, s, xoff, xlo, xhi);
            if (xlo > xhi) continue;
            for (int64_t oy = ylo; oy <= yhi; ++oy) {
              const double* irow = ip + (oy * s + yoff) * w + xoff;
              double* orow = op + oy * wo;
              if (s == 1) {
                for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[ox];
              } else {
                for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * irow[ox * s];
              }
            }
          }
        }
      }
    }
  }

  return make_op_result(std::move(out), {x, weight, bias}, [=](Node& self) {
    const auto& xn = self.inputs[0];
    const auto& wn = self.inputs[1];
    const auto& bn = self.inputs[2];
    const double* go = self.grad.data();
    const double* in = xn->value.data();
    const double* wt = wn->value.data();
    double* gx = wants_grad(xn) ? xn->grad_buffer().data() : nullptr;
    double* gw = wants_grad(wn) ? wn->grad_buffer().data() : nullptr;
    double* gb = wants_grad(bn) ? bn->grad_buffer().data() : nullptr;
    for (int64_t n = 0; n < batch; ++n) {
      for (int64_t oc = 0; oc < cout; ++oc) {
        const double* gp = go + (n * cout + oc) * ho * wo;
        if (gb) {
          double acc = 0.0;
          for (int64_t i = 0; i < ho * wo; ++i) acc += gp[i];
          gb[oc] += acc;
        }
        for (int64_t ic = 0; ic < cin; ++ic) {
          const double* ip = in + (n * cin + ic) * h * w;
          double* gip = gx ? gx + (n * cin + ic) * h * w : nullptr;
          const double* wp = wt + (oc * cin + ic) * k * k;
          double* gwp = gw ? gw + (oc * cin + ic) * k * k : nullptr;
          for (int64_t kh = 0; kh < k; ++kh) {
            const int64_t yoff = kh * g.dilation - g.padding;
            int64_t ylo, yhi;
            valid_range(ho, h, s, yoff, ylo, yhi);
            for (int64_t kw = 0; kw < k; ++kw) {
              const int64_t xoff = kw * g.dilation - g.padding;
              int64_t xlo, xhi;
              valid_range(wo, w, s, xoff, xlo, xhi);
              if (xlo > xhi) continue;
              const double wv = wp[kh * k + kw];
              double wacc = 0.0;
              for (int64_t oy = ylo; oy <= yhi; ++oy) {
                const int64_t row = (oy * s + yoff) * w + xoff;
                const double* grow = gp + oy * wo;
                const double* irow = ip + row;
                if (gip) {
                  double* girow = gip + row;
                  for (int64_t ox = xlo; ox <= xhi; ++ox) girow[ox * s] += wv * grow[ox];
                }
                if (gwp) {
                  for (int64_t ox = xlo; ox <= xhi; ++ox) wacc += grow[ox] * irow[ox * s];
                }
              }
              if (gwp) gwp[kh * k + kw] += wacc;
            }
          }
        }
      }
    }
  });
}

Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right) {
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = h + top + bottom, wo = w + left + right;
  Tensor out({batch, c, ho, wo});
  for (int64_t nc = 0; nc < batch * c; ++nc) {
    const double* ip = x.data() + nc * h * w;
    double* op = out.data() + nc * ho * wo;
    for (int64_t y = 0; y < ho; ++y) {
      const int64_t sy = std::clamp<int64_t>(y - top, 0, h - 1);
      for (int64_t xx = 0; xx < wo; ++xx) {
        const int64_t sx = std::clamp<int64_t>(xx - left, 0, w - 1);
        op[y * wo + xx] = ip[sy * w + sx];
      }
    }
  }
  return out;
}

Var pad_replicate(const Var& x, int top, int bottom, int left, int right) {
  require_rank(x, 4, "pad_replicate");
  Tensor out = pad_replicate(x.value(), top, bottom, left, right);
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t ho = out.dim(2), wo = out.dim(3);
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    const double* go = self.grad.data();
    for (int64_t nc = 0; nc < batch * c; ++nc) {
      const double* gp = go + nc * ho * wo;
      double* gip = gx + nc * h * w;
      for (int64_t y = 0; y < ho; ++y) {
        const int64_t sy = std::clamp<int64_t>(y - top, 0, h - 1);
        for (int64_t xx = 0; xx < wo; ++xx) {
          const int64_t sx = std::clamp<int64_t>(xx - left, 0, w - 1);
          gip[sy * w + sx] += gp[y * wo + xx];
        }
      }
    }
  });
}

Var crop(const Var& x, int64_t height, int64_t width) {
  require_rank(x, 4, "crop");
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (height > h || width > w) throw UsageError("crop larger than input " + shape_to_string(x.shape()));
  if (height == h && width == w) return x;
  Tensor out({batch, c, height, width});
  for (int64_t nc = 0; nc < batch * c; ++nc)
    for (int64_t y = 0; y < height; ++y)
      for (int64_t xx = 0; xx < width; ++xx)
        out[(nc * height + y) * width + xx] = x.value()[(nc * h + y) * w + xx];
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t nc = 0; nc < batch * c; ++nc)
      for (int64_t y = 0; y < height; ++y)
        for (int64_t xx = 0; xx < width; ++xx) gx[(nc * h + y) * w + xx] += self.grad[(nc * height + y) * width + xx];
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  require_rank(x, 4, "group_norm");
  const int64_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups <= 0 || c % groups != 0) {
    throw UsageError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  const int64_t per = c / groups;
  const int64_t count = per * hw;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.value().numel()));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch * groups));
  const double* in = x.value().data();
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t g = 0; g < groups; ++g) {
      const int64_t base = (n * c + g * per) * hw;
      double mean = 0.0;
      for (int64_t i = 0; i < count; ++i) mean += in[base + i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (int64_t i = 0; i < count; ++i) {
        const double d = in[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(count);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n * groups + g)] = is;
      for (int64_t ch = 0; ch < per; ++ch) {
        const int64_t cc = g * per + ch;
        const double ga = gamma.value()[cc], be = beta.value()[cc];
        for (int64_t i = 0; i < hw; ++i) {
          const int64_t idx = base + ch * hw + i;
          const double xh = (in[idx] - mean) * is;
          (*xhat)[static_cast<std::size_t>(idx)] = xh;
          out[idx] = ga * xh + be;
        }
      }
    }
  }
  return make_op_result(std::move(out), {x, gamma, beta}, [=](Node& self) {
    const auto& xn = self.inputs[0];
    const auto& gn = self.inputs[1];
    const auto& bn = self.inputs[2];
    const double* go = self.grad.data();
    const double* ga = gn->value.data();
    double* ggamma = wants_grad(gn) ? gn->grad_buffer().data() : nullptr;
    double* gbeta = wants_grad(bn) ? bn->grad_buffer().data() : nullptr;
    double* gx = wants_grad(xn) ? xn->grad_buffer().data() : nullptr;
    for (int64_t n = 0; n < batch; ++n) {
      for (int64_t g = 0; g < groups; ++g) {
        const int64_t base = (n * c + g * per) * hw;
        double sum_d = 0.0, sum_dx = 0.0;
        for (int64_t ch = 0; ch < per; ++ch) {
          const int64_t cc = g * per + ch;
          for (int64_t i = 0; i < hw; ++i) {
            const int64_t idx = base + ch * hw + i;
            const double xh = (*xhat)[static_cast<std::size_t>(idx)];
            if (ggamma) ggamma[cc] += go[idx] * xh;
            if (gbeta) gbeta[cc] += go[idx];
            const double d = go[idx] * ga[cc];
            sum_d += d;
            sum_dx += d * xh;
          }
        }
        if (!gx) continue;
        const double is = (*inv_std)[static_cast<std::size_t>(n * groups + g)];
        const double mean_d = sum_d / static_cast<double>(count);
        const double mean_dx = sum_dx / static_cast<double>(count);
        for (int64_t ch = 0; ch < per; ++ch) {
          const int64_t cc = g * per + ch;
          for (int64_t i = 0; i < hw; ++i) {
            const int64_t idx = base + ch * hw + i;
            const double xh = (*xhat)[static_cast<std::size_t>(idx)];
            gx[idx] += is * (go[idx] * ga[cc] - mean_d - xh * mean_dx);
          }
        }
      }
    }
  });
}

Var channel_affine(const Var& x, const Var& scale_v, const Var& shift) {
  require_rank(x, 4, "channel_affine");
  const int64_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t idx = (n * c + ch) * hw + i;
        out[idx] = scale_v.value()[ch] * x.value()[idx] + shift.value()[ch];
      }
  return make_op_result(std::move(out), {x, scale_v, shift}, [=](Node& self) {
    const auto& xn = self.inputs[0];
    const auto& sn = self.inputs[1];
    const auto& tn = self.inputs[2];
    double* gx = wants_grad(xn) ? xn->grad_buffer().data() : nullptr;
    double* gs = wants_grad(sn) ? sn->grad_buffer().data() : nullptr;
    double* gt = wants_grad(tn) ? tn->grad_buffer().data() : nullptr;
    for (int64_t n = 0; n < batch; ++n)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) {
          const int64_t idx = (n * c + ch) * hw + i;
          const double g = self.grad[idx];
          if (gx) gx[idx] += g * sn->value[ch];
          if (gs) gs[ch] += g * xn->value[idx];
          if (gt) gt[ch] += g;
        }
  });
}

Var relu(const Var& x) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  return make_op_result(std::move(out), {x}, [](Node& self) {
    const auto& xn = self.inputs[0];
    double* gx = xn->grad_buffer().data();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (xn->value[i] > 0.0) gx[i] += self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double v = x.value()[i];
    // Branches keep exp() from overflowing for large |v|.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_op_result(std::move(out), {x}, [](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      const double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_inplace(b.value());
  return make_op_result(std::move(out), {a, b}, [](Node& self) {
    for (const auto& in : self.inputs)
      if (wants_grad(in)) in->grad_buffer().add_inplace(self.grad);
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw UsageError("add_n of zero terms");
  Tensor out = terms.front().value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same_shape(terms[0], terms[i], "add_n");
    out.add_inplace(terms[i].value());
  }
  return make_op_result(std::move(out), terms, [](Node& self) {
    for (const auto& in : self.inputs)
      if (wants_grad(in)) in->grad_buffer().add_inplace(self.grad);
  });
}

Var scale(const Var& x, double factor) {
  Tensor out(x.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  return make_op_result(std::move(out), {x}, [factor](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t i = 0; i < self.grad.numel(); ++i) gx[i] += self.grad[i] * factor;
  });
}

Var mul_spatial_gate(const Var& x, const Var& gate) {
  require_rank(x, 4, "mul_spatial_gate");
  require_rank(gate, 4, "mul_spatial_gate");
  const int64_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gate.dim(0) != batch || gate.dim(1) != 1 || gate.dim(2) != x.dim(2) || gate.dim(3) != x.dim(3)) {
    throw UsageError("mul_spatial_gate: gate " + shape_to_string(gate.shape()) + " vs input " +
                     shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t idx = (n * c + ch) * hw + i;
        out[idx] = x.value()[idx] * gate.value()[n * hw + i];
      }
  return make_op_result(std::move(out), {x, gate}, [=](Node& self) {
    const auto& xn = self.inputs[0];
    const auto& an = self.inputs[1];
    double* gx = wants_grad(xn) ? xn->grad_buffer().data() : nullptr;
    double* ga = wants_grad(an) ? an->grad_buffer().data() : nullptr;
    for (int64_t n = 0; n < batch; ++n)
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) {
          const int64_t idx = (n * c + ch) * hw + i;
          if (gx) gx[idx] += self.grad[idx] * an->value[n * hw + i];
          if (ga) ga[n * hw + i] += self.grad[idx] * xn->value[idx];
        }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const Var& weights, std::span<const uint8_t> mask) {
  if (terms.empty()) throw UsageError("weighted_sum of zero terms");
  require_rank(weights, 2, "weighted_sum");
  const int64_t m = static_cast<int64_t>(terms.size());
  const int64_t batch = terms[0].dim(0);
  if (weights.dim(0) != batch || weights.dim(1) != m || static_cast<int64_t>(mask.size()) != batch * m) {
    throw UsageError("weighted_sum: weights " + shape_to_string(weights.shape()) + " / mask size " +
                     std::to_string(mask.size()) + " do not match " + std::to_string(m) + " terms");
  }
  for (const Var& t : terms) require_same_shape(terms[0], t, "weighted_sum");
  const int64_t per = terms[0].value().numel() / batch;
  Tensor out(terms[0].shape(), 0.0);
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t i = 0; i < m; ++i) {
      if (!mask[static_cast<std::size_t>(n * m + i)]) continue;
      const double wv = weights.value()[n * m + i];
      const double* src = terms[static_cast<std::size_t>(i)].value().data() + n * per;
      double* dst = out.data() + n * per;
      for (int64_t j = 0; j < per; ++j) dst[j] += wv * src[j];
    }
  std::vector<uint8_t> mask_copy(mask.begin(), mask.end());
  std::vector<Var> inputs = terms;
  inputs.push_back(weights);
  return make_op_result(std::move(out), std::move(inputs), [=](Node& self) {
    const auto& wn = self.inputs[static_cast<std::size_t>(m)];
    double* gw = wants_grad(wn) ? wn->grad_buffer().data() : nullptr;
    for (int64_t i = 0; i < m; ++i) {
      const auto& tn = self.inputs[static_cast<std::size_t>(i)];
      double* gt = wants_grad(tn) ? tn->grad_buffer().data() : nullptr;
      for (int64_t n = 0; n < batch; ++n) {
        if (!mask_copy[static_cast<std::size_t>(n * m + i)]) continue;
        const double wv = wn->value[n * m + i];
        const double* g = self.grad.data() + n * per;
        const double* tv = tn->value.data() + n * per;
        double dot = 0.0;
        for (int64_t j = 0; j < per; ++j) {
          if (gt) gt[n * per + j] += wv * g[j];
          dot += g[j] * tv[j];
        }
        if (gw) gw[n * m + i] += dot;
      }
    }
  });
}

Var resize_bilinear(const Var& x, int64_t height, int64_t width) {
  require_rank(x, 4, "resize_bilinear");
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (height == h && width == w) return x;
  auto ty = std::make_shared<std::vector<BilinearTap>>(bilinear_taps(h, height));
  auto tx = std::make_shared<std::vector<BilinearTap>>(bilinear_taps(w, width));
  Tensor out({batch, c, height, width});
  for (int64_t nc = 0; nc < batch * c; ++nc) {
    const double* ip = x.value().data() + nc * h * w;
    double* op = out.data() + nc * height * width;
    for (int64_t y = 0; y < height; ++y) {
      const BilinearTap& a = (*ty)[static_cast<std::size_t>(y)];
      for (int64_t xx = 0; xx < width; ++xx) {
        const BilinearTap& b = (*tx)[static_cast<std::size_t>(xx)];
        op[y * width + xx] = a.w0 * (b.w0 * ip[a.i0 * w + b.i0] + b.w1 * ip[a.i0 * w + b.i1]) +
                             a.w1 * (b.w0 * ip[a.i1 * w + b.i0] + b.w1 * ip[a.i1 * w + b.i1]);
      }
    }
  }
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t nc = 0; nc < batch * c; ++nc) {
      double* gp = gx + nc * h * w;
      const double* go = self.grad.data() + nc * height * width;
      for (int64_t y = 0; y < height; ++y) {
        const BilinearTap& a = (*ty)[static_cast<std::size_t>(y)];
        for (int64_t xx = 0; xx < width; ++xx) {
          const BilinearTap& b = (*tx)[static_cast<std::size_t>(xx)];
          const double g = go[y * width + xx];
          gp[a.i0 * w + b.i0] += g * a.w0 * b.w0;
          gp[a.i0 * w + b.i1] += g * a.w0 * b.w1;
          gp[a.i1 * w + b.i0] += g * a.w1 * b.w0;
          gp[a.i1 * w + b.i1] += g * a.w1 * b.w1;
        }
      }
    }
  });
}

Var adaptive_avg_pool(const Var& x, int bins) {
  require_rank(x, 4, "adaptive_avg_pool");
  if (bins < 1) throw UsageError("adaptive_avg_pool: bins must be >= 1");
  const int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t bh = std::min<int64_t>(bins, h), bw = std::min<int64_t>(bins, w);
  auto ranges = [](int64_t in, int64_t out) {
    std::vector<std::pair<int64_t, int64_t>> r(static_cast<std::size_t>(out));
    for (int64_t i = 0; i < out; ++i) r[static_cast<std::size_t>(i)] = {(i * in) / out, ((i + 1) * in + out - 1) / out};
    return r;
  };
  auto ry = ranges(h, bh), rx = ranges(w, bw);
  Tensor out({batch, c, bh, bw});
  for (int64_t nc = 0; nc < batch * c; ++nc) {
    const double* ip = x.value().data() + nc * h * w;
    for (int64_t i = 0; i < bh; ++i)
      for (int64_t j = 0; j < bw; ++j) {
        const auto [y0, y1] = ry[static_cast<std::size_t>(i)];
        const auto [x0, x1] = rx[static_cast<std::size_t>(j)];
        double acc = 0.0;
        for (int64_t y = y0; y < y1; ++y)
          for (int64_t xx = x0; xx < x1; ++xx) acc += ip[y * w + xx];
        out[(nc * bh + i) * bw + j] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
  }
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t nc = 0; nc < batch * c; ++nc)
      for (int64_t i = 0; i < bh; ++i)
        for (int64_t j = 0; j < bw; ++j) {
          const auto [y0, y1] = ry[static_cast<std::size_t>(i)];
          const auto [x0, x1] = rx[static_cast<std::size_t>(j)];
          const double g = self.grad[(nc * bh + i) * bw + j] / static_cast<double>((y1 - y0) * (x1 - x0));
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t xx = x0; xx < x1; ++xx) gx[nc * h * w + y * w + xx] += g;
        }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int64_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({batch, c});
  for (int64_t nc = 0; nc < batch * c; ++nc) {
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += x.value()[nc * hw + i];
    out[nc] = acc / static_cast<double>(hw);
  }
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t nc = 0; nc < batch * c; ++nc) {
      const double g = self.grad[nc] / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) gx[nc * hw + i] += g;
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int64_t batch = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (weight.dim(1) != in) {
    throw UsageError("linear: weight " + shape_to_string(weight.shape()) + " vs input " + shape_to_string(x.shape()));
  }
  Tensor out({batch, outf});
  for (int64_t n = 0; n < batch; ++n)
    for (int64_t o = 0; o < outf; ++o) {
      double acc = bias.defined() ? bias.value()[o] : 0.0;
      for (int64_t i = 0; i < in; ++i) acc += weight.value()[o * in + i] * x.value()[n * in + i];
      out[n * outf + o] = acc;
    }
  return make_op_result(std::move(out), {x, weight, bias}, [=](Node& self) {
    const auto& xn = self.inputs[0];
    const auto& wn = self.inputs[1];
    const auto& bn = self.inputs[2];
    double* gx = wants_grad(xn) ? xn->grad_buffer().data() : nullptr;
    double* gw = wants_grad(wn) ? wn->grad_buffer().data() : nullptr;
    double* gb = wants_grad(bn) ? bn->grad_buffer().data() : nullptr;
    for (int64_t n = 0; n < batch; ++n)
      for (int64_t o = 0; o < outf; ++o) {
        const double g = self.grad[n * outf + o];
        if (gb) gb[o] += g;
        for (int64_t i = 0; i < in; ++i) {
          if (gw) gw[o * in + i] += g * xn->value[n * in + i];
          if (gx) gx[n * in + i] += g * wn->value[o * in + i];
        }
      }
  });
}

Var softmax(const Var& x) {
  require_rank(x, 2, "softmax");
  const int64_t batch = x.dim(0), m = x.dim(1);
  Tensor out(x.shape());
  for (int64_t n = 0; n < batch; ++n) {
    double mx = x.value()[n * m];
    for (int64_t i = 1; i < m; ++i) mx = std::max(mx, x.value()[n * m + i]);
    double z = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      out[n * m + i] = std::exp(x.value()[n * m + i] - mx);
      z += out[n * m + i];
    }
    for (int64_t i = 0; i < m; ++i) out[n * m + i] /= z;
  }
  return make_op_result(std::move(out), {x}, [=](Node& self) {
    double* gx = self.inputs[0]->grad_buffer().data();
    for (int64_t n = 0; n < batch; ++n) {
      double dot = 0.0;
      for (int64_t i = 0; i < m; ++i) dot += self.grad[n * m + i] * self.value[n * m + i];
      for (int64_t i = 0; i < m; ++i) gx[n * m + i] += self.value[n * m + i] * (self.grad[n * m + i] - dot);
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_channels of zero parts");
  const int64_t batch = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int64_t total = 0;
  std::vector<int64_t> offsets;
  for (const Var& p : parts) {
    require_rank(p, 4, "concat_channels");
    if (p.dim(0) != batch || p.dim(2) != h || p.dim(3) != w) {
      throw UsageError("concat_channels: part " + shape_to_string(p.shape()) + " vs " + shape_to_string(parts[0].shape()));
    }
    offsets.push_back(total);
    total += p.dim(1);
  }
  const int64_t hw = h * w;
  Tensor out({batch, total, h, w});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const int64_t c = parts[k].dim(1);
    for (int64_t n = 0; n < batch; ++n)
      std::copy_n(parts[k].value().data() + n * c * hw, c * hw, out.data() + (n * total + offsets[k]) * hw);
  }
  return make_op_result(std::move(out), parts, [=](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const auto& in = self.inputs[k];
      if (!wants_grad(in)) continue;
      const int64_t c = in->value.dim(1);
      double* g = in->grad_buffer().data();
      for (int64_t n = 0; n < batch; ++n) {
        const double* src = self.grad.data() + (n * total + offsets[k]) * hw;
        for (int64_t i = 0; i < c * hw; ++i) g[n * c * hw + i] += src[i];
      }
    }
  });
}

Var sum_scalars(const std::vector<Var>& terms) {
  if (terms.empty()) throw UsageError("sum_scalars of zero terms");
  double acc = 0.0;
  for (const Var& t : terms)
    for (double v : t.value().values()) acc += v;
  return make_op_result(Tensor({1}, acc), terms, [](Node& self) {
    const double g = self.grad[0];
    for (const auto& in : self.inputs) {
      if (!wants_grad(in)) continue;
      Tensor& gi = in->grad_buffer();
      for (int64_t i = 0; i < gi.numel(); ++i) gi[i] += g;
    }
  });
}

}  // namespace dfi::ops
