#include "fusionnet/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

namespace fusionnet {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

std::string describe(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + a.to_string() + " and " + b.to_string();
}

void require_bias(const Shape& bias, std::int64_t channels, const char* op) {
  if (bias != Shape{1, channels, 1, 1}) {
    throw std::invalid_argument(std::string(op) + ": bias shape " + bias.to_string() + " does not match " +
                                std::to_string(channels) + " output channels");
  }
}

// cols[(c*k + i)*k + j][y*W + x] = input[c][y + i - pad][x + j - pad], zero outside.
template <typename T>
void im2col(const T* input, std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t k,
            T* cols) {
  const std::int64_t pad = k / 2;
  const std::int64_t plane = height * width;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* src = input + c * plane;
    for (std::int64_t i = 0; i < k; ++i) {
      for (std::int64_t j = 0; j < k; ++j) {
        T* row = cols + ((c * k + i) * k + j) * plane;
        for (std::int64_t y = 0; y < height; ++y) {
          const std::int64_t sy = y + i - pad;
          T* dst = row + y * width;
          if (sy < 0 || sy >= height) {
            std::fill(dst, dst + width, T{0});
            continue;
          }
          const T* src_row = src + sy * width;
          for (std::int64_t x = 0; x < width; ++x) {
            const std::int64_t sx = x + j - pad;
            dst[x] = (sx >= 0 && sx < width) ? src_row[sx] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t k,
                T* output) {
  const std::int64_t pad = k / 2;
  const std::int64_t plane = height * width;
  for (std::int64_t c = 0; c < channels; ++c) {
    T* dst = output + c * plane;
    for (std::int64_t i = 0; i < k; ++i) {
      for (std::int64_t j = 0; j < k; ++j) {
        const T* row = cols + ((c * k + i) * k + j) * plane;
        for (std::int64_t y = 0; y < height; ++y) {
          const std::int64_t sy = y + i - pad;
          if (sy < 0 || sy >= height) continue;
          const T* src = row + y * width;
          T* dst_row = dst + sy * width;
          for (std::int64_t x = 0; x < width; ++x) {
            const std::int64_t sx = x + j - pad;
            if (sx >= 0 && sx < width) dst_row[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w || ws.h % 2 == 0) {
    throw std::invalid_argument(describe("conv2d", xs, ws) +
                                " (expected weight (C_out, C_in, k, k) with k odd and C_in = input channels)");
  }
  require_bias(bias.shape(), ws.n, "conv2d");

  const std::int64_t k = ws.h;
  const std::int64_t plane = xs.h * xs.w;
  const std::int64_t patch = xs.c * k * k;
  Tensor<T> out({xs.n, ws.n, xs.h, xs.w});
  std::vector<T> cols(static_cast<std::size_t>(patch * plane));
  ConstMatrixMap<T> wm(weight.value().data().data(), ws.n, patch);
  const auto& b = bias.value();
  for (std::int64_t n = 0; n < xs.n; ++n) {
    im2col(input.value().data().data() + n * xs.c * plane, xs.c, xs.h, xs.w, k, cols.data());
    MatrixMap<T> om(out.data().data() + n * ws.n * plane, ws.n, plane);
    om.noalias() = wm * ConstMatrixMap<T>(cols.data(), patch, plane);
    for (std::int64_t o = 0; o < ws.n; ++o) om.row(o).array() += b[static_cast<std::size_t>(o)];
  }

  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return detail::make_result<T>(std::move(out), {&input, &weight, &bias}, [xn, wn, bn, xs, ws, k](Node<T>& self) {
    const std::int64_t plane = xs.h * xs.w;
    const std::int64_t patch = xs.c * k * k;
    std::vector<T> cols(static_cast<std::size_t>(patch * plane));
    ConstMatrixMap<T> wm(wn->value.data().data(), ws.n, patch);
    for (std::int64_t n = 0; n < xs.n; ++n) {
      ConstMatrixMap<T> dy(self.grad.data().data() + n * ws.n * plane, ws.n, plane);
      if (bn->requires_grad) {
        auto& db = bn->grad_buffer();
        for (std::int64_t o = 0; o < ws.n; ++o) db[static_cast<std::size_t>(o)] += dy.row(o).sum();
      }
      if (wn->requires_grad) {
        im2col(xn->value.data().data() + n * xs.c * plane, xs.c, xs.h, xs.w, k, cols.data());
        MatrixMap<T> dw(wn->grad_buffer().data().data(), ws.n, patch);
        dw.noalias() += dy * ConstMatrixMap<T>(cols.data(), patch, plane).transpose();
      }
      if (xn->requires_grad) {
        MatrixMap<T> dcols(cols.data(), patch, plane);
        dcols.noalias() = wm.transpose() * dy;
        col2im_add(cols.data(), xs.c, xs.h, xs.w, k, xn->grad_buffer().data().data() + n * xs.c * plane);
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride,
                        std::optional<std::pair<std::int64_t, std::int64_t>> output_hw) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  if (stride != 2) {
    throw std::invalid_argument("conv_transpose2d: only stride 2 is supported, got " + std::to_string(stride));
  }
  if (ws.n != xs.c || ws.h != 2 || ws.w != 2) {
    throw std::invalid_argument(describe("conv_transpose2d", xs, ws) +
                                " (expected weight (C_in, C_out, 2, 2) with C_in = input channels)");
  }
  if (output_hw && (output_hw->first != 2 * xs.h || output_hw->second != 2 * xs.w)) {
    throw std::invalid_argument("conv_transpose2d: requested output " + std::to_string(output_hw->first) + "x" +
                                std::to_string(output_hw->second) + " is not double the input " +
                                std::to_string(xs.h) + "x" + std::to_string(xs.w));
  }
  const std::int64_t cout = ws.c;
  require_bias(bias.shape(), cout, "conv_transpose2d");

  const std::int64_t plane = xs.h * xs.w;
  const std::int64_t rows = cout * 4;
  Tensor<T> out({xs.n, cout, 2 * xs.h, 2 * xs.w});
  std::vector<T> cols(static_cast<std::size_t>(rows * plane));
  ConstMatrixMap<T> wm(weight.value().data().data(), xs.c, rows);
  const auto& b = bias.value();
  for (std::int64_t n = 0; n < xs.n; ++n) {
    MatrixMap<T> cm(cols.data(), rows, plane);
    cm.noalias() = wm.transpose() * ConstMatrixMap<T>(input.value().data().data() + n * xs.c * plane, xs.c, plane);
    for (std::int64_t o = 0; o < cout; ++o) {
      for (std::int64_t i = 0; i < 2; ++i) {
        for (std::int64_t j = 0; j < 2; ++j) {
          const T* src = cols.data() + ((o * 2 + i) * 2 + j) * plane;
          for (std::int64_t y = 0; y < xs.h; ++y) {
            for (std::int64_t x = 0; x < xs.w; ++x) {
              out.at(n, o, 2 * y + i, 2 * x + j) = src[y * xs.w + x] + b[static_cast<std::size_t>(o)];
            }
          }
        }
      }
    }
  }

  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return detail::make_result<T>(std::move(out), {&input, &weight, &bias}, [xn, wn, bn, xs, cout](Node<T>& self) {
    const std::int64_t plane = xs.h * xs.w;
    const std::int64_t rows = cout * 4;
    std::vector<T> dcols(static_cast<std::size_t>(rows * plane));
    const Tensor<T>& g = self.grad;
    for (std::int64_t n = 0; n < xs.n; ++n) {
      for (std::int64_t o = 0; o < cout; ++o) {
        T bias_sum = 0;
        for (std::int64_t i = 0; i < 2; ++i) {
          for (std::int64_t j = 0; j < 2; ++j) {
            T* dst = dcols.data() + ((o * 2 + i) * 2 + j) * plane;
            for (std::int64_t y = 0; y < xs.h; ++y) {
              for (std::int64_t x = 0; x < xs.w; ++x) {
                const T v = g.at(n, o, 2 * y + i, 2 * x + j);
                dst[y * xs.w + x] = v;
                bias_sum += v;
              }
            }
          }
        }
        if (bn->requires_grad) bn->grad_buffer()[static_cast<std::size_t>(o)] += bias_sum;
      }
      ConstMatrixMap<T> dc(dcols.data(), rows, plane);
      if (wn->requires_grad) {
        MatrixMap<T> dw(wn->grad_buffer().data().data(), xs.c, rows);
        dw.noalias() += ConstMatrixMap<T>(xn->value.data().data() + n * xs.c * plane, xs.c, plane) * dc.transpose();
      }
      if (xn->requires_grad) {
        MatrixMap<T> dx(xn->grad_buffer().data().data() + n * xs.c * plane, xs.c, plane);
        dx.noalias() += ConstMatrixMap<T>(wn->value.data().data(), xs.c, rows) * dc;
      }
    }
  });
}

template <typename T>
Var<T> maxpool2x2(const Var<T>& input) {
  const Shape xs = input.shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: spatial dims must be even, got " + xs.to_string());
  }
  const Shape os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  Tensor<T> out(os);
  std::vector<std::size_t> argmax(out.size());
  const auto& x = input.value();
  std::size_t oi = 0;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t c = 0; c < xs.c; ++c) {
      for (std::int64_t y = 0; y < os.h; ++y) {
        for (std::int64_t xx = 0; xx < os.w; ++xx, ++oi) {
          std::size_t best = x.index(n, c, 2 * y, 2 * xx);
          for (std::int64_t i = 0; i < 2; ++i) {
            for (std::int64_t j = 0; j < 2; ++j) {
              const std::size_t idx = x.index(n, c, 2 * y + i, 2 * xx + j);
              if (x[idx] > x[best]) best = idx;
            }
          }
          argmax[oi] = best;
          out[oi] = x[best];
        }
      }
    }
  }
  auto xn = input.node();
  return detail::make_result<T>(std::move(out), {&input}, [xn, argmax = std::move(argmax)](Node<T>& self) {
    auto& dx = xn->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> out = input.value();
  for (auto& v : out.data()) v = v < T{0} ? T{0} : v;  // NaN passes through
  auto xn = input.node();
  return detail::make_result<T>(std::move(out), {&input}, [xn](Node<T>& self) {
    auto& dx = xn->grad_buffer();
    const auto& x = xn->value;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x[i] > T{0}) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& input) {
  Tensor<T> out = input.value();
  for (auto& v : out.data()) {
    if (v >= T{0}) {
      v = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T{1} + e);
    }
  }
  auto xn = input.node();
  return detail::make_result<T>(std::move(out), {&input}, [xn](Node<T>& self) {
    auto& dx = xn->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = self.value[i];
      dx[i] += self.grad[i] * y * (T{1} - y);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(std::move(out), {&a, &b}, [an, bn](Node<T>& self) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      auto& g = n->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const auto& p = pred.value();
  const auto& t = target.value();
  if (p.empty()) throw std::invalid_argument("mse_loss: empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
  }
  Tensor<T> out({1, 1, 1, 1}, static_cast<T>(sum / static_cast<double>(p.size())));
  auto pn = pred.node();
  auto tn = target.node();
  return detail::make_result<T>(std::move(out), {&pred, &target}, [pn, tn](Node<T>& self) {
    const T scale = T{2} * self.grad[0] / static_cast<T>(pn->value.size());
    if (pn->requires_grad) {
      auto& g = pn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * (pn->value[i] - tn->value[i]);
    }
    if (tn->requires_grad) {
      auto& g = tn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= scale * (pn->value[i] - tn->value[i]);
    }
  });
}

namespace {

template <typename T>
void require_affine(const Shape& xs, const Var<T>& gamma, const Var<T>& beta) {
  const Shape expect{1, xs.c, 1, 1};
  if (gamma.shape() != expect || beta.shape() != expect) {
    throw std::invalid_argument("batch_norm: gamma " + gamma.shape().to_string() + " / beta " +
                                beta.shape().to_string() + " must be " + expect.to_string());
  }
  if (xs.n * xs.h * xs.w == 0) {
    throw std::invalid_argument("batch_norm: zero batch*spatial extent in " + xs.to_string());
  }
}

// y = gamma * xhat + beta with xhat = (x - mean) * inv_std; records the matching backward.
template <typename T>
Var<T> normalize_affine(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, std::vector<double> mean,
                        std::vector<double> inv_std, bool batch_statistics) {
  const Shape xs = input.shape();
  const std::int64_t plane = xs.plane();
  Tensor<T> xhat(xs);
  Tensor<T> out(xs);
  const auto& x = input.value();
  const auto& g = gamma.value();
  const auto& b = beta.value();
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) {
        const T h = static_cast<T>((static_cast<double>(x[base + i]) - mean[c]) * inv_std[c]);
        xhat[base + i] = h;
        out[base + i] = g[c] * h + b[c];
      }
    }
  }
  auto xn = input.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return detail::make_result<T>(
      std::move(out), {&input, &gamma, &beta},
      [xn, gn, bn, xs, xhat = std::move(xhat), inv_std = std::move(inv_std), batch_statistics](Node<T>& self) {
        const std::int64_t plane = xs.plane();
        const double count = static_cast<double>(xs.n * plane);
        const auto& dy = self.grad;
        for (std::int64_t c = 0; c < xs.c; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (std::int64_t n = 0; n < xs.n; ++n) {
            const std::size_t base = dy.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
            }
          }
          if (bn->requires_grad) bn->grad_buffer()[c] += static_cast<T>(sum_dy);
          if (gn->requires_grad) gn->grad_buffer()[c] += static_cast<T>(sum_dy_xhat);
          if (!xn->requires_grad) continue;
          auto& dx = xn->grad_buffer();
          const double scale = static_cast<double>(gn->value[c]) * inv_std[c];
          for (std::int64_t n = 0; n < xs.n; ++n) {
            const std::size_t base = dy.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i) {
              double v = dy[base + i];
              if (batch_statistics) v -= (sum_dy + xhat[base + i] * sum_dy_xhat) / count;
              dx[base + i] += static_cast<T>(scale * v);
            }
          }
        }
      });
}

}  // namespace

template <typename T>
Var<T> batch_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                  BatchNormMode mode, const BatchNormOptions& options) {
  const Shape xs = input.shape();
  require_affine(xs, gamma, beta);
  if (stats.running_mean.shape() != Shape{1, xs.c, 1, 1} || stats.running_var.shape() != Shape{1, xs.c, 1, 1}) {
    throw std::invalid_argument("batch_norm: running statistics do not match " + std::to_string(xs.c) +
                                " channels");
  }
  if (mode == BatchNormMode::eval) return batch_norm_eval(input, gamma, beta, stats, options.epsilon);

  const std::int64_t plane = xs.plane();
  const double count = static_cast<double>(xs.n * plane);
  const auto& x = input.value();
  std::vector<double> mean(static_cast<std::size_t>(xs.c), 0.0);
  std::vector<double> inv_std(static_cast<std::size_t>(xs.c), 0.0);
  for (std::int64_t c = 0; c < xs.c; ++c) {
    double sum = 0.0;
    for (std::int64_t n = 0; n < xs.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) sum += x[base + i];
    }
    const double m = sum / count;
    double sq = 0.0;
    for (std::int64_t n = 0; n < xs.n; ++n) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = x[base + i] - m;
        sq += d * d;
      }
    }
    const double var = sq / count;
    mean[c] = m;
    inv_std[c] = 1.0 / std::sqrt(var + options.epsilon);
    const double unbiased = count > 1 ? var * count / (count - 1) : var;
    stats.running_mean[c] =
        static_cast<T>(options.momentum * stats.running_mean[c] + (1.0 - options.momentum) * m);
    stats.running_var[c] =
        static_cast<T>(options.momentum * stats.running_var[c] + (1.0 - options.momentum) * unbiased);
  }
  return normalize_affine(input, gamma, beta, std::move(mean), std::move(inv_std), true);
}

template <typename T>
Var<T> batch_norm_eval(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                       const BatchNormStats<T>& stats, double epsilon) {
  const Shape xs = input.shape();
  require_affine(xs, gamma, beta);
  std::vector<double> mean(static_cast<std::size_t>(xs.c));
  std::vector<double> inv_std(static_cast<std::size_t>(xs.c));
  for (std::int64_t c = 0; c < xs.c; ++c) {
    mean[c] = stats.running_mean[c];
    inv_std[c] = 1.0 / std::sqrt(static_cast<double>(stats.running_var[c]) + epsilon);
  }
  return normalize_affine(input, gamma, beta, std::move(mean), std::move(inv_std), false);
}

#define FUSIONNET_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int,                          \
                                   std::optional<std::pair<std::int64_t, std::int64_t>>);                     \
  template Var<T> maxpool2x2(const Var<T>&);                                                                  \
  template Var<T> relu(const Var<T>&);                                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&, BatchNormMode,  \
                             const BatchNormOptions&);                                                        \
  template Var<T> batch_norm_eval(const Var<T>&, const Var<T>&, const Var<T>&, const BatchNormStats<T>&, double);

FUSIONNET_INSTANTIATE_OPS(float)
FUSIONNET_INSTANTIATE_OPS(double)

}  // namespace fusionnet
