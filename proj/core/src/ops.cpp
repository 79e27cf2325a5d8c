// SPDX-License-Identifier: Apache-2.0
#include "cen/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cen/error.hpp"

namespace cen {

namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Gradient buffer of an op input, or null if it does not take gradients.
template <typename T>
T* grad_of(Impl<T>& in) {
  return in.requires_grad ? in.grad_buffer() : nullptr;
}

template <typename T>
Impl<T>& arg(const Impl<T>& out, std::size_t i) {
  return *out.node->inputs[i];
}

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw DimensionError(std::string(what) + " must be rank 4 [N,C,H,W], got " + shape_str(s));
  }
}

enum class Broadcast { same, scalar, channel };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (shape_numel(b) == 1) return Broadcast::scalar;
  if (a.size() == 4 && b.size() == 1 && b[0] == a[1]) return Broadcast::channel;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                       shape_str(a));
}

// Index into b for element i of a.
inline std::size_t bidx(Broadcast k, std::size_t i, std::size_t channels, std::size_t plane) {
  switch (k) {
    case Broadcast::same:
      return i;
    case Broadcast::scalar:
      return 0;
    case Broadcast::channel:
      return (i / plane) % channels;
  }
  return 0;
}

// Output columns [lo, hi) whose input column ox·stride + k − pad is inside
// [0, w).
inline void valid_range(std::size_t k, std::size_t w, std::size_t stride, std::size_t pad,
                        std::size_t wo, std::size_t& lo, std::size_t& hi) {
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const std::size_t limit = w + pad - k;  // ox·stride < limit
  hi = std::min(wo, (limit + stride - 1) / stride);
  if (lo > hi) lo = hi;
}

// im2col for one image: cols is [Cin*kh*kw, Ho*Wo].
template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            T* cols) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        T* dst = cols + row * ho * wo;
        std::size_t lo, hi;
        valid_range(kx, w, stride, pad, wo, lo, hi);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          T* d = dst + oy * wo;
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(d, d + wo, T(0));
            continue;
          }
          const T* src = x + static_cast<std::ptrdiff_t>((c * h + static_cast<std::size_t>(iy)) * w) +
                         (static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad));
          std::fill(d, d + lo, T(0));
          for (std::size_t ox = lo; ox < hi; ++ox) d[ox] = src[ox * stride];
          std::fill(d + hi, d + wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho,
                std::size_t wo, T* dx) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++row) {
        const T* src = cols + row * ho * wo;
        std::size_t lo, hi;
        valid_range(kx, w, stride, pad, wo, lo, hi);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* d = dx + static_cast<std::ptrdiff_t>((c * h + static_cast<std::size_t>(iy)) * w) +
                   (static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad));
          const T* s = src + oy * wo;
          for (std::size_t ox = lo; ox < hi; ++ox) d[ox * stride] += s[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dArgs args) {
  require_rank4(input.shape(), "conv2d input");
  require_rank4(weight.shape(), "conv2d weight");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv2d: axis 1 (input channels) mismatch: input has " +
                         std::to_string(cin) + ", weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (args.stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: axis 0 (output channels) mismatch: bias shape " +
                         shape_str(bias.shape()) + ", weight has " + std::to_string(cout));
  }
  if (h + 2 * args.padding < kh) {
    throw DimensionError("conv2d: axis 2 (height) " + std::to_string(h) +
                         " too small for kernel " + std::to_string(kh));
  }
  if (w + 2 * args.padding < kw) {
    throw DimensionError("conv2d: axis 3 (width) " + std::to_string(w) +
                         " too small for kernel " + std::to_string(kw));
  }
  const std::size_t ho = (h + 2 * args.padding - kh) / args.stride + 1;
  const std::size_t wo = (w + 2 * args.padding - kw) / args.stride + 1;
  const std::size_t k = cin * kh * kw, p = ho * wo;

  // Column buffers are kept for the weight gradient.
  auto cols = std::make_shared<std::vector<T>>(n * k * p);
  std::vector<T> out(n * cout * p);
  ConstMapMat<T> wm(weight.values().data(), cout, k);
  for (std::size_t b = 0; b < n; ++b) {
    T* cb = cols->data() + b * k * p;
    im2col(input.values().data() + b * cin * h * w, cin, h, w, kh, kw, args.stride,
           args.padding, ho, wo, cb);
    MapMat<T> om(out.data() + b * cout * p, cout, p);
    om.noalias() = wm * ConstMapMat<T>(cb, k, p);
    if (bias.defined()) {
      for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bias.values()[o];
    }
  }

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  const Conv2dArgs a = args;
  return make_result<T>(
      "conv2d", {n, cout, ho, wo}, std::move(out), std::move(inputs),
      [=](const Impl<T>& res) {
        auto& x = arg(res, 0);
        auto& wt = arg(res, 1);
        const T* gy = res.grad.data();
        if (T* gw = grad_of(wt)) {
          MapMat<T> gwm(gw, cout, k);
          for (std::size_t b = 0; b < n; ++b) {
            gwm.noalias() += ConstMapMat<T>(gy + b * cout * p, cout, p) *
                             ConstMapMat<T>(cols->data() + b * k * p, k, p).transpose();
          }
        }
        if (has_bias) {
          if (T* gb = grad_of(arg(res, 2))) {
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t o = 0; o < cout; ++o) {
                const T* row = gy + (b * cout + o) * p;
                T s = 0;
                for (std::size_t i = 0; i < p; ++i) s += row[i];
                gb[o] += s;
              }
          }
        }
        if (T* gx = grad_of(x)) {
          ConstMapMat<T> wmat(wt.values.data(), cout, k);
          RowMat<T> gcols(k, p);
          for (std::size_t b = 0; b < n; ++b) {
            gcols.noalias() = wmat.transpose() * ConstMapMat<T>(gy + b * cout * p, cout, p);
            col2im_add(gcols.data(), cin, h, w, kh, kw, a.stride, a.padding, ho, wo,
                       gx + b * cin * h * w);
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "add");
  const std::size_t channels = a.rank() == 4 ? a.dim(1) : 1;
  const std::size_t plane = a.rank() == 4 ? a.dim(2) * a.dim(3) : 1;
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[bidx(kind, i, channels, plane)];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [=](const Impl<T>& res) {
    const T* gy = res.grad.data();
    if (T* ga = grad_of(arg(res, 0)))
      for (std::size_t i = 0; i < res.values.size(); ++i) ga[i] += gy[i];
    if (T* gb = grad_of(arg(res, 1)))
      for (std::size_t i = 0; i < res.values.size(); ++i)
        gb[bidx(kind, i, channels, plane)] += gy[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "mul");
  const std::size_t channels = a.rank() == 4 ? a.dim(1) : 1;
  const std::size_t plane = a.rank() == 4 ? a.dim(2) * a.dim(3) : 1;
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[bidx(kind, i, channels, plane)];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [=](const Impl<T>& res) {
    const T* gy = res.grad.data();
    auto& ia = arg(res, 0);
    auto& ib = arg(res, 1);
    if (T* ga = grad_of(ia))
      for (std::size_t i = 0; i < res.values.size(); ++i)
        ga[i] += gy[i] * ib.values[bidx(kind, i, channels, plane)];
    if (T* gb = grad_of(ib))
      for (std::size_t i = 0; i < res.values.size(); ++i)
        gb[bidx(kind, i, channels, plane)] += gy[i] * ia.values[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", a.shape(), std::move(out), {a}, [=](const Impl<T>& res) {
    if (T* ga = grad_of(arg(res, 0)))
      for (std::size_t i = 0; i < res.values.size(); ++i) ga[i] += factor * res.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  // NaN passes through so that divergence stays visible downstream.
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = a.values()[i];
    out[i] = (v > T(0) || std::isnan(v)) ? v : T(0);
  }
  return make_result<T>("relu", a.shape(), std::move(out), {a}, [](const Impl<T>& res) {
    auto& in = arg(res, 0);
    if (T* ga = grad_of(in))
      for (std::size_t i = 0; i < res.values.size(); ++i)
        if (in.values[i] > T(0)) ga[i] += res.grad[i];
  });
}

template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& s, const Tensor<T>& t) {
  require_rank4(x.shape(), "scale_shift input");
  const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (s.shape() != Shape{c}) {
    throw DimensionError("scale_shift: axis 1 (channels) is " + std::to_string(c) +
                         " but scale has shape " + shape_str(s.shape()));
  }
  if (t.shape() != Shape{c}) {
    throw DimensionError("scale_shift: axis 1 (channels) is " + std::to_string(c) +
                         " but shift has shape " + shape_str(t.shape()));
  }
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    out[i] = s.values()[ch] * x.values()[i] + t.values()[ch];
  }
  return make_result<T>(
      "scale_shift", x.shape(), std::move(out), {x, s, t}, [=](const Impl<T>& res) {
        auto& ix = arg(res, 0);
        auto& is = arg(res, 1);
        T* gx = grad_of(ix);
        T* gs = grad_of(is);
        T* gt = grad_of(arg(res, 2));
        for (std::size_t i = 0; i < res.values.size(); ++i) {
          const std::size_t ch = (i / plane) % c;
          const T g = res.grad[i];
          if (gx) gx[i] += is.values[ch] * g;
          if (gs) gs[ch] += ix.values[i] * g;
          if (gt) gt[ch] += g;
        }
      });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return make_result<T>("sum_all", {1}, {s}, {a}, [](const Impl<T>& res) {
    if (T* ga = grad_of(arg(res, 0))) {
      const std::size_t n = arg(res, 0).values.size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += res.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>("mean_all", {1}, {s * inv}, {a}, [inv](const Impl<T>& res) {
    if (T* ga = grad_of(arg(res, 0))) {
      const std::size_t n = arg(res, 0).values.size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += res.grad[0] * inv;
    }
  });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, std::size_t factor) {
  require_rank4(a.shape(), "upsample_nearest input");
  if (factor == 0) throw DimensionError("upsample_nearest: factor must be positive");
  const std::size_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<T> out(n * c * ho * wo);
  for (std::size_t nc = 0; nc < n * c; ++nc)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        out[(nc * ho + y) * wo + x] = a.values()[(nc * h + y / factor) * w + x / factor];
  return make_result<T>(
      "upsample_nearest", {n, c, ho, wo}, std::move(out), {a}, [=](const Impl<T>& res) {
        if (T* ga = grad_of(arg(res, 0)))
          for (std::size_t nc = 0; nc < n * c; ++nc)
            for (std::size_t y = 0; y < ho; ++y)
              for (std::size_t x = 0; x < wo; ++x)
                ga[(nc * h + y / factor) * w + x / factor] += res.grad[(nc * ho + y) * wo + x];
      });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank4(p.shape(), "concat_channels input");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      throw DimensionError("concat_channels: shape " + shape_str(p.shape()) +
                           " incompatible with " + shape_str(parts[0].shape()));
    }
    offsets.push_back(total);
    total += p.dim(1);
  }
  const std::size_t plane = h * w;
  std::vector<T> out(n * total * plane);
  std::vector<std::size_t> widths;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t ck = parts[k].dim(1);
    widths.push_back(ck);
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(parts[k].values().data() + b * ck * plane, ck * plane,
                  out.data() + (b * total + offsets[k]) * plane);
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>(
      "concat_channels", {n, total, h, w}, std::move(out), std::move(inputs),
      [=](const Impl<T>& res) {
        for (std::size_t k = 0; k < widths.size(); ++k) {
          T* g = grad_of(arg(res, k));
          if (!g) continue;
          for (std::size_t b = 0; b < n; ++b) {
            const T* src = res.grad.data() + (b * total + offsets[k]) * plane;
            T* dst = g + b * widths[k] * plane;
            for (std::size_t i = 0; i < widths[k] * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 1) throw DimensionError("softmax expects a 1-D tensor");
  const std::size_t m = logits.numel();
  const T mx = *std::max_element(logits.values().begin(), logits.values().end());
  std::vector<T> out(m);
  T z = 0;
  for (std::size_t i = 0; i < m; ++i) z += out[i] = std::exp(logits.values()[i] - mx);
  for (auto& v : out) v /= z;
  return make_result<T>("softmax", {m}, out, {logits}, [out, m](const Impl<T>& res) {
    if (T* g = grad_of(arg(res, 0))) {
      T dot = 0;
      for (std::size_t i = 0; i < m; ++i) dot += res.grad[i] * out[i];
      for (std::size_t i = 0; i < m; ++i) g[i] += out[i] * (res.grad[i] - dot);
    }
  });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& a, std::size_t i) {
  if (i >= a.numel()) {
    throw DimensionError("pick: index " + std::to_string(i) + " out of range for shape " +
                         shape_str(a.shape()));
  }
  return make_result<T>("pick", {1}, {a.values()[i]}, {a}, [i](const Impl<T>& res) {
    if (T* g = grad_of(arg(res, 0))) g[i] += res.grad[0];
  });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const std::size_t n = pred.numel();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.values()[i] - target.values()[i];
    s += d * d;
  }
  const T inv = T(1) / static_cast<T>(n);
  return make_result<T>("mse_loss", {1}, {s * inv}, {pred, target}, [=](const Impl<T>& res) {
    auto& p = arg(res, 0);
    auto& t = arg(res, 1);
    const T g0 = res.grad[0] * T(2) * inv;
    T* gp = grad_of(p);
    T* gt = grad_of(t);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = p.values[i] - t.values[i];
      if (gp) gp[i] += g0 * d;
      if (gt) gt[i] -= g0 * d;
    }
  });
}

template <typename T>
Tensor<T> cross_entropy_pixelwise(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  require_rank4(logits.shape(), "cross_entropy logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const std::size_t plane = h * w;
  if (labels.size() != n * plane) {
    throw DimensionError("cross_entropy: expected " + std::to_string(n * plane) +
                         " labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      const std::size_t b = i / plane, y = (i % plane) / w, x = i % w;
      throw ValidationError("cross_entropy: label " + std::to_string(labels[i]) +
                            " outside [0," + std::to_string(c) + ") at (n=" + std::to_string(b) +
                            ", y=" + std::to_string(y) + ", x=" + std::to_string(x) + ")");
    }
  }
  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(logits.numel());
  T nll = 0;
  const T* lv = logits.values().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t px = 0; px < plane; ++px) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, lv[(b * c + k) * plane + px]);
      T z = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const T e = std::exp(lv[(b * c + k) * plane + px] - mx);
        (*probs)[(b * c + k) * plane + px] = e;
        z += e;
      }
      for (std::size_t k = 0; k < c; ++k) (*probs)[(b * c + k) * plane + px] /= z;
      const std::size_t y = static_cast<std::size_t>(labels[b * plane + px]);
      nll -= lv[(b * c + y) * plane + px] - mx - std::log(z);
    }
  }
  const T inv = T(1) / static_cast<T>(n * plane);
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  return make_result<T>(
      "cross_entropy", {1}, {nll * inv}, {logits}, [=](const Impl<T>& res) {
        T* g = grad_of(arg(res, 0));
        if (!g) return;
        const T g0 = res.grad[0] * inv;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t k = 0; k < c; ++k)
            for (std::size_t px = 0; px < plane; ++px) {
              const std::size_t i = (b * c + k) * plane + px;
              const T onehot = static_cast<std::size_t>(lab[b * plane + px]) == k ? T(1) : T(0);
              g[i] += g0 * ((*probs)[i] - onehot);
            }
      });
}

template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& logits) {
  require_rank4(logits.shape(), "argmax_channels input");
  const std::size_t n = logits.dim(0), c = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  std::vector<std::int32_t> out(n * plane);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t px = 0; px < plane; ++px) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (logits.values()[(b * c + k) * plane + px] > logits.values()[(b * c + best) * plane + px])
          best = k;
      out[b * plane + px] = static_cast<std::int32_t>(best);
    }
  return out;
}

#define CEN_INSTANTIATE_OPS(T)                                                                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dArgs); \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> scale_shift(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> sum_all(const Tensor<T>&);                                                \
  template Tensor<T> mean_all(const Tensor<T>&);                                               \
  template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                              \
  template Tensor<T> softmax(const Tensor<T>&);                                                \
  template Tensor<T> pick(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> cross_entropy_pixelwise(const Tensor<T>&, std::span<const std::int32_t>); \
  template std::vector<std::int32_t> argmax_channels(const Tensor<T>&);

CEN_INSTANTIATE_OPS(float)
CEN_INSTANTIATE_OPS(double)

#undef CEN_INSTANTIATE_OPS

}  // namespace cen
