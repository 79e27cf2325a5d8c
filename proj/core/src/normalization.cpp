// SPDX-License-Identifier: Apache-2.0
#include "cen/normalization.hpp"

#include <cmath>
#include <memory>

#include "cen/error.hpp"

namespace cen {

std::string to_string(NormMode mode) {
  return mode == NormMode::batch ? "batch" : "instance";
}

NormMode parse_norm_mode(const std::string& text) {
  if (text == "batch") return NormMode::batch;
  if (text == "instance") return NormMode::instance;
  throw ConfigError("unknown norm mode '" + text + "' (expected batch or instance)");
}

template <typename T>
NormParams<T> NormParams<T>::make(std::size_t channels, NormMode mode) {
  NormParams p;
  p.gamma = Tensor<T>::parameter({channels}, std::vector<T>(channels, T(1)));
  p.beta = Tensor<T>::parameter({channels}, std::vector<T>(channels, T(0)));
  p.running_mean.assign(channels, T(0));
  p.running_var.assign(channels, T(1));
  p.mode = mode;
  return p;
}

template <typename T>
Tensor<T> norm_forward(const Tensor<T>& x, NormParams<T>& params, bool training) {
  if (x.rank() != 4) {
    throw DimensionError("norm_forward expects [N,C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (c != params.channels()) {
    throw DimensionError("norm_forward: axis 1 (channels) is " + std::to_string(c) +
                         " but the parameters hold " + std::to_string(params.channels()));
  }
  const bool instance = params.mode == NormMode::instance;
  if (instance && plane < 2) {
    throw ValidationError("instance norm needs H·W >= 2 per channel, got " +
                          std::to_string(plane));
  }
  if (training && !instance && n * plane < 2) {
    throw ValidationError("batch norm in training needs N·H·W >= 2 per channel, got " +
                          std::to_string(n * plane));
  }

  // Statistics live per group: one group per channel (batch mode or
  // inference) or per (sample, channel) (instance mode in training).
  const bool per_instance = training && instance;
  const std::size_t groups = per_instance ? n * c : c;
  auto group_of = [=](std::size_t b, std::size_t ch) { return per_instance ? b * c + ch : ch; };

  std::vector<T> mean(groups, T(0)), inv_std(groups, T(0));
  const T* xv = x.values().data();
  if (training) {
    std::vector<T> var(groups, T(0));
    std::vector<std::size_t> count(groups, 0);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = xv + (b * c + ch) * plane;
        auto g = group_of(b, ch);
        for (std::size_t i = 0; i < plane; ++i) mean[g] += src[i];
        count[g] += plane;
      }
    for (std::size_t g = 0; g < groups; ++g) mean[g] /= static_cast<T>(count[g]);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = xv + (b * c + ch) * plane;
        auto g = group_of(b, ch);
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = src[i] - mean[g];
          var[g] += d * d;
        }
      }
    for (std::size_t g = 0; g < groups; ++g) var[g] /= static_cast<T>(count[g]);
    for (std::size_t g = 0; g < groups; ++g) inv_std[g] = T(1) / std::sqrt(var[g] + params.eps);

    // Running statistics track the unbiased variance; in instance mode the
    // per-sample statistics are averaged over the batch first.
    const T m = params.momentum;
    for (std::size_t ch = 0; ch < c; ++ch) {
      T mu = 0, vu = 0;
      const std::size_t reps = per_instance ? n : 1;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto g = per_instance ? r * c + ch : ch;
        const T cnt = static_cast<T>(count[g]);
        mu += mean[g];
        vu += var[g] * cnt / (cnt - T(1));
      }
      mu /= static_cast<T>(reps);
      vu /= static_cast<T>(reps);
      params.running_mean[ch] = (T(1) - m) * params.running_mean[ch] + m * mu;
      params.running_var[ch] = (T(1) - m) * params.running_var[ch] + m * vu;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = params.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(params.running_var[ch] + params.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  std::vector<T> out(x.numel());
  const T* gamma = params.gamma.values().data();
  const T* beta = params.beta.values().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto g = group_of(b, ch);
      const std::size_t base = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xv[base + i] - mean[g]) * inv_std[g];
        (*xhat)[base + i] = h;
        out[base + i] = gamma[ch] * h + beta[ch];
      }
    }

  return make_result<T>(
      "norm", x.shape(), std::move(out), {x, params.gamma, params.beta},
      [=](const detail::TensorImpl<T>& res) {
        auto& ix = *res.node->inputs[0];
        auto& ig = *res.node->inputs[1];
        auto& ib = *res.node->inputs[2];
        const T* gy = res.grad.data();
        const T* gam = ig.values.data();
        if (ig.requires_grad || ib.requires_grad) {
          T* gg = ig.requires_grad ? ig.grad_buffer() : nullptr;
          T* gb = ib.requires_grad ? ib.grad_buffer() : nullptr;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (b * c + ch) * plane;
              T sg = 0, sb = 0;
              for (std::size_t i = 0; i < plane; ++i) {
                sg += gy[base + i] * (*xhat)[base + i];
                sb += gy[base + i];
              }
              if (gg) gg[ch] += sg;
              if (gb) gb[ch] += sb;
            }
        }
        if (!ix.requires_grad) return;
        T* gx = ix.grad_buffer();
        if (!training) {
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (b * c + ch) * plane;
              const T k = gam[ch] * inv_std[ch];
              for (std::size_t i = 0; i < plane; ++i) gx[base + i] += k * gy[base + i];
            }
          return;
        }
        // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂)) within each group.
        std::vector<T> mdy(groups, T(0)), mdyx(groups, T(0));
        std::vector<std::size_t> cnt(groups, 0);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const auto g = group_of(b, ch);
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              mdy[g] += gy[base + i];
              mdyx[g] += gy[base + i] * (*xhat)[base + i];
            }
            cnt[g] += plane;
          }
        for (std::size_t g = 0; g < groups; ++g) {
          mdy[g] /= static_cast<T>(cnt[g]);
          mdyx[g] /= static_cast<T>(cnt[g]);
        }
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const auto g = group_of(b, ch);
            const std::size_t base = (b * c + ch) * plane;
            const T k = gam[ch] * inv_std[g];
            for (std::size_t i = 0; i < plane; ++i)
              gx[base + i] += k * (gy[base + i] - mdy[g] - (*xhat)[base + i] * mdyx[g]);
          }
      });
}

template <typename T>
Tensor<T> sparsity_penalty(std::span<const SparsityTerm<T>> terms, T lambda) {
  if (lambda < T(0)) throw ConfigError("sparsity weight lambda must be >= 0");
  T total = 0;
  std::vector<Tensor<T>> inputs;
  for (const auto& term : terms) {
    for (auto ch : term.channels) {
      if (ch >= term.gamma.numel()) {
        throw ValidationError("sparsity region channel " + std::to_string(ch) +
                              " outside a scaling-factor vector of length " +
                              std::to_string(term.gamma.numel()));
      }
      total += std::abs(term.gamma.values()[ch]);
    }
    inputs.push_back(term.gamma);
  }
  std::vector<std::vector<std::size_t>> regions;
  regions.reserve(terms.size());
  for (const auto& term : terms) regions.push_back(term.channels);
  return make_result<T>(
      "sparsity_penalty", {1}, {lambda * total}, std::move(inputs),
      [regions, lambda](const detail::TensorImpl<T>& res) {
        const T g0 = res.grad[0] * lambda;
        for (std::size_t k = 0; k < regions.size(); ++k) {
          auto& in = *res.node->inputs[k];
          if (!in.requires_grad) continue;
          T* g = in.grad_buffer();
          for (auto ch : regions[k]) {
            const T v = in.values[ch];
            const T sign = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
            g[ch] += g0 * sign;
          }
        }
      });
}

template struct NormParams<float>;
template struct NormParams<double>;
template Tensor<float> norm_forward(const Tensor<float>&, NormParams<float>&, bool);
template Tensor<double> norm_forward(const Tensor<double>&, NormParams<double>&, bool);
template Tensor<float> sparsity_penalty(std::span<const SparsityTerm<float>>, float);
template Tensor<double> sparsity_penalty(std::span<const SparsityTerm<double>>, double);

}  // namespace cen
