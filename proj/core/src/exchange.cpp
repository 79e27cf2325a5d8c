// SPDX-License-Identifier: Apache-2.0
#include "cen/exchange.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cen/error.hpp"
#include "cen/random.hpp"

namespace cen {

std::vector<std::size_t> ExchangePlan::region(std::size_t stream, std::size_t channels) const {
  validate(channels);
  if (stream >= num_streams) {
    throw ConfigError("stream " + std::to_string(stream) + " outside a plan of " +
                      std::to_string(num_streams) + " streams");
  }
  std::vector<std::size_t> out;
  if (partition == Partition::undivided) {
    out.resize(channels);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  const std::size_t width = channels / num_streams;
  out.resize(width);
  std::iota(out.begin(), out.end(), stream * width);
  return out;
}

void ExchangePlan::validate(std::size_t channels) const {
  if (num_streams < 2) {
    throw ConfigError("channel exchange needs at least 2 streams, got " +
                      std::to_string(num_streams));
  }
  if (!(theta >= 0.0)) throw ConfigError("exchange threshold theta must be >= 0");
  if (partition == Partition::divided && channels % num_streams != 0) {
    throw ConfigError(std::to_string(channels) + " channels cannot be divided into " +
                      std::to_string(num_streams) + " equal sub-parts");
  }
}

ExchangePlan make_plan(std::size_t num_streams, double theta, std::set<std::size_t> layers,
                       Partition partition) {
  ExchangePlan plan;
  plan.num_streams = num_streams;
  plan.theta = theta;
  plan.partition = partition;
  plan.enabled_layers = std::move(layers);
  if (num_streams < 2) {
    throw ConfigError("channel exchange needs at least 2 streams, got " +
                      std::to_string(num_streams));
  }
  if (!(theta >= 0.0)) throw ConfigError("exchange threshold theta must be >= 0");
  return plan;
}

ExchangeMask ExchangeMask::empty(std::size_t num_streams, std::size_t channels) {
  ExchangeMask m;
  m.num_streams = num_streams;
  m.channels = channels;
  m.replaced.assign(num_streams * channels, 0);
  return m;
}

std::size_t ExchangeMask::count() const {
  return static_cast<std::size_t>(std::count(replaced.begin(), replaced.end(), 1));
}

std::size_t ExchangeMask::count(std::size_t stream) const {
  auto first = replaced.begin() + static_cast<std::ptrdiff_t>(stream * channels);
  return static_cast<std::size_t>(
      std::count(first, first + static_cast<std::ptrdiff_t>(channels), 1));
}

double ExchangeMask::exchanged_fraction() const {
  return eligible == 0 ? 0.0 : static_cast<double>(count()) / static_cast<double>(eligible);
}

namespace {

template <typename T>
std::size_t common_length(std::span<const std::span<const T>> gammas, const ExchangePlan& plan) {
  if (gammas.size() != plan.num_streams) {
    throw DimensionError("exchange mask: got " + std::to_string(gammas.size()) +
                         " scaling-factor vectors for a plan of " +
                         std::to_string(plan.num_streams) + " streams");
  }
  const std::size_t c = gammas.empty() ? 0 : gammas[0].size();
  for (const auto& g : gammas) {
    if (g.size() != c) {
      throw DimensionError("exchange mask: scaling-factor vectors differ in length (" +
                           std::to_string(c) + " vs " + std::to_string(g.size()) + ")");
    }
  }
  plan.validate(c);
  return c;
}

template <typename T>
bool below_threshold(T gamma, const ExchangePlan& plan) {
  const double v = static_cast<double>(gamma);
  return plan.rule == ThresholdRule::magnitude ? std::abs(v) <= plan.theta : v <= plan.theta;
}

template <typename T>
void check_streams(std::span<const Tensor<T>> xs, const ExchangeMask& mask) {
  if (xs.size() < 2) {
    throw ConfigError("channel exchange needs at least 2 streams, got " +
                      std::to_string(xs.size()));
  }
  if (mask.num_streams != xs.size()) {
    throw DimensionError("exchange mask covers " + std::to_string(mask.num_streams) +
                         " streams, got " + std::to_string(xs.size()) + " feature maps");
  }
  for (const auto& x : xs) {
    if (x.shape() != xs[0].shape()) {
      throw DimensionError("exchange streams differ in shape: " + shape_str(x.shape()) + " vs " +
                           shape_str(xs[0].shape()));
    }
  }
  if (xs[0].rank() != 4 || xs[0].dim(1) != mask.channels) {
    throw DimensionError("exchange mask has " + std::to_string(mask.channels) +
                         " channels, feature map shape is " + shape_str(xs[0].shape()));
  }
}

// Output of stream m: own values where not replaced, else donor mean or 0.
template <typename T>
Tensor<T> exchanged_stream(std::span<const Tensor<T>> xs, const ExchangeMask& mask,
                           std::size_t m, bool zero) {
  const std::size_t streams = xs.size();
  const Shape& shape = xs[0].shape();
  const std::size_t n = shape[0], c = shape[1], plane = shape[2] * shape[3];
  const T inv = T(1) / static_cast<T>(streams - 1);
  std::vector<std::uint8_t> rep(mask.replaced.begin() + static_cast<std::ptrdiff_t>(m * c),
                                mask.replaced.begin() + static_cast<std::ptrdiff_t>((m + 1) * c));
  std::vector<T> out(xs[m].values().begin(), xs[m].values().end());
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!rep[ch]) continue;
    for (std::size_t b = 0; b < n; ++b) {
      T* dst = out.data() + (b * c + ch) * plane;
      if (zero) {
        std::fill(dst, dst + plane, T(0));
        continue;
      }
      std::fill(dst, dst + plane, T(0));
      for (std::size_t d = 0; d < streams; ++d) {
        if (d == m) continue;
        const T* src = xs[d].values().data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
      for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
    }
  }
  std::vector<Tensor<T>> inputs(xs.begin(), xs.end());
  return make_result<T>(
      zero ? "zero_out" : "channel_exchange", shape, std::move(out), std::move(inputs),
      [=](const detail::TensorImpl<T>& res) {
        const T* gy = res.grad.data();
        for (std::size_t d = 0; d < streams; ++d) {
          auto& in = *res.node->inputs[d];
          if (!in.requires_grad) continue;
          if (d != m && zero) continue;
          T* g = in.grad_buffer();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              // Own stream receives gradient only on kept channels; donors
              // only on the channels they fill, weighted 1/(M-1).
              const bool take = d == m ? !rep[ch] : static_cast<bool>(rep[ch]);
              if (!take) continue;
              const T w = d == m ? T(1) : inv;
              const std::size_t base = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) g[base + i] += w * gy[base + i];
            }
        }
      });
}

}  // namespace

template <typename T>
ExchangeMask compute_exchange_mask(std::span<const std::span<const T>> gammas,
                                   const ExchangePlan& plan) {
  const std::size_t c = common_length(gammas, plan);
  ExchangeMask mask = ExchangeMask::empty(plan.num_streams, c);
  for (std::size_t m = 0; m < plan.num_streams; ++m) {
    const auto region = plan.region(m, c);
    mask.eligible += region.size();
    for (auto ch : region)
      if (below_threshold(gammas[m][ch], plan)) mask.set(m, ch);
  }
  return mask;
}

template <typename T>
std::vector<Tensor<T>> channel_exchange(std::span<const Tensor<T>> normalized,
                                        const ExchangeMask& mask) {
  check_streams(normalized, mask);
  std::vector<Tensor<T>> out;
  out.reserve(normalized.size());
  for (std::size_t m = 0; m < normalized.size(); ++m) {
    if (mask.count(m) == 0) {
      out.push_back(normalized[m]);
    } else {
      out.push_back(exchanged_stream(normalized, mask, m, false));
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> zero_out(std::span<const Tensor<T>> normalized, const ExchangeMask& mask) {
  check_streams(normalized, mask);
  std::vector<Tensor<T>> out;
  out.reserve(normalized.size());
  for (std::size_t m = 0; m < normalized.size(); ++m) {
    if (mask.count(m) == 0) {
      out.push_back(normalized[m]);
    } else {
      out.push_back(exchanged_stream(normalized, mask, m, true));
    }
  }
  return out;
}

std::string to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::threshold:
      return "threshold";
    case VariantKind::fixed_fraction:
      return "fixed_fraction";
    case VariantKind::random_fraction:
      return "random_fraction";
    case VariantKind::zero_out:
      return "zero_out";
    case VariantKind::no_divide:
      return "no_divide";
  }
  return "?";
}

VariantKind parse_variant_kind(const std::string& text) {
  for (auto k : {VariantKind::threshold, VariantKind::fixed_fraction, VariantKind::random_fraction,
                 VariantKind::zero_out, VariantKind::no_divide}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown exchange variant '" + text + "'");
}

template <typename T>
ExchangeMask variant_mask(std::span<const std::span<const T>> gammas, const ExchangePlan& plan,
                          const ExchangeVariant& variant) {
  switch (variant.kind) {
    case VariantKind::threshold:
    case VariantKind::zero_out:
      return compute_exchange_mask(gammas, plan);
    case VariantKind::no_divide: {
      ExchangePlan undivided = plan;
      undivided.partition = Partition::undivided;
      return compute_exchange_mask(gammas, undivided);
    }
    case VariantKind::fixed_fraction:
    case VariantKind::random_fraction:
      break;
  }
  if (!(variant.fraction >= 0.0 && variant.fraction <= 1.0)) {
    throw ConfigError("exchange fraction must lie in [0,1], got " +
                      std::to_string(variant.fraction));
  }
  const std::size_t c = common_length(gammas, plan);
  ExchangeMask mask = ExchangeMask::empty(plan.num_streams, c);
  for (std::size_t m = 0; m < plan.num_streams; ++m) {
    auto region = plan.region(m, c);
    mask.eligible += region.size();
    const auto k = static_cast<std::size_t>(
        std::llround(variant.fraction * static_cast<double>(region.size())));
    if (variant.kind == VariantKind::fixed_fraction) {
      std::stable_sort(region.begin(), region.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(static_cast<double>(gammas[m][a])) <
               std::abs(static_cast<double>(gammas[m][b]));
      });
    } else {
      CounterRng rng(derive(variant.seed, m));
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(region.size() - i));
        std::swap(region[i], region[j]);
      }
    }
    for (std::size_t i = 0; i < k; ++i) mask.set(m, region[i]);
  }
  return mask;
}

template <typename T>
std::vector<Tensor<T>> exchange_variant(std::span<const Tensor<T>> normalized,
                                        std::span<const std::span<const T>> gammas,
                                        const ExchangePlan& plan, const ExchangeVariant& variant) {
  const ExchangeMask mask = variant_mask(gammas, plan, variant);
  if (variant.kind == VariantKind::zero_out) return zero_out(normalized, mask);
  return channel_exchange(normalized, mask);
}

template <typename T>
Tensor<T> sparsity_penalty(std::span<const NormBank<T>> banks, const ExchangePlan& plan,
                           T lambda) {
  if (banks.size() != plan.num_streams) {
    throw ConfigError("sparsity penalty: " + std::to_string(banks.size()) +
                      " banks for a plan of " + std::to_string(plan.num_streams) + " streams");
  }
  std::vector<SparsityTerm<T>> terms;
  for (std::size_t m = 0; m < banks.size(); ++m) {
    for (auto layer : plan.enabled_layers) {
      if (layer >= banks[m].layers.size()) {
        throw ValidationError("sparsity penalty: layer " + std::to_string(layer) +
                              " outside a bank of " + std::to_string(banks[m].layers.size()) +
                              " layers");
      }
      const auto& gamma = banks[m].layers[layer].gamma;
      terms.push_back({gamma, plan.region(m, gamma.numel())});
    }
  }
  return sparsity_penalty<T>(std::span<const SparsityTerm<T>>(terms), lambda);
}

#define CEN_INSTANTIATE_EXCHANGE(T)                                                          \
  template ExchangeMask compute_exchange_mask(std::span<const std::span<const T>>,           \
                                              const ExchangePlan&);                          \
  template std::vector<Tensor<T>> channel_exchange(std::span<const Tensor<T>>,               \
                                                   const ExchangeMask&);                     \
  template std::vector<Tensor<T>> zero_out(std::span<const Tensor<T>>, const ExchangeMask&); \
  template ExchangeMask variant_mask(std::span<const std::span<const T>>, const ExchangePlan&, \
                                     const ExchangeVariant&);                                \
  template std::vector<Tensor<T>> exchange_variant(std::span<const Tensor<T>>,               \
                                                   std::span<const std::span<const T>>,      \
                                                   const ExchangePlan&, const ExchangeVariant&); \
  template Tensor<T> sparsity_penalty(std::span<const NormBank<T>>, const ExchangePlan&, T);

CEN_INSTANTIATE_EXCHANGE(float)
CEN_INSTANTIATE_EXCHANGE(double)

#undef CEN_INSTANTIATE_EXCHANGE

}  // namespace cen
