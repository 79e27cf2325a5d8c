// SPDX-License-Identifier: Apache-2.0
#include "cen/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"
#include "cen/error.hpp"
#include "cen/random.hpp"

namespace cen {

namespace {

constexpr std::string_view kDataMagic = "CENDATA1";

// Sub-stream tags of one sample.
constexpr std::uint64_t kTagLatent = 1;
constexpr std::uint64_t kTagView = 16;

void check_size(std::size_t height, std::size_t width) {
  if (height < 8 || width < 8)
    throw ValidationError("fields need H, W >= 8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
}

std::size_t clamp_index(long i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

double replicate(const Field& f, long y, long x) {
  return f.at(clamp_index(y, f.height), clamp_index(x, f.width));
}

void add_noise(Field& f, std::uint64_t seed, double sigma) {
  if (sigma == 0.0) return;
  CounterRng rng(seed);
  for (auto& v : f.values) v += sigma * rng.normal();
}

}  // namespace

Field render_bumps(std::size_t height, std::size_t width, std::span<const Bump> bumps) {
  Field f{height, width, std::vector<double>(height * width, 0.0)};
  for (const auto& b : bumps) {
    const double inv = 1.0 / (2.0 * b.width * b.width);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - b.cy;
        const double dx = static_cast<double>(x) - b.cx;
        f.values[y * width + x] += b.amplitude * std::exp(-(dy * dy + dx * dx) * inv);
      }
  }
  const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
  const double low = *lo, range = *hi - *lo;
  for (auto& v : f.values) v = range > 0 ? (v - low) / range : 0.0;
  return f;
}

Field gen_latent(std::uint64_t seed, std::size_t height, std::size_t width,
                 const LatentParams& params) {
  check_size(height, width);
  if (params.bumps == 0) throw ValidationError("latent field needs K >= 1 bumps");
  if (!(params.width_min > 0) || params.width_max < params.width_min)
    throw ValidationError("bump widths need 0 < width_min <= width_max");
  CounterRng rng(seed);
  std::vector<Bump> bumps(params.bumps);
  for (auto& b : bumps) {
    b.cy = rng.uniform(0.0, static_cast<double>(height));
    b.cx = rng.uniform(0.0, static_cast<double>(width));
    b.width = rng.uniform(params.width_min, params.width_max);
    b.amplitude = rng.uniform(params.amplitude_min, params.amplitude_max);
  }
  return render_bumps(height, width, bumps);
}

double mean_neighbor_difference(const Field& f) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) {
      if (x + 1 < f.width) {
        total += std::abs(f.at(y, x + 1) - f.at(y, x));
        ++pairs;
      }
      if (y + 1 < f.height) {
        total += std::abs(f.at(y + 1, x) - f.at(y, x));
        ++pairs;
      }
    }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

std::string to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::coarse:
      return "coarse";
    case ViewKind::edge:
      return "edge";
    case ViewKind::noisy:
      return "noisy";
    case ViewKind::quantized:
      return "quantized";
  }
  return "?";
}

ViewKind parse_view_kind(const std::string& text) {
  for (auto k : {ViewKind::coarse, ViewKind::edge, ViewKind::noisy, ViewKind::quantized})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown view kind '" + text + "' (expected coarse, edge, noisy or quantized)");
}

double default_noise(ViewKind kind) {
  switch (kind) {
    case ViewKind::coarse:
    case ViewKind::edge:
      return 0.05;
    case ViewKind::noisy:
      return 0.25;
    case ViewKind::quantized:
      return 0.0;
  }
  return 0.0;
}

Field derive_modality(const Field& z, ViewKind kind, std::uint64_t seed, double noise_sigma,
                      std::size_t classes) {
  if (noise_sigma < 0) throw ValidationError("noise_sigma must be >= 0");
  Field out{z.height, z.width, std::vector<double>(z.values.size(), 0.0)};
  const long H = static_cast<long>(z.height), W = static_cast<long>(z.width);
  switch (kind) {
    case ViewKind::coarse:
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double s = 0;
          for (long dy = -2; dy <= 2; ++dy)
            for (long dx = -2; dx <= 2; ++dx) s += replicate(z, y + dy, x + dx);
          out.values[static_cast<std::size_t>(y * W + x)] = s / 25.0;
        }
      add_noise(out, seed, noise_sigma);
      break;
    case ViewKind::edge: {
      double peak = 0;
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          auto p = [&](long dy, long dx) { return replicate(z, y + dy, x + dx); };
          const double gx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
          const double gy = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
          const double g = std::hypot(gx, gy);
          out.values[static_cast<std::size_t>(y * W + x)] = g;
          peak = std::max(peak, g);
        }
      if (peak > 0)
        for (auto& v : out.values) v /= peak;
      add_noise(out, seed, noise_sigma);
      break;
    }
    case ViewKind::noisy:
      out.values = z.values;
      add_noise(out, seed, noise_sigma);
      break;
    case ViewKind::quantized: {
      if (classes < 2) throw ValidationError("quantized view needs at least 2 classes");
      const double c = static_cast<double>(classes);
      for (std::size_t i = 0; i < z.values.size(); ++i)
        out.values[i] = std::min(std::floor(z.values[i] * c), c - 1.0);
      break;
    }
  }
  return out;
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::fusion_regression:
      return "fusion_regression";
    case TaskKind::fusion_segmentation:
      return "fusion_segmentation";
    case TaskKind::cycle_triplet:
      return "cycle_triplet";
    case TaskKind::multitask_pair:
      return "multitask_pair";
    case TaskKind::mm_mt_quad:
      return "mm_mt_quad";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& text) {
  for (auto k : {TaskKind::fusion_regression, TaskKind::fusion_segmentation,
                 TaskKind::cycle_triplet, TaskKind::multitask_pair, TaskKind::mm_mt_quad})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown task kind '" + text +
                    "' (expected fusion_regression, fusion_segmentation, cycle_triplet, "
                    "multitask_pair or mm_mt_quad)");
}

Dataset make_dataset(TaskKind kind, std::size_t n_train, std::size_t n_val, std::uint64_t seed,
                     const DataParams& params) {
  if (n_train < 1 || n_val < 1) throw ValidationError("n_train and n_val must be >= 1");
  check_size(params.height, params.width);
  Dataset d;
  d.kind = kind;
  d.seed = seed;
  d.height = params.height;
  d.width = params.width;
  d.n_train = n_train;
  d.n_val = n_val;

  const TargetSpec regression{false, 1};
  const TargetSpec segmentation{true, static_cast<std::uint32_t>(params.classes)};
  enum class Source { latent, clean_edge, quantized, view0, view1, view2 };
  std::vector<Source> sources;
  switch (kind) {
    case TaskKind::fusion_regression:
      d.modality_kinds = {ViewKind::coarse, ViewKind::edge};
      d.targets_spec = {regression};
      sources = {Source::latent};
      break;
    case TaskKind::fusion_segmentation:
      d.modality_kinds = {ViewKind::coarse, ViewKind::edge};
      d.targets_spec = {segmentation};
      sources = {Source::quantized};
      break;
    case TaskKind::cycle_triplet:
      d.modality_kinds = {ViewKind::coarse, ViewKind::edge, ViewKind::noisy};
      d.targets_spec = {regression, regression, regression};
      sources = {Source::view0, Source::view1, Source::view2};
      break;
    case TaskKind::multitask_pair:
      d.modality_kinds = {ViewKind::noisy};
      d.targets_spec = {regression, regression};
      sources = {Source::latent, Source::clean_edge};
      break;
    case TaskKind::mm_mt_quad:
      d.modality_kinds = {ViewKind::coarse, ViewKind::edge};
      d.targets_spec = {regression, segmentation};
      sources = {Source::latent, Source::quantized};
      break;
  }
  if (segmentation.classes < 2 &&
      std::any_of(d.targets_spec.begin(), d.targets_spec.end(),
                  [](const TargetSpec& t) { return t.segmentation; }))
    throw ValidationError("segmentation targets need at least 2 classes");

  auto noise_of = [&](ViewKind k) {
    switch (k) {
      case ViewKind::coarse:
        return params.coarse_noise;
      case ViewKind::edge:
        return params.edge_noise;
      case ViewKind::noisy:
        return params.noisy_noise;
      case ViewKind::quantized:
        return 0.0;
    }
    return 0.0;
  };

  const std::size_t plane = d.plane(), n = d.samples();
  d.modalities.assign(d.modality_kinds.size(), std::vector<float>(n * plane));
  d.targets.assign(sources.size(), std::vector<float>(n * plane));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t sample_seed = derive(seed, i);
    const Field z = gen_latent(derive(sample_seed, kTagLatent), d.height, d.width, params.latent);
    std::vector<Field> views;
    for (std::size_t m = 0; m < d.modality_kinds.size(); ++m) {
      const auto k = d.modality_kinds[m];
      views.push_back(derive_modality(z, k, derive(sample_seed, kTagView + m), noise_of(k),
                                      params.classes));
      std::copy(views.back().values.begin(), views.back().values.end(),
                d.modalities[m].begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    for (std::size_t t = 0; t < sources.size(); ++t) {
      Field target;
      switch (sources[t]) {
        case Source::latent:
          target = z;
          break;
        case Source::clean_edge:
          target = derive_modality(z, ViewKind::edge, 0, 0.0);
          break;
        case Source::quantized:
          target = derive_modality(z, ViewKind::quantized, 0, 0.0, params.classes);
          break;
        case Source::view0:
        case Source::view1:
        case Source::view2:
          target = views[static_cast<std::size_t>(sources[t]) -
                         static_cast<std::size_t>(Source::view0)];
          break;
      }
      std::copy(target.values.begin(), target.values.end(),
                d.targets[t].begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
  }
  return d;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& d) {
  detail::ByteWriter w;
  w.magic(kDataMagic);
  w.u32(static_cast<std::uint32_t>(d.kind));
  w.u32(static_cast<std::uint32_t>(d.seed & 0xffffffffu));
  w.u32(static_cast<std::uint32_t>(d.seed >> 32));
  w.u32(static_cast<std::uint32_t>(d.height));
  w.u32(static_cast<std::uint32_t>(d.width));
  w.u32(static_cast<std::uint32_t>(d.n_train));
  w.u32(static_cast<std::uint32_t>(d.n_val));
  w.u32(static_cast<std::uint32_t>(d.modality_kinds.size()));
  for (auto k : d.modality_kinds) w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(d.targets_spec.size()));
  for (const auto& t : d.targets_spec) {
    w.u32(t.segmentation ? 1u : 0u);
    w.u32(t.classes);
  }
  for (const auto& m : d.modalities) w.array(std::span<const float>(m));
  for (const auto& t : d.targets) w.array(std::span<const float>(t));
  return std::move(w.bytes());
}

Dataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "dataset");
  r.expect_magic(kDataMagic);
  Dataset d;
  const auto kind = r.u32();
  if (kind > static_cast<std::uint32_t>(TaskKind::mm_mt_quad))
    throw FormatError("dataset: unknown task kind " + std::to_string(kind));
  d.kind = static_cast<TaskKind>(kind);
  const std::uint64_t lo = r.u32(), hi = r.u32();
  d.seed = lo | (hi << 32);
  d.height = r.u32();
  d.width = r.u32();
  d.n_train = r.u32();
  d.n_val = r.u32();
  const auto n_mod = r.u32();
  if (n_mod == 0 || n_mod > 16) throw FormatError("dataset: bad modality count");
  for (std::uint32_t m = 0; m < n_mod; ++m) {
    const auto k = r.u32();
    if (k > static_cast<std::uint32_t>(ViewKind::quantized))
      throw FormatError("dataset: unknown view kind " + std::to_string(k));
    d.modality_kinds.push_back(static_cast<ViewKind>(k));
  }
  const auto n_tasks = r.u32();
  if (n_tasks == 0 || n_tasks > 16) throw FormatError("dataset: bad task count");
  for (std::uint32_t t = 0; t < n_tasks; ++t) {
    TargetSpec spec;
    spec.segmentation = r.u32() != 0;
    spec.classes = r.u32();
    d.targets_spec.push_back(spec);
  }
  const std::size_t count = d.samples() * d.plane();
  for (std::uint32_t m = 0; m < n_mod; ++m) d.modalities.push_back(r.array<float>(count));
  for (std::uint32_t t = 0; t < n_tasks; ++t) d.targets.push_back(r.array<float>(count));
  r.expect_end();
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  const auto bytes = serialize_dataset(data);
  detail::write_file(path, bytes);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return deserialize_dataset(bytes);
}

template <typename T>
SampleBatch<T> make_batch(const Dataset& d, Split split, std::span<const std::size_t> indices) {
  const std::size_t limit = split == Split::train ? d.n_train : d.n_val;
  const std::size_t offset = split == Split::train ? 0 : d.n_train;
  const std::size_t plane = d.plane(), b = indices.size();
  if (b == 0) throw ValidationError("a batch needs at least one sample");
  for (auto i : indices)
    if (i >= limit)
      throw ValidationError("sample index " + std::to_string(i) + " outside split of " +
                            std::to_string(limit));
  auto gather = [&](const std::vector<float>& src) {
    std::vector<T> out(b * plane);
    for (std::size_t k = 0; k < b; ++k) {
      const auto* from = src.data() + (offset + indices[k]) * plane;
      std::transform(from, from + plane, out.begin() + static_cast<std::ptrdiff_t>(k * plane),
                     [](float v) { return static_cast<T>(v); });
    }
    return Tensor<T>::from({b, 1, d.height, d.width}, std::move(out));
  };
  SampleBatch<T> batch;
  for (const auto& m : d.modalities) batch.inputs.push_back(gather(m));
  for (const auto& t : d.targets) batch.targets.push_back(gather(t));
  return batch;
}

template <typename T>
SampleBatch<T> full_split(const Dataset& d, Split split) {
  std::vector<std::size_t> idx(split == Split::train ? d.n_train : d.n_val);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch<T>(d, split, idx);
}

template SampleBatch<float> make_batch(const Dataset&, Split, std::span<const std::size_t>);
template SampleBatch<double> make_batch(const Dataset&, Split, std::span<const std::size_t>);
template SampleBatch<float> full_split(const Dataset&, Split);
template SampleBatch<double> full_split(const Dataset&, Split);

}  // namespace cen
