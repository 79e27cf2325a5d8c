// SPDX-License-Identifier: Apache-2.0
#include "cen/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <tuple>

#include "cen/error.hpp"
#include "cen/ops.hpp"
#include "cen/random.hpp"

namespace cen {

namespace {

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<E> values, const char* what,
             const char* expected) {
  for (E v : values)
    if (to_string(v) == text) return v;
  throw ConfigError(std::string("unknown ") + what + " '" + text + "' (expected " + expected + ")");
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Weights and biases uniform in ±1/sqrt(fan_in), one generator per name.
template <typename T>
ConvLayer<T> make_conv(std::uint64_t seed, const std::string& name, std::size_t cin,
                       std::size_t cout, std::size_t kernel, std::size_t stride) {
  const std::size_t fan_in = cin * kernel * kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  CounterRng rng(derive(seed, fnv1a(name)));
  std::vector<T> w(cout * fan_in), b(cout);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  for (auto& v : b) v = static_cast<T>(rng.uniform(-bound, bound));
  ConvLayer<T> layer;
  layer.weight = Tensor<T>::parameter({cout, cin, kernel, kernel}, std::move(w));
  layer.bias = Tensor<T>::parameter({cout}, std::move(b));
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

template <typename T>
ConvSet<T> make_encoder_set(const NetSpec& spec, std::uint64_t seed, std::size_t index) {
  ConvSet<T> set;
  set.name = "enc" + std::to_string(index);
  std::size_t cin = spec.in_channels;
  for (std::size_t l = 0; l < spec.encoder.size(); ++l) {
    const auto& st = spec.encoder[l];
    set.layers.push_back(make_conv<T>(seed, set.name + ".conv" + std::to_string(l), cin,
                                      st.out_channels, st.kernel, st.stride));
    cin = st.out_channels;
  }
  return set;
}

template <typename T>
ConvSet<T> make_decoder_set(const NetSpec& spec, std::uint64_t seed, std::size_t index,
                            std::size_t out_channels) {
  ConvSet<T> set;
  set.name = "dec" + std::to_string(index);
  std::size_t cin = spec.encoder.back().out_channels;
  for (std::size_t l = 0; l < spec.decoder.size(); ++l) {
    const auto& st = spec.decoder[l];
    set.layers.push_back(make_conv<T>(seed, set.name + ".conv" + std::to_string(l), cin,
                                      st.out_channels, st.kernel, 1));
    cin = st.out_channels;
  }
  set.layers.push_back(
      make_conv<T>(seed, set.name + ".head", cin, out_channels, spec.head_kernel, 1));
  return set;
}

template <typename T>
ConvSet<T> make_fusion_set(const NetSpec& spec, std::uint64_t seed, std::size_t index,
                           std::size_t group_size) {
  ConvSet<T> set;
  set.name = "fuse" + std::to_string(index);
  for (std::size_t l = 0; l < spec.encoder.size(); ++l) {
    const std::size_t c = spec.encoder[l].out_channels;
    set.layers.push_back(make_conv<T>(seed, set.name + ".conv" + std::to_string(l),
                                      c * group_size, c, 1, 1));
  }
  return set;
}

template <typename T>
NormBank<T> make_bank(BankKey key, const std::vector<std::size_t>& channels, NormMode mode) {
  NormBank<T> bank;
  bank.key = key;
  for (auto c : channels) bank.layers.push_back(NormParams<T>::make(c, mode));
  return bank;
}

std::vector<std::size_t> encoder_channels(const NetSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& st : spec.encoder) out.push_back(st.out_channels);
  return out;
}

std::vector<std::size_t> decoder_channels(const NetSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& st : spec.decoder) out.push_back(st.out_channels);
  return out;
}

bool norm_ref_equal(const NormRef& a, const NormRef& b) {
  return a.shared == b.shared && (a.shared || a.bank == b.bank);
}

// A group of streams fused at the sites of one side.
struct Group {
  std::size_t id = 0;
  std::vector<std::size_t> members;
};

template <typename T>
std::vector<Group> encoder_groups(const ModelAssembly<T>& model) {
  std::vector<Group> groups;
  for (std::size_t t = 0; t < model.num_tasks; ++t) {
    auto ids = model.task_streams(t);
    if (ids.size() >= 2) groups.push_back({t, ids});
  }
  return groups;
}

template <typename T>
std::vector<Group> decoder_groups(const ModelAssembly<T>& model) {
  std::vector<Group> groups;
  for (std::size_t m = 0; m < model.num_modalities; ++m) {
    Group g{m, {}};
    for (std::size_t s = 0; s < model.streams.size(); ++s)
      if (model.streams[s].modality == m) g.members.push_back(s);
    if (g.members.size() >= 2) groups.push_back(std::move(g));
  }
  return groups;
}

template <typename T>
ExchangePlan site_plan(const ModelAssembly<T>& model, std::size_t group_size) {
  ExchangePlan plan;
  plan.num_streams = group_size;
  plan.theta = model.options.theta;
  plan.partition = model.options.variant.kind == VariantKind::no_divide
                       ? Partition::undivided
                       : model.options.partition;
  plan.rule = model.options.rule;
  return plan;
}

template <typename T>
const NormParams<T>& encoder_norm(const ModelAssembly<T>& model, std::size_t stream,
                                  std::size_t layer) {
  const auto& r = model.streams[stream];
  return model.bank(r.encoder_norms).layers.at(r.encoder_norm_offset + layer);
}

template <typename T>
const NormParams<T>& decoder_norm(const ModelAssembly<T>& model, std::size_t stream,
                                  std::size_t layer) {
  const auto& r = model.streams[stream];
  return model.bank(r.decoder_norms).layers.at(r.decoder_norm_offset + layer);
}

template <typename T>
Tensor<T> apply_conv(const Tensor<T>& x, const ConvLayer<T>& layer) {
  return conv2d(x, layer.weight, layer.bias, Conv2dArgs{layer.stride, layer.padding});
}

}  // namespace

std::string to_string(Topology t) {
  switch (t) {
    case Topology::multimodal:
      return "multimodal";
    case Topology::cycle:
      return "cycle";
    case Topology::multitask:
      return "multitask";
    case Topology::mm_mt:
      return "mm_mt";
  }
  return "?";
}

std::string to_string(ExchangeSide s) {
  switch (s) {
    case ExchangeSide::automatic:
      return "auto";
    case ExchangeSide::none:
      return "none";
    case ExchangeSide::encoder:
      return "encoder";
    case ExchangeSide::decoder:
      return "decoder";
    case ExchangeSide::both:
      return "both";
  }
  return "?";
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::exchange:
      return "exchange";
    case Fusion::none:
      return "none";
    case Fusion::concat:
      return "concat";
    case Fusion::average:
      return "average";
  }
  return "?";
}

Topology parse_topology(const std::string& text) {
  return parse_enum(text, {Topology::multimodal, Topology::cycle, Topology::multitask, Topology::mm_mt},
                    "topology", "multimodal, cycle, multitask or mm_mt");
}

ExchangeSide parse_exchange_side(const std::string& text) {
  return parse_enum(text,
                    {ExchangeSide::automatic, ExchangeSide::none, ExchangeSide::encoder,
                     ExchangeSide::decoder, ExchangeSide::both},
                    "exchange side", "auto, none, encoder, decoder or both");
}

Fusion parse_fusion(const std::string& text) {
  return parse_enum(text, {Fusion::exchange, Fusion::none, Fusion::concat, Fusion::average},
                    "fusion", "exchange, none, concat or average");
}

template <typename T>
std::vector<std::size_t> ModelAssembly<T>::task_streams(std::size_t task) const {
  std::vector<std::size_t> ids;
  for (std::size_t s = 0; s < streams.size(); ++s)
    if (streams[s].task == task) ids.push_back(s);
  return ids;
}

template <typename T>
NormBank<T>& ModelAssembly<T>::bank(const NormRef& ref) {
  if (ref.shared) return *shared_bank;
  return banks.at(ref.bank);
}

template <typename T>
const NormBank<T>& ModelAssembly<T>::bank(const NormRef& ref) const {
  if (ref.shared) return *shared_bank;
  return banks.at(ref.bank);
}

template <typename T>
std::vector<NamedParam<T>> ModelAssembly<T>::parameters() const {
  std::vector<NamedParam<T>> out;
  auto add_set = [&](const ConvSet<T>& set, ParamSide side, bool fusion, std::size_t head_index) {
    for (std::size_t l = 0; l < set.layers.size(); ++l) {
      const std::string stem =
          set.name + (l == head_index ? std::string(".head") : ".conv" + std::to_string(l));
      out.push_back({stem + ".weight", set.layers[l].weight,
                     fusion ? ParamRole::fusion_weight : ParamRole::conv_weight, side});
      out.push_back({stem + ".bias", set.layers[l].bias,
                     fusion ? ParamRole::fusion_bias : ParamRole::conv_bias, side});
    }
  };
  const std::size_t no_head = static_cast<std::size_t>(-1);
  for (const auto& set : encoder_convs) add_set(set, ParamSide::encoder, false, no_head);
  for (const auto& set : fusion_convs) add_set(set, ParamSide::encoder, true, no_head);
  for (const auto& set : decoder_convs)
    add_set(set, ParamSide::decoder, false, set.layers.size() - 1);

  // A bank layer belongs to the encoder side when some stream reads its
  // encoder norms from it at that index.
  auto side_of = [&](const NormRef& ref, std::size_t layer) {
    for (const auto& r : streams)
      if (norm_ref_equal(r.encoder_norms, ref) && layer >= r.encoder_norm_offset &&
          layer < r.encoder_norm_offset + encoder_layers())
        return ParamSide::encoder;
    return ParamSide::decoder;
  };
  auto add_bank = [&](const NormBank<T>& bank, const NormRef& ref, const std::string& stem) {
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
      const auto side = side_of(ref, l);
      const std::string name = stem + "." + std::to_string(l);
      out.push_back({name + ".gamma", bank.layers[l].gamma, ParamRole::norm_gamma, side});
      out.push_back({name + ".beta", bank.layers[l].beta, ParamRole::norm_beta, side});
    }
  };
  if (shared_bank) add_bank(*shared_bank, NormRef{true, 0}, "norm.shared");
  for (std::size_t b = 0; b < banks.size(); ++b)
    add_bank(banks[b], NormRef{false, b},
             "norm.m" + std::to_string(banks[b].key.modality) + ".t" +
                 std::to_string(banks[b].key.task));
  for (std::size_t t = 0; t < score_logits.size(); ++t)
    out.push_back({"scores.t" + std::to_string(t), score_logits[t], ParamRole::score_logit,
                   ParamSide::scores});
  return out;
}

template <typename T>
std::vector<NamedNorm<T>> ModelAssembly<T>::norm_layers() {
  std::vector<NamedNorm<T>> out;
  auto add_bank = [&](NormBank<T>& bank, const std::string& stem) {
    for (std::size_t l = 0; l < bank.layers.size(); ++l)
      out.push_back({stem + "." + std::to_string(l), &bank.layers[l]});
  };
  if (shared_bank) add_bank(*shared_bank, "norm.shared");
  for (auto& bank : banks)
    add_bank(bank, "norm.m" + std::to_string(bank.key.modality) + ".t" +
                       std::to_string(bank.key.task));
  return out;
}

template <typename T>
ModelAssembly<T> build_model(const NetSpec& spec, Topology topology, std::size_t m1,
                             std::size_t m2, std::vector<TaskSpec> tasks,
                             const AssemblyOptions& options) {
  if (spec.encoder.empty()) throw ConfigError("net spec needs at least one encoder stage");
  if (spec.in_channels == 0) throw ConfigError("net spec in_channels must be positive");
  for (const auto& st : spec.encoder)
    if (st.out_channels == 0 || st.kernel == 0 || st.stride == 0 || st.kernel % 2 == 0)
      throw ConfigError("encoder stages need positive channels/stride and an odd kernel");
  for (const auto& st : spec.decoder)
    if (st.out_channels == 0 || st.kernel == 0 || st.upsample == 0 || st.kernel % 2 == 0)
      throw ConfigError("decoder stages need positive channels/upsample and an odd kernel");
  if (spec.head_kernel % 2 == 0 || spec.head_upsample == 0)
    throw ConfigError("head needs an odd kernel and a positive upsample factor");
  if (m1 == 0 || m2 == 0) throw ConfigError("M1 and M2 must be positive");
  if (options.theta < 0) throw ConfigError("theta must be >= 0");

  ModelAssembly<T> model;
  model.topology = topology;
  model.spec = spec;
  model.options = options;
  const std::size_t L = spec.encoder.size();
  const auto enc_ch = encoder_channels(spec);
  const auto dec_ch = decoder_channels(spec);
  std::vector<std::size_t> all_ch = enc_ch;
  all_ch.insert(all_ch.end(), dec_ch.begin(), dec_ch.end());
  const std::uint64_t seed = options.init_seed;

  switch (topology) {
    case Topology::multimodal:
      if (m2 != 1) throw ConfigError("multimodal topology has exactly one task (M2=1)");
      model.num_modalities = m1;
      model.num_inputs = m1;
      model.num_tasks = 1;
      break;
    case Topology::cycle:
      if (m1 != 2 || m2 != 3)
        throw ConfigError("cycle topology supports 3 modalities with 2 inputs per task (M1=2, M2=3)");
      model.num_modalities = 3;
      model.num_inputs = 2;
      model.num_tasks = 3;
      break;
    case Topology::multitask:
      if (m1 != 1) throw ConfigError("multitask topology has a single input modality (M1=1)");
      model.num_modalities = 1;
      model.num_inputs = 1;
      model.num_tasks = m2;
      break;
    case Topology::mm_mt:
      model.num_modalities = m1;
      model.num_inputs = m1;
      model.num_tasks = m2;
      break;
  }
  if (tasks.size() != model.num_tasks)
    throw ConfigError("topology " + to_string(topology) + " needs " +
                      std::to_string(model.num_tasks) + " task specs, got " +
                      std::to_string(tasks.size()));
  for (const auto& t : tasks) {
    if (t.out_channels == 0) throw ConfigError("task output channels must be positive");
    if (t.loss == TaskLoss::segmentation && t.out_channels < 2)
      throw ConfigError("segmentation tasks need at least 2 classes");
  }
  model.tasks = std::move(tasks);

  ExchangeSide side = spec.exchange_on;
  if (side == ExchangeSide::automatic) {
    switch (topology) {
      case Topology::multimodal:
      case Topology::cycle:
        side = ExchangeSide::encoder;
        break;
      case Topology::multitask:
        side = ExchangeSide::decoder;
        break;
      case Topology::mm_mt:
        side = ExchangeSide::both;
        break;
    }
  }
  model.encoder_exchange = side == ExchangeSide::encoder || side == ExchangeSide::both;
  model.decoder_exchange = side == ExchangeSide::decoder || side == ExchangeSide::both;
  if (topology == Topology::multitask && model.encoder_exchange)
    throw ConfigError("multitask topology shares one encoder; encoder exchange is not available");
  if (options.fusion == Fusion::concat && model.decoder_exchange)
    throw ConfigError("concat fusion is only available on the encoder side");

  // Streams and their storage.
  const bool share_convs = options.share_convs;
  auto add_stream = [&](std::size_t modality, std::size_t task) {
    StreamRoute r;
    r.modality = modality;
    r.task = task;
    model.streams.push_back(r);
  };
  switch (topology) {
    case Topology::multimodal:
    case Topology::mm_mt:
      for (std::size_t t = 0; t < model.num_tasks; ++t)
        for (std::size_t m = 0; m < model.num_modalities; ++m) add_stream(m, t);
      break;
    case Topology::cycle:
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t m = 0; m < 3; ++m)
          if (m != t) add_stream(m, t);
      break;
    case Topology::multitask:
      for (std::size_t t = 0; t < model.num_tasks; ++t) add_stream(0, t);
      break;
  }

  // Convolution sets.
  const std::size_t n_streams = model.streams.size();
  if (share_convs || topology == Topology::multitask) {
    model.encoder_convs.push_back(make_encoder_set<T>(spec, seed, 0));
  } else {
    for (std::size_t s = 0; s < n_streams; ++s) {
      model.encoder_convs.push_back(make_encoder_set<T>(spec, seed, s));
      model.streams[s].encoder_convs = s;
    }
  }
  auto decoder_out = [&](std::size_t task) { return model.tasks[task].out_channels; };
  switch (topology) {
    case Topology::multimodal:
      if (share_convs) {
        model.decoder_convs.push_back(make_decoder_set<T>(spec, seed, 0, decoder_out(0)));
      } else {
        for (std::size_t s = 0; s < n_streams; ++s) {
          model.decoder_convs.push_back(make_decoder_set<T>(spec, seed, s, decoder_out(0)));
          model.streams[s].decoder_convs = s;
        }
      }
      break;
    case Topology::cycle:
      if (options.cycle_shared_decoder) {
        for (std::size_t t = 1; t < 3; ++t)
          if (model.tasks[t].out_channels != model.tasks[0].out_channels ||
              model.tasks[t].loss != model.tasks[0].loss)
            throw ConfigError("a shared cycle decoder needs identical task specs");
        model.decoder_convs.push_back(make_decoder_set<T>(spec, seed, 0, decoder_out(0)));
      } else {
        for (std::size_t t = 0; t < 3; ++t)
          model.decoder_convs.push_back(make_decoder_set<T>(spec, seed, t, decoder_out(t)));
        for (auto& r : model.streams) r.decoder_convs = r.task;
      }
      break;
    case Topology::multitask:
    case Topology::mm_mt:
      for (std::size_t t = 0; t < model.num_tasks; ++t)
        model.decoder_convs.push_back(make_decoder_set<T>(spec, seed, t, decoder_out(t)));
      for (auto& r : model.streams) r.decoder_convs = r.task;
      break;
  }

  // Normalization banks.
  if (options.share_norms) {
    model.shared_bank = make_bank<T>({0, 0}, all_ch, spec.norm_mode);
    for (auto& r : model.streams) {
      r.encoder_norms = NormRef{true, 0};
      r.decoder_norms = NormRef{true, 0};
      r.encoder_norm_offset = 0;
      r.decoder_norm_offset = L;
    }
  } else if (topology == Topology::multitask) {
    model.shared_bank = make_bank<T>({0, 0}, enc_ch, spec.norm_mode);
    for (std::size_t s = 0; s < n_streams; ++s) {
      auto& r = model.streams[s];
      model.banks.push_back(make_bank<T>({r.modality, r.task}, dec_ch, spec.norm_mode));
      r.encoder_norms = NormRef{true, 0};
      r.encoder_norm_offset = 0;
      r.decoder_norms = NormRef{false, s};
      r.decoder_norm_offset = 0;
    }
  } else {
    for (std::size_t s = 0; s < n_streams; ++s) {
      auto& r = model.streams[s];
      model.banks.push_back(make_bank<T>({r.modality, r.task}, all_ch, spec.norm_mode));
      r.encoder_norms = NormRef{false, s};
      r.decoder_norms = NormRef{false, s};
      r.encoder_norm_offset = 0;
      r.decoder_norm_offset = L;
    }
  }

  // Concat fusion convs: one set shared by the group, or one per stream.
  if (options.fusion == Fusion::concat && model.encoder_exchange && model.num_inputs >= 2) {
    if (share_convs) {
      model.fusion_convs.push_back(make_fusion_set<T>(spec, seed, 0, model.num_inputs));
      for (auto& r : model.streams) r.fusion_convs = 0;
    } else {
      for (std::size_t s = 0; s < n_streams; ++s) {
        model.fusion_convs.push_back(make_fusion_set<T>(spec, seed, s, model.num_inputs));
        model.streams[s].fusion_convs = s;
      }
    }
  }

  for (std::size_t t = 0; t < model.num_tasks; ++t)
    model.score_logits.push_back(Tensor<T>::parameter(
        {model.task_streams(t).size()}, std::vector<T>(model.task_streams(t).size(), T(0))));

  // Every exchange site must be partitionable among its group.
  if (options.fusion == Fusion::exchange) {
    if (model.encoder_exchange)
      for (const auto& g : encoder_groups(model)) {
        const auto plan = site_plan(model, g.members.size());
        for (auto c : enc_ch) plan.validate(c);
      }
    if (model.decoder_exchange)
      for (const auto& g : decoder_groups(model)) {
        const auto plan = site_plan(model, g.members.size());
        for (auto c : dec_ch) plan.validate(c);
      }
  }
  return model;
}

template <typename T>
std::vector<T> decision_scores(const ModelAssembly<T>& model, std::size_t task) {
  if (task >= model.score_logits.size())
    throw ValidationError("task index " + std::to_string(task) + " out of range (" +
                          std::to_string(model.score_logits.size()) + " tasks)");
  auto alpha = softmax(model.score_logits[task].detach());
  return {alpha.values().begin(), alpha.values().end()};
}

template <typename T>
Tensor<T> ensemble(std::span<const Tensor<T>> predictions, const Tensor<T>& logits) {
  if (predictions.empty() || predictions.size() != logits.numel())
    throw DimensionError("ensemble needs one logit per prediction");
  auto alpha = softmax(logits);
  Tensor<T> acc;
  for (std::size_t m = 0; m < predictions.size(); ++m) {
    auto term = mul(predictions[m], pick(alpha, m));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

template <typename T>
Tensor<T> task_loss(TaskLoss kind, const Tensor<T>& prediction, const Tensor<T>& target) {
  if (kind == TaskLoss::regression) return mse_loss(prediction, target);
  if (prediction.rank() != 4 || target.rank() != 4 || target.dim(1) != 1 ||
      target.dim(0) != prediction.dim(0) || target.dim(2) != prediction.dim(2) ||
      target.dim(3) != prediction.dim(3))
    throw DimensionError("segmentation target must be [N,1,H,W] matching logits " +
                         shape_str(prediction.shape()) + ", got " + shape_str(target.shape()));
  std::vector<std::int32_t> labels(target.numel());
  const auto tv = target.values();
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<std::int32_t>(std::lround(tv[i]));
  return cross_entropy_pixelwise(prediction, std::span<const std::int32_t>(labels));
}

namespace {

// Forward pass over a subset of streams. inputs[i] feeds streams[i].
template <typename T>
ForwardResult<T> run_streams(ModelAssembly<T>& model, const std::vector<std::size_t>& ids,
                             const std::vector<Tensor<T>>& inputs, bool training) {
  const auto& spec = model.spec;
  std::size_t down = 1;
  for (const auto& st : spec.encoder) down *= st.stride;
  std::size_t up = spec.head_upsample;
  for (const auto& st : spec.decoder) up *= st.upsample;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& x = inputs[i];
    if (x.rank() != 4)
      throw DimensionError("model input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (x.dim(1) != spec.in_channels)
      throw DimensionError("model input axis 1 (channels) is " + std::to_string(x.dim(1)) +
                           ", expected " + std::to_string(spec.in_channels));
    if (x.dim(2) % down != 0 || x.dim(3) % down != 0 || down != up)
      throw DimensionError("input spatial size " + shape_str(x.shape()) +
                           " must be divisible by the encoder stride product " +
                           std::to_string(down) + " and match the decoder upsampling");
    if (x.shape() != inputs[0].shape())
      throw DimensionError("all stream inputs must share one shape");
  }
  if (training) ++model.forward_counter;
  const std::uint64_t counter = model.forward_counter;

  // Encoder lanes: streams that read the same input through the same convs
  // and encoder norms are computed once.
  struct Lane {
    std::size_t modality, convs, offset, task;
    NormRef norms;
    std::vector<std::size_t> members;  // positions in ids
    Tensor<T> h;
  };
  std::vector<Lane> lanes;
  std::vector<std::size_t> lane_of(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& r = model.streams[ids[i]];
    std::size_t found = lanes.size();
    for (std::size_t k = 0; k < lanes.size(); ++k) {
      const auto& ln = lanes[k];
      if (ln.modality == r.modality && ln.convs == r.encoder_convs &&
          ln.offset == r.encoder_norm_offset && norm_ref_equal(ln.norms, r.encoder_norms) &&
          inputs[ln.members.front()].impl() == inputs[i].impl()) {
        found = k;
        break;
      }
    }
    if (found == lanes.size())
      lanes.push_back({r.modality, r.encoder_convs, r.encoder_norm_offset, r.task,
                       r.encoder_norms, {}, inputs[i]});
    lanes[found].members.push_back(i);
    lane_of[i] = found;
  }

  ForwardResult<T> result;
  const auto fusion = model.options.fusion;

  // Fuses the tensors of one group in place.
  auto fuse = [&](std::vector<Tensor<T>>& xs, const std::vector<std::span<const T>>& gammas,
                  bool decoder, std::size_t layer, std::size_t group,
                  const std::vector<std::size_t>& stream_ids,
                  const std::vector<const ConvLayer<T>*>& fusion_layers) {
    const std::size_t g = xs.size();
    switch (fusion) {
      case Fusion::none:
        return;
      case Fusion::average: {
        Tensor<T> acc = xs[0];
        for (std::size_t k = 1; k < g; ++k) acc = add(acc, xs[k]);
        acc = scale(acc, T(1) / static_cast<T>(g));
        for (auto& x : xs) x = acc;
        return;
      }
      case Fusion::concat: {
        std::vector<Tensor<T>> out;
        for (std::size_t k = 0; k < g; ++k) {
          std::vector<Tensor<T>> parts{xs[k]};
          for (std::size_t j = 0; j < g; ++j)
            if (j != k) parts.push_back(xs[j]);
          auto cat = concat_channels(std::span<const Tensor<T>>(parts));
          out.push_back(apply_conv(cat, *fusion_layers[k]));
        }
        xs = std::move(out);
        return;
      }
      case Fusion::exchange: {
        const auto plan = site_plan(model, g);
        ExchangeVariant variant = model.options.variant;
        const std::uint64_t site_tag = (decoder ? 1ULL << 40 : 0) | (layer << 20) | group;
        variant.seed = derive(derive(variant.seed, counter), site_tag);
        auto mask = variant_mask(std::span<const std::span<const T>>(gammas), plan, variant);
        std::span<const Tensor<T>> view(xs);
        xs = variant.kind == VariantKind::zero_out ? zero_out(view, mask)
                                                   : channel_exchange(view, mask);
        result.sites.push_back({decoder, layer, group, stream_ids, std::move(mask)});
        return;
      }
    }
  };

  // Encoder.
  const bool enc_fuse = model.encoder_exchange && fusion != Fusion::none;
  for (std::size_t l = 0; l < spec.encoder.size(); ++l) {
    for (auto& ln : lanes) {
      const auto& conv = model.encoder_convs[ln.convs].layers[l];
      ln.h = norm_forward(apply_conv(ln.h, conv),
                          model.bank(ln.norms).layers.at(ln.offset + l), training);
    }
    if (enc_fuse) {
      std::map<std::size_t, std::vector<std::size_t>> by_task;
      for (std::size_t k = 0; k < lanes.size(); ++k) by_task[lanes[k].task].push_back(k);
      for (auto& [task, members] : by_task) {
        if (members.size() < 2) continue;
        std::vector<Tensor<T>> xs;
        std::vector<std::span<const T>> gammas;
        std::vector<std::size_t> stream_ids;
        std::vector<const ConvLayer<T>*> fl;
        for (auto k : members) {
          const auto& ln = lanes[k];
          xs.push_back(ln.h);
          gammas.push_back(model.bank(ln.norms).layers.at(ln.offset + l).gamma.values());
          const auto sid = ids[ln.members.front()];
          stream_ids.push_back(sid);
          const auto& fc = model.streams[sid].fusion_convs;
          fl.push_back(fc ? &model.fusion_convs[*fc].layers[l] : nullptr);
        }
        if (fusion == Fusion::concat && fl.front() == nullptr)
          throw ConfigError("concat fusion convs are missing for this group");
        fuse(xs, gammas, false, l, task, stream_ids, fl);
        for (std::size_t k = 0; k < members.size(); ++k) lanes[members[k]].h = xs[k];
      }
    }
    for (auto& ln : lanes) ln.h = relu(ln.h);
  }

  // Decoder, per stream.
  std::vector<Tensor<T>> h(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) h[i] = lanes[lane_of[i]].h;
  const bool dec_fuse = model.decoder_exchange && fusion != Fusion::none;
  for (std::size_t l = 0; l < spec.decoder.size(); ++l) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& r = model.streams[ids[i]];
      const auto& conv = model.decoder_convs[r.decoder_convs].layers[l];
      auto x = spec.decoder[l].upsample > 1 ? upsample_nearest(h[i], spec.decoder[l].upsample)
                                            : h[i];
      h[i] = norm_forward(apply_conv(x, conv),
                          model.bank(r.decoder_norms).layers.at(r.decoder_norm_offset + l),
                          training);
    }
    if (dec_fuse) {
      std::map<std::size_t, std::vector<std::size_t>> by_modality;
      for (std::size_t i = 0; i < ids.size(); ++i)
        by_modality[model.streams[ids[i]].modality].push_back(i);
      for (auto& [modality, members] : by_modality) {
        if (members.size() < 2) continue;
        std::vector<Tensor<T>> xs;
        std::vector<std::span<const T>> gammas;
        std::vector<std::size_t> stream_ids;
        for (auto i : members) {
          const auto& r = model.streams[ids[i]];
          xs.push_back(h[i]);
          gammas.push_back(
              model.bank(r.decoder_norms).layers.at(r.decoder_norm_offset + l).gamma.values());
          stream_ids.push_back(ids[i]);
        }
        fuse(xs, gammas, true, l, modality, stream_ids, {});
        for (std::size_t k = 0; k < members.size(); ++k) h[members[k]] = xs[k];
      }
    }
    for (auto& x : h) x = relu(x);
  }

  std::vector<Tensor<T>> preds(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& r = model.streams[ids[i]];
    const auto& head = model.decoder_convs[r.decoder_convs].layers.back();
    auto x = spec.head_upsample > 1 ? upsample_nearest(h[i], spec.head_upsample) : h[i];
    preds[i] = apply_conv(x, head);
  }

  for (std::size_t t = 0; t < model.num_tasks; ++t) {
    TaskOutput<T> out;
    out.task = t;
    for (auto sid : model.task_streams(t)) {
      auto it = std::find(ids.begin(), ids.end(), sid);
      if (it == ids.end()) continue;
      out.streams.push_back(sid);
      out.predictions.push_back(preds[static_cast<std::size_t>(it - ids.begin())]);
    }
    if (out.streams.empty()) continue;
    if (out.streams.size() != model.task_streams(t).size())
      throw ContractError("a task was evaluated with only part of its streams");
    out.ensemble =
        ensemble(std::span<const Tensor<T>>(out.predictions), model.score_logits[t]);
    result.tasks.push_back(std::move(out));
  }
  return result;
}

}  // namespace

template <typename T>
ForwardResult<T> forward_all(ModelAssembly<T>& model, std::span<const Tensor<T>> modality_inputs,
                             bool training) {
  if (modality_inputs.size() != model.num_modalities)
    throw ValidationError("model expects " + std::to_string(model.num_modalities) +
                          " modality inputs, got " + std::to_string(modality_inputs.size()));
  std::vector<std::size_t> ids;
  std::vector<Tensor<T>> inputs;
  for (std::size_t s = 0; s < model.streams.size(); ++s) {
    ids.push_back(s);
    inputs.push_back(modality_inputs[model.streams[s].modality]);
  }
  return run_streams(model, ids, inputs, training);
}

template <typename T>
TaskOutput<T> forward(ModelAssembly<T>& model, std::span<const Tensor<T>> task_inputs,
                      std::size_t task, bool training) {
  if (task >= model.num_tasks)
    throw ValidationError("task index " + std::to_string(task) + " out of range (" +
                          std::to_string(model.num_tasks) + " tasks)");
  const auto ids = model.task_streams(task);
  if (task_inputs.size() != ids.size())
    throw ValidationError("task " + std::to_string(task) + " has " + std::to_string(ids.size()) +
                          " streams, got " + std::to_string(task_inputs.size()) + " inputs");
  if (model.topology == Topology::multitask || model.topology == Topology::mm_mt) {
    // Stream inputs of one task are the modality inputs in modality order.
    std::vector<Tensor<T>> by_modality(model.num_modalities);
    for (std::size_t k = 0; k < ids.size(); ++k)
      by_modality[model.streams[ids[k]].modality] = task_inputs[k];
    auto all = forward_all(model, std::span<const Tensor<T>>(by_modality), training);
    for (auto& out : all.tasks)
      if (out.task == task) return std::move(out);
    throw ContractError("forward produced no output for the requested task");
  }
  std::vector<Tensor<T>> inputs(task_inputs.begin(), task_inputs.end());
  auto res = run_streams(model, ids, inputs, training);
  return std::move(res.tasks.front());
}

template <typename T>
void update_decision_scores(ModelAssembly<T>& model, std::span<const TaskOutput<T>> outputs,
                            std::span<const Tensor<T>> targets, T learning_rate) {
  if (outputs.size() != targets.size())
    throw ValidationError("update_decision_scores needs one target per task output");
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const auto& out = outputs[k];
    if (out.task >= model.score_logits.size())
      throw ValidationError("task index " + std::to_string(out.task) + " out of range");
    auto& logits = model.score_logits[out.task];
    std::vector<Tensor<T>> frozen;
    for (const auto& p : out.predictions) frozen.push_back(p.detach());
    logits.clear_grad();
    auto ens = ensemble(std::span<const Tensor<T>>(frozen), logits);
    auto loss = task_loss(model.tasks[out.task].loss, ens, targets[k]);
    backward(loss);
    auto v = logits.mutable_values();
    const auto g = logits.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * g[i];
    logits.clear_grad();
  }
}

template <typename T>
ParameterCounts count_parameters(const ModelAssembly<T>& model) {
  ParameterCounts counts;
  for (const auto& p : model.parameters()) {
    const auto n = p.tensor.numel();
    switch (p.role) {
      case ParamRole::conv_weight:
      case ParamRole::conv_bias:
        (p.side == ParamSide::encoder ? counts.encoder_convs : counts.decoder_convs) += n;
        break;
      case ParamRole::fusion_weight:
      case ParamRole::fusion_bias:
        counts.fusion += n;
        break;
      case ParamRole::norm_gamma:
      case ParamRole::norm_beta:
        counts.norms += n;
        break;
      case ParamRole::score_logit:
        counts.scores += n;
        break;
    }
  }
  return counts;
}

template <typename T>
std::size_t count_norm_sets(const ModelAssembly<T>& model) {
  return model.banks.size();
}

template <typename T>
std::uint64_t subnetwork_checksum(const ModelAssembly<T>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : model.parameters()) {
    if (p.role == ParamRole::score_logit) continue;
    const auto v = p.tensor.values();
    mix(v.data(), v.size() * sizeof(T));
  }
  auto& mutable_model = const_cast<ModelAssembly<T>&>(model);
  for (const auto& n : mutable_model.norm_layers()) {
    mix(n.params->running_mean.data(), n.params->running_mean.size() * sizeof(T));
    mix(n.params->running_var.data(), n.params->running_var.size() * sizeof(T));
  }
  return h;
}

template <typename T>
std::vector<SiteGammas<T>> exchange_sites(const ModelAssembly<T>& model) {
  std::vector<SiteGammas<T>> sites;
  if (model.options.fusion != Fusion::exchange) return sites;
  auto collect = [&](bool decoder, const std::vector<Group>& groups, std::size_t layers) {
    for (std::size_t l = 0; l < layers; ++l)
      for (const auto& g : groups) {
        // Streams sharing one lane (same encoder norms) form one row.
        SiteGammas<T> site;
        site.decoder = decoder;
        site.layer = l;
        site.group = g.id;
        std::vector<const NormParams<T>*> seen;
        for (auto s : g.members) {
          const auto& np = decoder ? decoder_norm(model, s, l) : encoder_norm(model, s, l);
          if (std::find(seen.begin(), seen.end(), &np) != seen.end()) continue;
          seen.push_back(&np);
          site.streams.push_back(s);
          site.gammas.emplace_back(np.gamma.values().begin(), np.gamma.values().end());
        }
        if (site.streams.size() < 2) continue;
        const auto plan = site_plan(model, site.streams.size());
        for (std::size_t k = 0; k < site.streams.size(); ++k)
          site.regions.push_back(plan.region(k, site.gammas[k].size()));
        sites.push_back(std::move(site));
      }
  };
  if (model.encoder_exchange) collect(false, encoder_groups(model), model.encoder_layers());
  if (model.decoder_exchange) collect(true, decoder_groups(model), model.decoder_layers());
  return sites;
}

template <typename T>
std::vector<SparsityTerm<T>> sparsity_terms(const ModelAssembly<T>& model) {
  std::vector<SparsityTerm<T>> terms;
  if (model.options.fusion != Fusion::exchange) return terms;
  auto collect = [&](bool decoder, const std::vector<Group>& groups, std::size_t layers) {
    for (std::size_t l = 0; l < layers; ++l)
      for (const auto& g : groups) {
        std::vector<const NormParams<T>*> seen;
        for (auto s : g.members) {
          const auto& np = decoder ? decoder_norm(model, s, l) : encoder_norm(model, s, l);
          if (std::find(seen.begin(), seen.end(), &np) == seen.end()) seen.push_back(&np);
        }
        if (seen.size() < 2) continue;
        const auto plan = site_plan(model, seen.size());
        for (std::size_t k = 0; k < seen.size(); ++k)
          terms.push_back({seen[k]->gamma, plan.region(k, seen[k]->channels())});
      }
  };
  if (model.encoder_exchange) collect(false, encoder_groups(model), model.encoder_layers());
  if (model.decoder_exchange) collect(true, decoder_groups(model), model.decoder_layers());
  return terms;
}

#define CEN_INSTANTIATE_MODELS(T)                                                              \
  template struct ModelAssembly<T>;                                                            \
  template ModelAssembly<T> build_model(const NetSpec&, Topology, std::size_t, std::size_t,    \
                                        std::vector<TaskSpec>, const AssemblyOptions&);        \
  template std::vector<T> decision_scores(const ModelAssembly<T>&, std::size_t);               \
  template ForwardResult<T> forward_all(ModelAssembly<T>&, std::span<const Tensor<T>>, bool);  \
  template TaskOutput<T> forward(ModelAssembly<T>&, std::span<const Tensor<T>>, std::size_t,   \
                                 bool);                                                        \
  template Tensor<T> ensemble(std::span<const Tensor<T>>, const Tensor<T>&);                   \
  template Tensor<T> task_loss(TaskLoss, const Tensor<T>&, const Tensor<T>&);                  \
  template void update_decision_scores(ModelAssembly<T>&, std::span<const TaskOutput<T>>,      \
                                       std::span<const Tensor<T>>, T);                         \
  template ParameterCounts count_parameters(const ModelAssembly<T>&);                          \
  template std::size_t count_norm_sets(const ModelAssembly<T>&);                               \
  template std::uint64_t subnetwork_checksum(const ModelAssembly<T>&);                         \
  template std::vector<SiteGammas<T>> exchange_sites(const ModelAssembly<T>&);                 \
  template std::vector<SparsityTerm<T>> sparsity_terms(const ModelAssembly<T>&);

CEN_INSTANTIATE_MODELS(float)
CEN_INSTANTIATE_MODELS(double)

}  // namespace cen
