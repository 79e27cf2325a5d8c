// SPDX-License-Identifier: Apache-2.0
#include "cen/checkpoint.hpp"

#include <map>

#include "binio.hpp"
#include "cen/error.hpp"

namespace cen {

namespace {

constexpr std::string_view kCheckpointMagic = "CENCKPT1";
constexpr std::uint32_t kVersion = 1;

template <typename T>
struct Entry {
  std::string name;
  Shape shape;
  std::vector<T> values;
};

template <typename T>
std::vector<Entry<T>> collect(const ModelAssembly<T>& model, const Sgd<T>& optimizer) {
  std::vector<Entry<T>> out;
  for (const auto& p : model.parameters())
    out.push_back({"param:" + p.name, p.tensor.shape(),
                   {p.tensor.values().begin(), p.tensor.values().end()}});
  for (const auto& s : optimizer.slots())
    if (!s.buffer.empty()) out.push_back({"momentum:" + s.name, s.param.shape(), s.buffer});
  auto& mutable_model = const_cast<ModelAssembly<T>&>(model);
  for (const auto& n : mutable_model.norm_layers()) {
    const Shape shape{n.params->channels()};
    out.push_back({"running_mean:" + n.name, shape, n.params->running_mean});
    out.push_back({"running_var:" + n.name, shape, n.params->running_var});
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ModelAssembly<T>& model, const Sgd<T>& optimizer,
                                               std::uint64_t step, const std::string& config_echo) {
  detail::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(sizeof(T)));
  w.str(config_echo);
  w.u64(step);
  w.u64(model.forward_counter);
  const auto entries = collect(model, optimizer);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u64(d);
    w.u64(e.values.size());
    w.array(std::span<const T>(e.values));
  }
  return std::move(w.bytes());
}

template <typename T>
CheckpointInfo restore_checkpoint(std::span<const std::uint8_t> bytes, ModelAssembly<T>& model,
                                  Sgd<T>& optimizer) {
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u32();
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto width = r.u32();
  if (width != sizeof(T))
    throw FormatError("checkpoint: stored scalars are " + std::to_string(width) +
                      " bytes, model uses " + std::to_string(sizeof(T)));
  CheckpointInfo info;
  info.config_echo = r.str();
  info.step = r.u64();
  info.forward_counter = r.u64();
  const auto count = r.u32();
  std::map<std::string, Entry<T>> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry<T> e;
    e.name = r.str(4096);
    const auto rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: entry '" + e.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(static_cast<std::size_t>(r.u64()));
    const auto n = r.u64();
    if (n != shape_numel(e.shape))
      throw FormatError("checkpoint: entry '" + e.name + "' length disagrees with its shape");
    e.values = r.array<T>(static_cast<std::size_t>(n));
    if (!stored.emplace(e.name, e).second)
      throw FormatError("checkpoint: duplicate entry '" + e.name + "'");
  }
  r.expect_end();

  auto take = [&](const std::string& name, const Shape& shape) -> std::vector<T>& {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint: missing entry '" + name + "'");
    if (it->second.shape != shape)
      throw FormatError("checkpoint: entry '" + name + "' has shape " +
                        shape_str(it->second.shape) + ", model expects " + shape_str(shape));
    return it->second.values;
  };
  // Validate everything before mutating the model.
  for (const auto& p : model.parameters()) take("param:" + p.name, p.tensor.shape());
  for (const auto& n : model.norm_layers()) {
    take("running_mean:" + n.name, {n.params->channels()});
    take("running_var:" + n.name, {n.params->channels()});
  }
  std::size_t expected = model.parameters().size() + 2 * model.norm_layers().size();
  for (const auto& s : optimizer.slots())
    if (stored.count("momentum:" + s.name)) {
      take("momentum:" + s.name, s.param.shape());
      ++expected;
    }
  if (expected != stored.size())
    throw FormatError("checkpoint: " + std::to_string(stored.size() - expected) +
                      " entries do not belong to this model");

  for (const auto& p : model.parameters()) {
    const auto& v = take("param:" + p.name, p.tensor.shape());
    auto dst = p.tensor.impl()->values.data();
    std::copy(v.begin(), v.end(), dst);
  }
  for (const auto& n : model.norm_layers()) {
    n.params->running_mean = take("running_mean:" + n.name, {n.params->channels()});
    n.params->running_var = take("running_var:" + n.name, {n.params->channels()});
  }
  for (auto& s : optimizer.slots()) {
    auto it = stored.find("momentum:" + s.name);
    s.buffer = it == stored.end() ? std::vector<T>{} : it->second.values;
  }
  model.forward_counter = info.forward_counter;
  return info;
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const auto version = r.u32();
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointHeader h;
  h.scalar_bytes = r.u32();
  if (h.scalar_bytes != 4 && h.scalar_bytes != 8)
    throw FormatError("checkpoint: scalar width " + std::to_string(h.scalar_bytes));
  h.info.config_echo = r.str();
  h.info.step = r.u64();
  h.info.forward_counter = r.u64();
  return h;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelAssembly<T>& model,
                     const Sgd<T>& optimizer, std::uint64_t step, const std::string& config_echo) {
  const auto bytes = serialize_checkpoint(model, optimizer, step, config_echo);
  detail::write_file(path, bytes);
}

template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, ModelAssembly<T>& model,
                               Sgd<T>& optimizer) {
  const auto bytes = detail::read_file(path);
  return restore_checkpoint(std::span<const std::uint8_t>(bytes), model, optimizer);
}

#define CEN_INSTANTIATE_CHECKPOINT(T)                                                            \
  template std::vector<std::uint8_t> serialize_checkpoint(const ModelAssembly<T>&, const Sgd<T>&, \
                                                          std::uint64_t, const std::string&);    \
  template CheckpointInfo restore_checkpoint(std::span<const std::uint8_t>, ModelAssembly<T>&,   \
                                             Sgd<T>&);                                           \
  template void save_checkpoint(const std::filesystem::path&, const ModelAssembly<T>&,          \
                                const Sgd<T>&, std::uint64_t, const std::string&);               \
  template CheckpointInfo load_checkpoint(const std::filesystem::path&, ModelAssembly<T>&,       \
                                          Sgd<T>&);

CEN_INSTANTIATE_CHECKPOINT(float)
CEN_INSTANTIATE_CHECKPOINT(double)

}  // namespace cen
