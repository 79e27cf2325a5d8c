// SPDX-License-Identifier: Apache-2.0
//
// Binary training checkpoints: parameters, momentum buffers, running
// statistics, decision-score logits, counters and the configuration echo.
// A checkpoint loads into a model built from the same configuration.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cen/models.hpp"
#include "cen/optimizer.hpp"

namespace cen {

struct CheckpointInfo {
  std::uint64_t step = 0;
  std::uint64_t forward_counter = 0;
  std::string config_echo;
};

/// Header fields only (no model needed). `scalar_bytes` is 4 or 8.
struct CheckpointHeader {
  std::uint32_t scalar_bytes = 0;
  CheckpointInfo info;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ModelAssembly<T>& model, const Sgd<T>& optimizer,
                                               std::uint64_t step, const std::string& config_echo);

/// Restores state in place. Throws FormatError on bad magic, truncation,
/// scalar-width mismatch or any parameter table disagreement.
template <typename T>
CheckpointInfo restore_checkpoint(std::span<const std::uint8_t> bytes, ModelAssembly<T>& model,
                                  Sgd<T>& optimizer);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelAssembly<T>& model,
                     const Sgd<T>& optimizer, std::uint64_t step, const std::string& config_echo);

template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, ModelAssembly<T>& model,
                               Sgd<T>& optimizer);

}  // namespace cen
