// SPDX-License-Identifier: Apache-2.0
//
// Scaling-factor traces at exchange sites.
//
// A channel of a stream's region is "low" when its scaling factor passes the
// exchange threshold rule. Per region the summary counts, against the other
// streams of the group at the same channel (other is high if any other
// stream's factor is high):
//   A: own low,  other high      B: own high, other low
//   C: both high                 D: both low
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "cen/models.hpp"

namespace cen {

struct TraceRow {
  std::uint64_t step = 0;
  std::string layer;  // "enc<l>" or "dec<l>"
  std::size_t group = 0;
  std::size_t stream = 0;
  std::size_t channel = 0;
  double gamma = 0;
  bool replaced = false;
};

struct TraceSummaryRow {
  std::uint64_t step = 0;
  std::string layer;
  std::size_t group = 0;
  std::size_t stream = 0;
  double exchanged_fraction = 0;
  std::size_t cat_a = 0, cat_b = 0, cat_c = 0, cat_d = 0;
};

struct ChannelTrace {
  std::vector<TraceRow> rows;
  std::vector<TraceSummaryRow> summary;
};

template <typename T>
ChannelTrace record_trace(const ModelAssembly<T>& model, std::uint64_t step);

/// Replaced over eligible channels across every site, per layer name.
std::map<std::string, double> layer_fractions(const ChannelTrace& trace);

void write_trace_header(std::ostream& out);
void write_trace_rows(std::ostream& out, const ChannelTrace& trace);
void write_summary_header(std::ostream& out);
void write_summary_rows(std::ostream& out, const ChannelTrace& trace);

/// Follows in-region factors that drop below θ at or after `start_step`
/// and counts how many later exceed 2θ.
class RecoveryTracker {
 public:
  RecoveryTracker(double theta, std::uint64_t start_step) : theta_(theta), start_(start_step) {}

  void observe(const ChannelTrace& trace);
  std::size_t fallen() const { return fallen_.size(); }
  std::size_t recovered() const;
  double recovery_rate() const;

 private:
  using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t>;
  double theta_;
  std::uint64_t start_;
  std::map<Key, bool> fallen_;  // value: recovered
};

}  // namespace cen
