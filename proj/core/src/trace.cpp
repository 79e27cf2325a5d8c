// SPDX-License-Identifier: Apache-2.0
#include "cen/trace.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace cen {

namespace {

bool is_low(double gamma, ThresholdRule rule, double theta) {
  return rule == ThresholdRule::magnitude ? std::abs(gamma) <= theta : gamma <= theta;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

template <typename T>
ChannelTrace record_trace(const ModelAssembly<T>& model, std::uint64_t step) {
  ChannelTrace trace;
  const double theta = model.options.theta;
  const auto rule = model.options.rule;
  for (const auto& site : exchange_sites(model)) {
    const std::string layer = (site.decoder ? "dec" : "enc") + std::to_string(site.layer);
    const std::size_t g = site.streams.size();
    for (std::size_t k = 0; k < g; ++k) {
      const auto& gam = site.gammas[k];
      std::vector<bool> in_region(gam.size(), false);
      for (auto c : site.regions[k]) in_region[c] = true;
      TraceSummaryRow sum{step, layer, site.group, site.streams[k], 0, 0, 0, 0, 0};
      std::size_t replaced = 0;
      for (std::size_t c = 0; c < gam.size(); ++c) {
        const bool own_low = is_low(gam[c], rule, theta);
        const bool rep = in_region[c] && own_low;
        trace.rows.push_back({step, layer, site.group, site.streams[k], c, gam[c], rep});
        if (!in_region[c]) continue;
        replaced += rep ? 1 : 0;
        bool other_high = false;
        for (std::size_t j = 0; j < g; ++j)
          if (j != k && !is_low(site.gammas[j][c], rule, theta))
            other_high = true;
        if (own_low && other_high) ++sum.cat_a;
        else if (!own_low && !other_high) ++sum.cat_b;
        else if (!own_low && other_high) ++sum.cat_c;
        else ++sum.cat_d;
      }
      sum.exchanged_fraction =
          site.regions[k].empty() ? 0.0
                                  : static_cast<double>(replaced) /
                                        static_cast<double>(site.regions[k].size());
      trace.summary.push_back(sum);
    }
  }
  return trace;
}

std::map<std::string, double> layer_fractions(const ChannelTrace& trace) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> acc;
  for (const auto& s : trace.summary) {
    const std::size_t region = s.cat_a + s.cat_b + s.cat_c + s.cat_d;
    auto& [rep, tot] = acc[s.layer];
    rep += static_cast<std::size_t>(std::lround(s.exchanged_fraction * static_cast<double>(region)));
    tot += region;
  }
  std::map<std::string, double> out;
  for (const auto& [layer, v] : acc)
    out[layer] = v.second ? static_cast<double>(v.first) / static_cast<double>(v.second) : 0.0;
  return out;
}

void write_trace_header(std::ostream& out) {
  out << "step,layer,group,stream,channel,gamma,replaced\n";
}

void write_trace_rows(std::ostream& out, const ChannelTrace& trace) {
  for (const auto& r : trace.rows)
    out << r.step << ',' << r.layer << ',' << r.group << ',' << r.stream << ',' << r.channel
        << ',' << fmt(r.gamma) << ',' << (r.replaced ? 1 : 0) << '\n';
}

void write_summary_header(std::ostream& out) {
  out << "step,layer,group,stream,exchanged_fraction,cat_a,cat_b,cat_c,cat_d\n";
}

void write_summary_rows(std::ostream& out, const ChannelTrace& trace) {
  for (const auto& s : trace.summary)
    out << s.step << ',' << s.layer << ',' << s.group << ',' << s.stream << ','
        << fmt(s.exchanged_fraction) << ',' << s.cat_a << ',' << s.cat_b << ',' << s.cat_c << ','
        << s.cat_d << '\n';
}

void RecoveryTracker::observe(const ChannelTrace& trace) {
  // Only in-region channels can carry the replaced flag.
  for (const auto& r : trace.rows) {
    const Key key{r.layer, r.group, r.stream, r.channel};
    auto it = fallen_.find(key);
    if (it != fallen_.end()) {
      if (std::abs(r.gamma) > 2.0 * theta_) it->second = true;
      continue;
    }
    if (r.step >= start_ && r.replaced) fallen_.emplace(key, false);
  }
}

std::size_t RecoveryTracker::recovered() const {
  std::size_t n = 0;
  for (const auto& [key, rec] : fallen_) n += rec ? 1 : 0;
  return n;
}

double RecoveryTracker::recovery_rate() const {
  return fallen_.empty() ? 0.0
                         : static_cast<double>(recovered()) / static_cast<double>(fallen_.size());
}

template ChannelTrace record_trace(const ModelAssembly<float>&, std::uint64_t);
template ChannelTrace record_trace(const ModelAssembly<double>&, std::uint64_t);

}  // namespace cen
