// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Lines starting with '#' are supporting detail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cen/checkpoint.hpp"
#include "cen/exchange.hpp"
#include "cen/gradcheck.hpp"
#include "cen/models.hpp"
#include "cen/ops.hpp"
#include "cen/random.hpp"
#include "cen/ridge.hpp"
#include "cen/trainer.hpp"
#include "cencli/config.hpp"
#include "cencli/experiment.hpp"

using namespace cen;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<int, Outcome>> g_results;

void report(int id, const Outcome& o) {
  std::printf("CRITERION %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  g_results.emplace_back(id, o);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Tensor<double> randt(Shape shape, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor<double>::from(std::move(shape), std::move(v));
}

Tensor<double> probe(const Tensor<double>& y, std::uint64_t seed) {
  return sum_all(mul(y, randt(y.shape(), seed)));
}

// ---------------------------------------------------------------- 1
// Central differences with h = 1e-4. Smaller steps let round-off (about
// 1e-16·|f|/h) dominate small gradient components; larger steps start to
// straddle ReLU kinks.
constexpr double kFdStep = 1e-4;

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t checks = 0;
  auto check = [&](const std::string& name, const Fn& f, const Tensor<double>& x) {
    const auto r = finite_diff_check(f, x, kFdStep);
    ++checks;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::uint64_t s = 1000 * seed;
    const std::size_t stride = 1 + seed % 2, pad = seed % 3;
    auto x = randt({2, 3, 5, 5}, s + 1);
    auto w = randt({4, 3, 3, 3}, s + 2);
    auto b = randt({4}, s + 3);
    check("conv2d/input", [&](const Tensor<double>& t) { return probe(conv2d(t, w, b, {stride, pad}), s); }, x);
    check("conv2d/weight", [&](const Tensor<double>& t) { return probe(conv2d(x, t, b, {stride, pad}), s); }, w);
    check("conv2d/bias", [&](const Tensor<double>& t) { return probe(conv2d(x, w, t, {stride, pad}), s); }, b);

    auto a = randt({2, 3, 2, 2}, s + 4);
    auto o = randt({2, 3, 2, 2}, s + 5);
    auto ch = randt({3}, s + 6);
    check("add", [&](const Tensor<double>& t) { return probe(add(t, o), s); }, a);
    check("add/channel", [&](const Tensor<double>& t) { return probe(add(o, t), s); }, ch);
    check("sub", [&](const Tensor<double>& t) { return probe(sub(o, t), s); }, a);
    check("mul", [&](const Tensor<double>& t) { return probe(mul(t, o), s); }, a);
    check("mul/channel", [&](const Tensor<double>& t) { return probe(mul(o, t), s); }, ch);
    check("scale", [&](const Tensor<double>& t) { return probe(scale(t, -0.7), s); }, a);
    check("relu", [&](const Tensor<double>& t) { return probe(relu(t), s); }, a);
    check("scale_shift/x", [&](const Tensor<double>& t) { return probe(scale_shift(t, ch, ch), s); }, a);
    check("scale_shift/s", [&](const Tensor<double>& t) { return probe(scale_shift(a, t, ch), s); }, ch);
    check("sum_all", [&](const Tensor<double>& t) { return sum_all(mul(t, t)); }, a);
    check("mean_all", [&](const Tensor<double>& t) { return mean_all(mul(t, o)); }, a);
    check("upsample", [&](const Tensor<double>& t) { return probe(upsample_nearest(t, 2), s); }, a);
    check("concat", [&](const Tensor<double>& t) {
      const std::vector<Tensor<double>> parts{o, t};
      return probe(concat_channels(std::span<const Tensor<double>>(parts)), s);
    }, a);
    auto z = randt({4}, s + 7);
    check("softmax", [&](const Tensor<double>& t) { return probe(softmax(t), s); }, z);
    check("pick", [&](const Tensor<double>& t) { return pick(softmax(t), seed % 4); }, z);
    const std::vector<Tensor<double>> preds{randt({2, 1, 3, 3}, s + 8), randt({2, 1, 3, 3}, s + 9),
                                            randt({2, 1, 3, 3}, s + 10), randt({2, 1, 3, 3}, s + 11)};
    check("ensemble/logits", [&](const Tensor<double>& t) {
      return probe(ensemble(std::span<const Tensor<double>>(preds), t), s);
    }, z);
    check("mse", [&](const Tensor<double>& t) { return mse_loss(t, o); }, a);
    std::vector<std::int32_t> labels(2 * 2 * 2);
    CounterRng lr(s + 12);
    for (auto& l : labels) l = static_cast<std::int32_t>(lr.below(3));
    check("cross_entropy", [&](const Tensor<double>& t) {
      return cross_entropy_pixelwise(t, std::span<const std::int32_t>(labels));
    }, a);

    for (auto mode : {NormMode::batch, NormMode::instance}) {
      const std::string tag = mode == NormMode::batch ? "batchnorm" : "instancenorm";
      auto p = NormParams<double>::make(3, mode);
      const auto g0 = randt({3}, s + 13), b0 = randt({3}, s + 14);
      p.gamma = Tensor<double>::parameter({3}, {g0.values().begin(), g0.values().end()});
      p.beta = Tensor<double>::parameter({3}, {b0.values().begin(), b0.values().end()});
      auto xn = randt({2, 3, 3, 3}, s + 15, 2.0);
      check(tag + "/x", [&](const Tensor<double>& t) { return probe(norm_forward(t, p, true), s); }, xn);
      check(tag + "/gamma", [&](const Tensor<double>& t) {
        auto q = p;
        q.gamma = t;
        return probe(norm_forward(xn, q, true), s);
      }, p.gamma.detach());
      check(tag + "/beta", [&](const Tensor<double>& t) {
        auto q = p;
        q.beta = t;
        return probe(norm_forward(xn, q, true), s);
      }, p.beta.detach());
    }
    check("sparsity", [&](const Tensor<double>& t) {
      std::vector<SparsityTerm<double>> terms{{t, {0, 2}}};
      return sparsity_penalty(std::span<const SparsityTerm<double>>(terms), 0.01);
    }, ch);

    // Exchange donor paths for M = 2 and 3.
    for (std::size_t m : {2u, 3u}) {
      const std::size_t c = 6;
      std::vector<std::vector<double>> g(m, std::vector<double>(c, 1.0));
      CounterRng gr(s + 16 + m);
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t q = 0; q < c; ++q)
          if (gr.uniform() < 0.5) g[k][q] = 0.0;
      std::vector<std::span<const double>> views(g.begin(), g.end());
      const auto mask = compute_exchange_mask(std::span<const std::span<const double>>(views),
                                              make_plan(m, 0.02, {0}));
      std::vector<Tensor<double>> xs;
      for (std::size_t k = 0; k < m; ++k) xs.push_back(randt({1, c, 2, 2}, s + 20 + k));
      for (std::size_t k = 0; k < m; ++k)
        for (bool zero : {false, true})
          check(std::string(zero ? "zero_out" : "exchange") + "/M" + std::to_string(m),
                [&, k, zero](const Tensor<double>& t) {
                  auto in = xs;
                  in[k] = t;
                  const auto y = zero ? zero_out(std::span<const Tensor<double>>(in), mask)
                                      : channel_exchange(std::span<const Tensor<double>>(in), mask);
                  Tensor<double> acc = Tensor<double>::scalar(0.0);
                  for (std::size_t j = 0; j < m; ++j) acc = add(acc, probe(y[j], s + j));
                  return acc;
                },
                xs[k]);
    }
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = worst < 1e-6 && secs < 60.0;
  out.detail = std::to_string(checks) + " checks over 10 seeds (h = 1e-4), max relative error " +
               fmt("%.3g", worst) + " (" + worst_name + "), " + fmt("%.2f", secs) + " s";
  return out;
}

// ---------------------------------------------------------------- 2
Outcome exchange_oracle() {
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{
      {2, 4}, {2, 6}, {2, 8}, {2, 12}, {3, 6}, {3, 12}, {4, 4}, {4, 8}, {4, 12}};
  CounterRng rng(2024);
  std::size_t mismatches = 0, directed_bad = 0, detach_bad = 0, donor_bad = 0, replaced = 0;
  double worst_donor = 0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const auto [m, c] = shapes[rng.below(shapes.size())];
    const double theta = 0.02;
    std::vector<std::vector<double>> g(m, std::vector<double>(c));
    for (auto& row : g)
      for (auto& v : row) v = rng.uniform() < 0.4 ? rng.uniform(-theta, theta) : rng.uniform(-1, 1);
    std::vector<Tensor<double>> xs;
    for (std::size_t k = 0; k < m; ++k) xs.push_back(randt({2, c, 2, 3}, rng.next_u64()));
    std::vector<std::span<const double>> views(g.begin(), g.end());
    const auto plan = make_plan(m, theta, {0});
    const auto mask = compute_exchange_mask(std::span<const std::span<const double>>(views), plan);
    const auto y = channel_exchange(std::span<const Tensor<double>>(xs), mask);
    const std::size_t plane = 6, n = 2;
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t lo = k * c / m, hi = (k + 1) * c / m;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const bool in_region = ch >= lo && ch < hi;
        const bool swap = in_region && std::abs(g[k][ch]) <= theta;
        replaced += swap;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t i = (b * c + ch) * plane + p;
            double expect = xs[k].values()[i];
            if (swap) {
              double acc = 0;
              for (std::size_t d = 0; d < m; ++d)
                if (d != k) acc += xs[d].values()[i];
              expect = acc * (1.0 / static_cast<double>(m - 1));
            }
            if (y[k].values()[i] != expect) ++mismatches;
            if (!in_region && y[k].values()[i] != xs[k].values()[i]) ++directed_bad;
          }
        if (!swap) continue;
        // Finite differences of Σ y_k[ch] against every stream's input.
        for (std::size_t d = 0; d < m; ++d) {
          const std::size_t i = ch * plane;  // first pixel of sample 0
          auto eval = [&](double delta) {
            auto in = xs;
            std::vector<double> v(in[d].values().begin(), in[d].values().end());
            v[i] += delta;
            in[d] = Tensor<double>::from(in[d].shape(), v);
            return channel_exchange(std::span<const Tensor<double>>(in), mask)[k].values()[i];
          };
          const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
          const double expect = d == k ? 0.0 : 1.0 / static_cast<double>(m - 1);
          const double err = std::abs(fd - expect);
          if (d == k) {
            if (fd != 0.0) ++detach_bad;
          } else {
            worst_donor = std::max(worst_donor, err);
            if (err > 1e-8) ++donor_bad;
          }
        }
        // Analytic: zero gradient into the replaced own channel.
        auto own = Tensor<double>::parameter(xs[k].shape(), {xs[k].values().begin(), xs[k].values().end()});
        auto in = xs;
        in[k] = own;
        const auto yy = channel_exchange(std::span<const Tensor<double>>(in), mask);
        backward(sum_all(yy[k]));
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t p = 0; p < plane; ++p)
            if (own.has_grad() && own.grad()[(b * c + ch) * plane + p] != 0.0) ++detach_bad;
      }
    }
  }
  Outcome out;
  out.pass = mismatches == 0 && directed_bad == 0 && detach_bad == 0 && donor_bad == 0 && replaced > 0;
  out.detail = "100 cases, " + std::to_string(replaced) + " replaced channels, " +
               std::to_string(mismatches) + " value mismatches, " + std::to_string(directed_bad) +
               " out-of-region changes, " + std::to_string(detach_bad) + " own-gradient leaks, donor FD error " +
               fmt("%.2g", worst_donor);
  return out;
}

// ---------------------------------------------------------------- 3
Outcome structural_counts() {
  const auto t0 = Clock::now();
  const NetSpec net;
  const std::vector<TaskSpec> three(3), two(2), one(1);
  const auto cycle = build_model<double>(net, Topology::cycle, 2, 3, three);
  const auto mm_mt = build_model<double>(net, Topology::mm_mt, 2, 2, two);
  const auto pair = build_model<double>(net, Topology::multimodal, 2, 1, one);
  const auto cycle_params = count_parameters(cycle).total();
  const auto pair_params = count_parameters(pair).total();
  const double ratio = static_cast<double>(cycle_params) / (3.0 * static_cast<double>(pair_params));
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = count_norm_sets(cycle) == 6 && count_norm_sets(mm_mt) == 4 && ratio < 0.40 && secs < 1.0;
  out.detail = "cycle banks " + std::to_string(count_norm_sets(cycle)) + ", mm_mt(2,2) banks " +
               std::to_string(count_norm_sets(mm_mt)) + ", cycle params " + std::to_string(cycle_params) +
               " / (3 x " + std::to_string(pair_params) + ") = " + fmt("%.4f", ratio) + ", " +
               fmt("%.3f", secs) + " s";
  return out;
}

// ------------------------------------------------------- training runs
struct Runs {
  cencli::ExperimentConfig base;
  fs::path root;
  std::vector<Dataset> data;  // per seed
  std::map<std::pair<std::string, std::size_t>, cencli::RunResult> cache;
  std::map<std::string, double> seconds;

  const cencli::RunResult& get(const std::string& row, std::size_t seed,
                               const std::function<void(cencli::ExperimentConfig&)>& tweak = {},
                               const std::string& key_suffix = "") {
    const auto key = std::make_pair(row + key_suffix, seed);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto c = cencli::apply_row(base, row);
    c.data_seed = base.data_seed + seed;
    c.train.seed = base.train.seed + seed;
    if (tweak) tweak(c);
    const auto t0 = Clock::now();
    auto r = cencli::run_training(c, data.at(seed),
                                  root / (row + key_suffix) / ("seed" + std::to_string(seed)), row);
    seconds[row + key_suffix] += seconds_since(t0);
    std::printf("#   %-16s seed %zu  ensemble %.6g  streams", (row + key_suffix).c_str(), seed, r.ensemble_loss());
    for (const auto& s : r.metrics.tasks[0].streams) std::printf(" %.6g", s.loss);
    std::printf("  (%.1f s)\n", seconds_since(t0));
    std::fflush(stdout);
    return cache.emplace(key, std::move(r)).first->second;
  }
};

Outcome fusion_benefit(Runs& runs) {
  const auto t0 = Clock::now();
  std::size_t wins = 0, beat_uni = 0, beat_concat = 0;
  std::string per_seed;
  for (std::size_t s = 0; s < 5; ++s) {
    const double cen = runs.get("exchange", s).ensemble_loss();
    const double u0 = runs.get("unimodal-0", s).ensemble_loss();
    const double u1 = runs.get("unimodal-1", s).ensemble_loss();
    const double cc = runs.get("concat", s).ensemble_loss();
    const bool uni = cen < std::min(u0, u1), con = cen < cc;
    beat_uni += uni;
    beat_concat += con;
    wins += uni && con;
    std::printf("# c4 seed %zu: CEN %.6g  unimodal %.6g / %.6g  concat %.6g  -> %s\n", s, cen, u0, u1, cc,
                uni && con ? "win" : "loss");
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = wins >= 4;
  out.detail = "CEN beats both unimodal and concat on " + std::to_string(wins) + "/5 seeds (unimodal " +
               std::to_string(beat_uni) + "/5, concat " + std::to_string(beat_concat) + "/5), " +
               fmt("%.0f", secs) + " s";
  return out;
}

Outcome ablation_ordering(Runs& runs) {
  const auto t0 = Clock::now();
  std::size_t ex_vs_none = 0, zero_worse = 0, divided_better = 0;
  for (std::size_t s = 0; s < 5; ++s) {
    const double ex = runs.get("exchange", s).ensemble_loss();
    const double none = runs.get("no-exchange", s).ensemble_loss();
    const double zero = runs.get("zero-out", s).ensemble_loss();
    const double nodiv = runs.get("no-divide", s).ensemble_loss();
    ex_vs_none += ex <= none;
    zero_worse += zero > ex;
    divided_better += ex <= nodiv;
    std::printf("# c5 seed %zu: exchange %.6g  no-exchange %.6g  zero-out %.6g  no-divide %.6g\n", s, ex, none,
                zero, nodiv);
  }
  Outcome out;
  out.pass = ex_vs_none >= 4 && zero_worse >= 4 && divided_better >= 3;
  out.detail = "exchange <= no-exchange " + std::to_string(ex_vs_none) + "/5 (need 4), zero-out worse " +
               std::to_string(zero_worse) + "/5 (need 4), divided <= no-divide " +
               std::to_string(divided_better) + "/5 (need 3), " + fmt("%.0f", seconds_since(t0)) + " s";
  return out;
}

double max_fraction(const cencli::RunResult& r) {
  double f = 0;
  for (const auto& [layer, v] : r.fractions) f = std::max(f, v);
  return f;
}

double mean_fraction(const cencli::RunResult& r) {
  double f = 0;
  for (const auto& [layer, v] : r.fractions) f += v;
  return r.fractions.empty() ? 0.0 : f / static_cast<double>(r.fractions.size());
}

Outcome sparsity_dynamics(Runs& runs) {
  const auto t0 = Clock::now();
  const auto& main = runs.get("exchange", 0);
  const bool positive = max_fraction(main) > 0;
  std::vector<double> fractions;
  std::string listing;
  for (double lambda : {1e-4, 1e-3, 1e-2}) {
    const auto& r = runs.get("exchange", 0, [&](cencli::ExperimentConfig& c) { c.train.lambda = lambda; },
                             "@lambda=" + cencli::format_number(lambda));
    fractions.push_back(mean_fraction(r));
    listing += (listing.empty() ? "" : ", ") + cencli::format_number(lambda) + ":" + fmt("%.4f", fractions.back());
  }
  const bool monotone = fractions[0] <= fractions[1] && fractions[1] <= fractions[2];
  const double rate = main.fallen ? static_cast<double>(main.recovered) / static_cast<double>(main.fallen) : 0.0;
  const bool holds = rate < 0.05;
  Outcome out;
  out.pass = positive && monotone && holds;
  out.detail = "final max exchanged fraction " + fmt("%.4f", max_fraction(main)) +
               "; mean fraction by lambda {" + listing + "} " + (monotone ? "non-decreasing" : "NOT monotone") +
               "; recovery " + std::to_string(main.recovered) + "/" + std::to_string(main.fallen) + " = " +
               fmt("%.4f", rate) + ", " + fmt("%.0f", seconds_since(t0)) + " s";
  return out;
}

Outcome decision_scores_check(const Dataset& data) {
  AssemblyOptions opt;
  NetSpec net;
  auto model = build_model<double>(net, Topology::multimodal, 2, 1, task_specs(data), opt);
  TrainConfig config;
  config.epochs = 2;
  config.lambda = 5e-3;
  config.theta = 2e-2;
  config.lr_scores = 0.5;  // large steps stress the simplex
  Trainer<double> trainer(model, config);
  double worst = 0;
  std::size_t negatives = 0;
  auto inspect = [&] {
    for (std::size_t t = 0; t < model.num_tasks; ++t) {
      const auto a = decision_scores(model, t);
      worst = std::max(worst, std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0));
      for (double v : a) negatives += v < 0;
    }
  };
  std::size_t steps = 0;
  trainer.fit(data, [&](const StepRecord&) {
    inspect();
    ++steps;
  });
  // Freezing: repeated score updates leave subnetwork weights untouched.
  const auto before = subnetwork_checksum(model);
  std::size_t changed = 0, calls = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const std::vector<std::size_t> idx{i, i + 8};
    const auto batch = make_batch<double>(data, Split::train, idx);
    const auto out = forward_all(model, std::span<const Tensor<double>>(batch.inputs), false);
    update_decision_scores(model, std::span<const TaskOutput<double>>(out.tasks),
                           std::span<const Tensor<double>>(batch.targets), 1.0);
    ++calls;
    changed += subnetwork_checksum(model) != before;
    inspect();
  }
  Outcome out;
  out.pass = worst <= 1e-12 && negatives == 0 && changed == 0;
  out.detail = "max |sum(alpha) - 1| " + fmt("%.3g", worst) + " over " + std::to_string(steps) +
               " training steps and " + std::to_string(calls) + " extra updates; checksum changed after " +
               std::to_string(changed) + "/" + std::to_string(calls) + " updates";
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const cencli::ExperimentConfig& base, const Dataset& data, const fs::path& root) {
  auto c = base;
  c.train.epochs = 3;
  cencli::run_training(c, data, root / "det_a");
  cencli::run_training(c, data, root / "det_b");
  std::size_t differing = 0;
  for (const char* f : {"metrics.csv", "trace.csv", "trace_summary.csv"})
    differing += slurp(root / "det_a" / f) != slurp(root / "det_b" / f);

  // 64-bit checkpoint round trip through a file.
  auto model = build_model<double>(c.net, Topology::multimodal, 2, 1, task_specs(data));
  TrainConfig tc = c.train;
  tc.epochs = 2;
  Trainer<double> straight(model, tc);
  std::vector<double> a, b;
  straight.fit(data, [&](const StepRecord& r) { a.push_back(r.total); }, {}, 40);
  const auto path = root / "roundtrip.bin";
  save_checkpoint(path, model, straight.optimizer(), straight.step(), "roundtrip");
  straight.fit(data, [&](const StepRecord& r) { a.push_back(r.total); });

  auto fresh = build_model<double>(c.net, Topology::multimodal, 2, 1, task_specs(data));
  Trainer<double> resumed(fresh, tc);
  const auto info = load_checkpoint(path, fresh, resumed.optimizer());
  resumed.set_step(info.step);
  b.assign(a.begin(), a.begin() + 40);
  resumed.fit(data, [&](const StepRecord& r) { b.push_back(r.total); });
  std::size_t diverged = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) diverged += a[i] != b[i];
  const bool resave = serialize_checkpoint(fresh, resumed.optimizer(), resumed.step(), "x") ==
                      serialize_checkpoint(model, straight.optimizer(), straight.step(), "x");
  Outcome out;
  out.pass = differing == 0 && diverged == 0 && a.size() == b.size() && resave;
  out.detail = std::to_string(differing) + " of 3 CSV files differ between identical runs; resumed " +
               std::to_string(b.size() - 40) + " steps after step 40 with " + std::to_string(diverged) +
               " diverging losses; final states " + (resave ? "byte-identical" : "DIFFER");
  return out;
}

Outcome certificate(const Dataset& data) {
  const auto cert = complementarity_certificate(data);
  Outcome out;
  out.pass = cert.holds();
  std::string singles;
  for (std::size_t m = 0; m < cert.single_mse.size(); ++m)
    singles += (m ? ", " : "") + fmt("%.5g", cert.single_mse[m]);
  out.detail = "single-modality ridge MSE {" + singles + "}, joint " + fmt("%.5g", cert.joint_mse) +
               ", ratio " + fmt("%.4f", cert.ratio) + " (required " + fmt("%.2f", cert.required) + ")";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-9"};
  std::vector<int> only;
  std::string config_path = std::string(CEN_SOURCE_DIR) + "/configs/fusion_exchange.ini";
  std::string keep;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--config", config_path, "Base configuration of the training criteria");
  app.add_option("--keep", keep, "Keep run directories here");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  const auto t0 = Clock::now();
  const fs::path root = keep.empty() ? fs::temp_directory_path() / "cen_acceptance" : fs::path(keep);
  fs::remove_all(root);
  fs::create_directories(root);

  Runs runs;
  runs.base = cencli::parse_config(config_path);
  runs.root = root;
  const bool training = wanted(4) || wanted(5) || wanted(6);
  for (std::size_t s = 0; s < (training ? 5u : 1u); ++s) {
    auto c = runs.base;
    c.data_seed = runs.base.data_seed + s;
    runs.data.push_back(cencli::obtain_dataset(c));
  }
  std::printf("# base config %s: %zu train / %zu val, %zux%zu, %zu epochs, lambda %g, theta %g\n",
              config_path.c_str(), runs.base.n_train, runs.base.n_val, runs.base.data.height,
              runs.base.data.width, runs.base.train.epochs, runs.base.train.lambda, runs.base.train.theta);

  if (wanted(1)) report(1, gradient_suite());
  if (wanted(2)) report(2, exchange_oracle());
  if (wanted(3)) report(3, structural_counts());
  if (wanted(4)) report(4, fusion_benefit(runs));
  if (wanted(5)) report(5, ablation_ordering(runs));
  if (wanted(6)) report(6, sparsity_dynamics(runs));
  if (wanted(7)) report(7, decision_scores_check(runs.data.front()));
  if (wanted(8)) report(8, determinism(runs.base, runs.data.front(), root));
  if (wanted(9)) report(9, certificate(runs.data.front()));

  std::size_t failed = 0;
  for (const auto& [id, o] : g_results) failed += !o.pass;
  std::printf("# %zu/%zu criteria passed in %.0f s\n", g_results.size() - failed, g_results.size(),
              seconds_since(t0));
  if (keep.empty()) fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
