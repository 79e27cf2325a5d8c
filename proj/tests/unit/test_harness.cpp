// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cen/checkpoint.hpp"
#include "cen/error.hpp"
#include "cen/metrics.hpp"
#include "cen/trainer.hpp"
#include "helpers.hpp"

using namespace cen;

namespace {

NetSpec small_net() {
  NetSpec net;
  net.encoder = {{4, 3, 2}, {8, 3, 2}};
  net.decoder = {{4, 3, 2}};
  return net;
}

Dataset small_data(TaskKind kind = TaskKind::fusion_regression, std::uint64_t seed = 1) {
  return make_dataset(kind, 12, 6, seed, DataParams{8, 8});
}

ModelAssembly<double> small_model(const Dataset& d, AssemblyOptions opt = {}) {
  return build_model<double>(small_net(), Topology::multimodal, 2, 1, task_specs(d), opt);
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 4;
  c.lr_decay_epoch = 2;
  c.lambda = 5e-3;
  c.theta = 2e-2;
  return c;
}

bool same_records(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].total != b[i].total || a[i].sparsity != b[i].sparsity)
      return false;
    for (std::size_t s = 0; s < a[i].stream_losses.size(); ++s)
      if (a[i].stream_losses[s] != b[i].stream_losses[s]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("momentum SGD matches the hand-rolled recurrence") {
  // f(w) = ½·Σ w², so g = w.
  auto w = Tensor<double>::parameter({2}, {1.0, -2.0});
  Sgd<double> sgd(0.9);
  sgd.add("w", w, 0.1, 0.01);
  std::vector<double> ref{1.0, -2.0}, buf(2, 0.0);
  for (int step = 0; step < 3; ++step) {
    sgd.zero_grad();
    backward(scale(sum_all(mul(w, w)), 0.5));
    sgd.step(step == 2 ? 0.5 : 1.0);
    for (std::size_t i = 0; i < 2; ++i) {
      const double g = ref[i] + 0.01 * ref[i];
      buf[i] = step == 0 ? g : 0.9 * buf[i] + g;
      ref[i] -= (step == 2 ? 0.05 : 0.1) * buf[i];
      CHECK(std::abs(w.values()[i] - ref[i]) < 1e-15);
    }
  }
}

TEST_CASE("one training step matches an independent SGD oracle at 64-bit") {
  const auto data = small_data();
  auto config = small_config();
  config.lr_encoder = 0.05;
  config.lr_decoder = 0.03;
  config.weight_decay = 1e-3;
  auto trained = small_model(data);
  auto reference = small_model(data);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto batch = make_batch<double>(data, Split::train, idx);

  // Gradients of the objective on an identical copy.
  const auto out = forward_all(reference, std::span<const Tensor<double>>(batch.inputs), true);
  Tensor<double> total;
  for (const auto& p : out.tasks[0].predictions) {
    auto l = task_loss(TaskLoss::regression, p, batch.targets[0]);
    total = total.defined() ? add(total, l) : l;
  }
  const auto terms = sparsity_terms(reference);
  total = add(total, sparsity_penalty(std::span<const SparsityTerm<double>>(terms), config.lambda));
  backward(total);

  Trainer<double> trainer(trained, config);
  trainer.train_step(batch);

  const auto before = reference.parameters();
  const auto after = trained.parameters();
  REQUIRE(before.size() == after.size());
  std::size_t checked = 0;
  for (std::size_t k = 0; k < before.size(); ++k) {
    const auto& p = before[k];
    if (p.role == ParamRole::score_logit) continue;
    CAPTURE(p.name);
    const bool decays = p.role == ParamRole::conv_weight || p.role == ParamRole::fusion_weight;
    const double lr = p.side == ParamSide::encoder ? config.lr_encoder : config.lr_decoder;
    const auto w0 = p.tensor.values();
    const auto w1 = after[k].tensor.values();
    for (std::size_t i = 0; i < w0.size(); ++i) {
      const double g = (p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0) +
                       (decays ? config.weight_decay * w0[i] : 0.0);
      CHECK(std::abs(w1[i] - (w0[i] - lr * g)) < 1e-10);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("replaced scaling factors receive only the sparsity gradient") {
  const auto data = small_data();
  auto model = small_model(data);
  // Channel 1 of stream 0's first encoder norm: in region, below θ.
  auto& gamma = model.bank(model.streams[0].encoder_norms).layers[0].gamma;
  gamma.mutable_values()[1] = 0.01;
  gamma.mutable_values()[0] = -0.015;
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto batch = make_batch<double>(data, Split::train, idx);
  const auto out = forward_all(model, std::span<const Tensor<double>>(batch.inputs), true);
  REQUIRE(out.sites.front().mask.is_replaced(0, 1));
  REQUIRE(out.sites.front().mask.is_replaced(0, 0));
  Tensor<double> total;
  for (const auto& p : out.tasks[0].predictions) {
    auto l = task_loss(TaskLoss::regression, p, batch.targets[0]);
    total = total.defined() ? add(total, l) : l;
  }
  const double lambda = 5e-3;
  const auto terms = sparsity_terms(model);
  total = add(total, sparsity_penalty(std::span<const SparsityTerm<double>>(terms), lambda));
  backward(total);
  CHECK(gamma.grad()[1] == lambda);
  CHECK(gamma.grad()[0] == -lambda);
  CHECK(gamma.grad()[2] != lambda);  // a kept channel also sees the task loss
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = small_data();
  auto run = [&] {
    auto model = small_model(data);
    Trainer<double> t(model, small_config());
    std::vector<StepRecord> recs;
    t.fit(data, [&](const StepRecord& r) { recs.push_back(r); });
    return recs;
  };
  const auto a = run();
  CHECK(a.size() == 12);
  CHECK(same_records(a, run()));
}

TEST_CASE("epoch batches are a permutation that depends on seed and epoch") {
  const auto data = small_data();
  auto model = small_model(data);
  Trainer<double> t(model, small_config());
  CHECK(t.steps_per_epoch(10) == 3);
  const auto b0 = t.epoch_batches(10, 0);
  std::vector<std::size_t> all;
  for (const auto& b : b0) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
  CHECK(t.epoch_batches(10, 0) == b0);
  CHECK(t.epoch_batches(10, 1) != b0);
  CHECK(t.lr_scale(1) == 1.0);
  CHECK(t.lr_scale(2) == 0.5);
  CHECK(t.lr_scale(5) == 0.25);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr_decoder = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a non-finite loss names the offending parameter") {
  const auto data = small_data();
  auto model = small_model(data);
  Trainer<double> t(model, small_config());
  const auto params = model.parameters();
  const auto& victim = params[3];
  victim.tensor.impl()->values[0] = std::nan("");
  const std::vector<std::size_t> idx{0, 1};
  try {
    t.train_step(make_batch<double>(data, Split::train, idx));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find(victim.name) != std::string::npos);
  }
}

TEST_CASE("mean IoU hand cases") {
  const std::vector<std::int32_t> pred{0, 0, 1, 1}, gt{0, 1, 1, 1};
  CHECK(mean_iou(pred, gt, 2) == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
  CHECK(mean_iou(gt, gt, 2) == 1.0);
  const std::vector<std::int32_t> zeros{0, 0, 0, 0}, ones{1, 1, 1, 1};
  CHECK(mean_iou(ones, zeros, 2) == 0.0);
  // Class 2 absent from both maps is skipped.
  CHECK(mean_iou(pred, gt, 3) == doctest::Approx(7.0 / 12.0));
  const std::vector<std::int32_t> bad{0, 5, 0, 0};
  CHECK_THROWS(mean_iou(bad, gt, 2));
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3}, c{2, 2, 1};
  CHECK(mse(a, b) == 0.0);
  CHECK(mse(a, c) == doctest::Approx(5.0 / 3.0));
  CHECK(mae(a, c) == doctest::Approx(1.0));
}

TEST_CASE("evaluation of a perfect ensemble") {
  auto data = small_data();
  auto model = small_model(data);
  const auto m = evaluate(model, data, Split::val, 4);
  REQUIRE(m.tasks.size() == 1);
  CHECK(m.tasks[0].streams.size() == 2);
  CHECK(m.tasks[0].alpha.size() == 2);
  const auto whole = evaluate(model, data, Split::val, 64);
  CHECK(whole.tasks[0].ensemble.mse == doctest::Approx(m.tasks[0].ensemble.mse).epsilon(1e-12));
}

TEST_CASE("checkpoints are byte-stable and continue training exactly") {
  const auto data = small_data();
  auto config = small_config();
  auto model = small_model(data);
  Trainer<double> first(model, config);
  std::vector<StepRecord> straight;
  first.fit(data, [&](const StepRecord& r) { straight.push_back(r); }, {}, 5);
  const auto bytes = serialize_checkpoint(model, first.optimizer(), first.step(), "echo");
  first.fit(data, [&](const StepRecord& r) { straight.push_back(r); });

  auto restored = small_model(data);
  Trainer<double> second(restored, config);
  const auto info = restore_checkpoint(std::span<const std::uint8_t>(bytes), restored, second.optimizer());
  CHECK(info.step == 5);
  CHECK(info.config_echo == "echo");
  CHECK(serialize_checkpoint(restored, second.optimizer(), info.step, "echo") == bytes);
  second.set_step(info.step);
  std::vector<StepRecord> resumed(straight.begin(), straight.begin() + 5);
  second.fit(data, [&](const StepRecord& r) { resumed.push_back(r); });
  CHECK(same_records(straight, resumed));

  const auto path = std::filesystem::temp_directory_path() / "cen_unit_checkpoint.bin";
  save_checkpoint(path, restored, second.optimizer(), second.step(), "echo");
  CHECK(read_checkpoint_header(path).info.step == second.step());
  std::filesystem::remove(path);
}

TEST_CASE("corrupt or mismatched checkpoints are rejected") {
  const auto data = small_data();
  auto model = small_model(data);
  Trainer<double> t(model, small_config());
  auto bytes = serialize_checkpoint(model, t.optimizer(), 0, "");
  auto bad = bytes;
  bad[3] ^= 0xFF;
  CHECK_THROWS_AS(restore_checkpoint(std::span<const std::uint8_t>(bad), model, t.optimizer()), FormatError);
  bad = bytes;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(restore_checkpoint(std::span<const std::uint8_t>(bad), model, t.optimizer()), FormatError);

  auto f = build_model<float>(small_net(), Topology::multimodal, 2, 1, task_specs(data));
  Trainer<float> tf(f, small_config());
  CHECK_THROWS_AS(restore_checkpoint(std::span<const std::uint8_t>(bytes), f, tf.optimizer()), FormatError);

  AssemblyOptions concat;
  concat.fusion = Fusion::concat;
  auto other = small_model(data, concat);
  Trainer<double> to(other, small_config());
  CHECK_THROWS_AS(restore_checkpoint(std::span<const std::uint8_t>(bytes), other, to.optimizer()), FormatError);
}

TEST_CASE("traces at initialisation and category bookkeeping") {
  const auto data = small_data();
  auto model = small_model(data);
  const auto trace = record_trace(model, 0);
  REQUIRE_FALSE(trace.summary.empty());
  for (const auto& s : trace.summary) {
    CHECK(s.exchanged_fraction == 0.0);
    CHECK(s.cat_c == s.cat_a + s.cat_b + s.cat_c + s.cat_d);
  }
  for (const auto& [layer, f] : layer_fractions(trace)) CHECK(f == 0.0);

  auto& gamma = model.bank(model.streams[0].encoder_norms).layers[0].gamma;
  gamma.mutable_values()[0] = 0.0;  // stream 0 low, stream 1 high: category A
  const auto t2 = record_trace(model, 1);
  const auto& row = t2.summary.front();
  CHECK(row.cat_a == 1);
  CHECK(row.cat_a + row.cat_b + row.cat_c + row.cat_d == 2);  // region of 2 of 4 channels
}

TEST_CASE("recovery tracker counts sub-threshold factors that climb back") {
  RecoveryTracker tracker(0.02, 10);
  auto row = [](std::uint64_t step, std::size_t ch, double g) {
    return TraceRow{step, "enc0", 0, 0, ch, g, std::abs(g) <= 0.02};
  };
  tracker.observe({{row(5, 0, 0.0)}, {}});          // before the window
  tracker.observe({{row(10, 1, 0.01), row(10, 2, 0.0)}, {}});
  tracker.observe({{row(20, 1, 0.03), row(20, 2, 0.05)}, {}});  // channel 2 exceeds 2θ
  CHECK(tracker.fallen() == 2);
  CHECK(tracker.recovered() == 1);
  CHECK(tracker.recovery_rate() == 0.5);
}

TEST_CASE("random-flow cycle training visits one task per step") {
  const auto data = make_dataset(TaskKind::cycle_triplet, 8, 4, 2, DataParams{8, 8});
  auto model = build_model<double>(small_net(), Topology::cycle, 2, 3, task_specs(data));
  auto config = small_config();
  config.random_flow = true;
  Trainer<double> t(model, config);
  const std::vector<std::size_t> idx{0, 1};
  const auto rec = t.train_step(make_batch<double>(data, Split::train, idx));
  std::size_t run = 0;
  for (double v : rec.ensemble_losses) run += std::isfinite(v) ? 1 : 0;
  CHECK(run == 1);
}
