// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cen/error.hpp"
#include "cen/ridge.hpp"
#include "cen/synthdata.hpp"

using namespace cen;

namespace {

Field constant(std::size_t h, std::size_t w, double v) { return {h, w, std::vector<double>(h * w, v)}; }

}  // namespace

TEST_CASE("a single bump peaks at its centre and is symmetric") {
  const std::vector<Bump> bumps{{4.0, 4.0, 1.5, 0.7}};
  const auto f = render_bumps(9, 9, std::span<const Bump>(bumps));
  CHECK(f.at(4, 4) == doctest::Approx(1.0));
  CHECK(*std::min_element(f.values.begin(), f.values.end()) == doctest::Approx(0.0));
  for (std::size_t d = 1; d <= 4; ++d) {
    CHECK(f.at(4 + d, 4) == doctest::Approx(f.at(4 - d, 4)).epsilon(1e-14));
    CHECK(f.at(4, 4 + d) == doctest::Approx(f.at(4 + d, 4)).epsilon(1e-14));
  }
}

TEST_CASE("latent fields are normalized, deterministic and smooth") {
  const auto a = gen_latent(3, 32, 32);
  const auto b = gen_latent(3, 32, 32);
  CHECK(a.values == b.values);
  CHECK(gen_latent(4, 32, 32).values != a.values);
  const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
  CHECK(*lo == doctest::Approx(0.0));
  CHECK(*hi == doctest::Approx(1.0));
  const auto noisy = derive_modality(a, ViewKind::noisy, 9, 0.25);
  CHECK(mean_neighbor_difference(a) < mean_neighbor_difference(noisy));
  CHECK_THROWS(gen_latent(1, 4, 32));
}

TEST_CASE("view derivations on hand-built fields") {
  SUBCASE("coarse keeps a constant field") {
    const auto c = derive_modality(constant(8, 8, 0.3), ViewKind::coarse, 1, 0.0);
    for (double v : c.values) CHECK(v == doctest::Approx(0.3));
  }
  SUBCASE("edge of a vertical step peaks at the step") {
    Field step = constant(8, 8, 0.0);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 4; x < 8; ++x) step.values[y * 8 + x] = 1.0;
    const auto e = derive_modality(step, ViewKind::edge, 1, 0.0);
    CHECK(*std::max_element(e.values.begin(), e.values.end()) == doctest::Approx(1.0));
    CHECK(e.at(4, 1) == 0.0);
    CHECK(e.at(4, 4) == doctest::Approx(1.0));
  }
  SUBCASE("quantized levels") {
    Field z{1, 5, {0.0, 0.24, 0.25, 0.5, 1.0}};
    const auto q = derive_modality(z, ViewKind::quantized, 1, 0.0, 4);
    CHECK(q.values == std::vector<double>{0, 0, 1, 2, 3});
  }
  SUBCASE("noise is seeded") {
    const auto z = constant(8, 8, 0.5);
    CHECK(derive_modality(z, ViewKind::noisy, 1, 0.1).values == derive_modality(z, ViewKind::noisy, 1, 0.1).values);
    CHECK(derive_modality(z, ViewKind::noisy, 1, 0.1).values != derive_modality(z, ViewKind::noisy, 2, 0.1).values);
  }
}

TEST_CASE("dataset layouts per task kind") {
  struct Case {
    TaskKind kind;
    std::size_t modalities, targets;
    bool seg_last;
  };
  for (const auto& c : {Case{TaskKind::fusion_regression, 2, 1, false},
                        Case{TaskKind::fusion_segmentation, 2, 1, true},
                        Case{TaskKind::cycle_triplet, 3, 3, false},
                        Case{TaskKind::multitask_pair, 1, 2, false},
                        Case{TaskKind::mm_mt_quad, 2, 2, true}}) {
    CAPTURE(to_string(c.kind));
    const auto d = make_dataset(c.kind, 4, 2, 7, DataParams{16, 16});
    CHECK(d.modalities.size() == c.modalities);
    CHECK(d.targets.size() == c.targets);
    CHECK(d.targets_spec.back().segmentation == c.seg_last);
    for (const auto& m : d.modalities) CHECK(m.size() == 6 * 256);
    CHECK(parse_task_kind(to_string(c.kind)) == c.kind);
  }
}

TEST_CASE("dataset serialization round-trips and rejects corruption") {
  const auto d = make_dataset(TaskKind::mm_mt_quad, 3, 2, 5, DataParams{8, 8});
  auto bytes = serialize_dataset(d);
  CHECK(deserialize_dataset(std::span<const std::uint8_t>(bytes)) == d);
  CHECK(serialize_dataset(deserialize_dataset(std::span<const std::uint8_t>(bytes))) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_dataset(std::span<const std::uint8_t>(bad)), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_dataset(std::span<const std::uint8_t>(truncated)), FormatError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(deserialize_dataset(std::span<const std::uint8_t>(longer)), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/cen/data.bin"), IoError);
}

TEST_CASE("batches index the requested split") {
  const auto d = make_dataset(TaskKind::fusion_regression, 4, 3, 2, DataParams{8, 8});
  const std::vector<std::size_t> idx{2, 0};
  const auto b = make_batch<double>(d, Split::val, idx);
  REQUIRE(b.size() == 2);
  CHECK(b.inputs[0].shape() == Shape{2, 1, 8, 8});
  CHECK(b.inputs[1].values()[0] == static_cast<double>(d.modalities[1][(4 + 2) * 64]));
  CHECK(b.targets[0].values()[64] == static_cast<double>(d.targets[0][4 * 64]));
  const std::vector<std::size_t> out_of_range{3};
  CHECK_THROWS(make_batch<double>(d, Split::val, out_of_range));
}

TEST_CASE("ridge recovers an exact linear relation") {
  // Target equal to one modality: that modality alone fits perfectly.
  auto d = make_dataset(TaskKind::fusion_regression, 16, 8, 3, DataParams{8, 8});
  d.targets[0] = d.modalities[0];
  const auto fit = fit_pixel_ridge(d, {0}, 0, 0.0);
  CHECK(fit.val_mse < 1e-10);
  CHECK(fit.weights[0] == doctest::Approx(1.0));
}
