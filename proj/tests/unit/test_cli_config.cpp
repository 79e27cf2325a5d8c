// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cen/error.hpp"
#include "cencli/config.hpp"
#include "cencli/experiment.hpp"

using namespace cencli;

namespace {

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const cen::ParseError& e) {
    return e.line();
  }
  return -1;
}

std::string error_text(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const cen::ParseError& e) {
    return e.what();
  }
  return "";
}

const std::filesystem::path kConfigs = std::filesystem::path(CEN_SOURCE_DIR) / "configs";

}  // namespace

TEST_CASE("an empty config echoes the documented defaults") {
  CHECK(echo_config(parse_config_text("")) == read(kConfigs / "default.ini"));
  const auto c = parse_config_text("");
  CHECK(c.train.lambda == 1e-3);
  CHECK(c.train.theta == 1e-2);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.epochs == 60);
}

TEST_CASE("shipped configs round-trip through the echo") {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".ini") continue;
    CAPTURE(entry.path().string());
    const auto text = read(entry.path());
    CHECK(echo_config(parse_config_text(text)) == text);
    ++seen;
  }
  CHECK(seen >= 2);
}

TEST_CASE("regime defaults follow the task unless set") {
  auto seg = parse_config_text("[data]\ntask = fusion_segmentation\n");
  CHECK(seg.train.lambda == 5e-3);
  CHECK(seg.train.theta == 2e-2);
  auto set = parse_config_text("[data]\ntask = fusion_segmentation\n[train]\nlambda = 0.5\n");
  CHECK(set.train.lambda == 0.5);
  CHECK(set.train.theta == 2e-2);
}

TEST_CASE("errors carry line numbers") {
  CHECK(error_line("[train]\nlambda = -1\n") == 2);
  CHECK(error_text("[train]\nlambda = -1\n").find("λ >= 0") != std::string::npos);
  CHECK(error_line("# comment\n\n[train]\nbogus = 1\n") == 4);
  CHECK(error_line("[nope]\n") == 1);
  CHECK(error_line("[train]\nepochs = 3\nepochs = 4\n") == 3);
  CHECK(error_line("[train]\nepochs = three\n") == 2);
  CHECK(error_line("[train]\nepochs = -3\n") == 2);
  CHECK(error_line("[experiment]\n\ntopology = ring\n") == 3);
  CHECK(error_line("lambda = 1\n") == 1);
  CHECK(error_line("[train]\nlambda 1\n") == 2);
  CHECK(error_line("[model]\nencoder = 8:3\n") == 2);
  CHECK(error_line("[train]\nmomentum = 1.5\n") == 2);
}

TEST_CASE("numbers echo in shortest round-trip form") {
  CHECK(format_number(0.05) == "0.05");
  CHECK(format_number(1e-5) == "1e-05");
  const auto c = parse_config_text("[train]\nlr_encoder = 0.1234567890123\n");
  CHECK(parse_config_text(echo_config(c)).train.lr_encoder == 0.1234567890123);
}

TEST_CASE("ablation rows and compatibility checks") {
  const auto base = parse_config_text("");
  const auto data = cen::make_dataset(cen::TaskKind::fusion_regression, 2, 1, 1, cen::DataParams{8, 8});
  for (const auto& row : ablation_rows(2)) {
    CAPTURE(row);
    CHECK_NOTHROW(check_compatibility(apply_row(base, row), data));
  }
  CHECK(apply_row(base, "zero-out").variant == cen::VariantKind::zero_out);
  CHECK(apply_row(base, "unimodal-1").modalities == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(apply_row(base, "sideways"), cen::ConfigError);

  auto bad = base;
  bad.topology = cen::Topology::cycle;
  CHECK_THROWS_AS(check_compatibility(bad, data), cen::ConfigError);
  bad = base;
  bad.fusion = cen::Fusion::concat;
  bad.variant = cen::VariantKind::zero_out;
  CHECK_THROWS_AS(check_compatibility(bad, data), cen::ConfigError);
  bad = base;
  bad.modalities = {0};
  CHECK_THROWS_AS(check_compatibility(bad, data), cen::ConfigError);
  bad.modalities = {5};
  bad.fusion = cen::Fusion::none;
  CHECK_THROWS_AS(build_for<float>(bad, data), cen::ConfigError);
}

TEST_CASE("a missing dataset file is an I/O error") {
  auto c = parse_config_text("");
  c.data_file = "/nonexistent/cen/data.bin";
  CHECK_THROWS_AS(obtain_dataset(c), cen::IoError);
}

TEST_CASE("run directories are reproducible") {
  auto c = parse_config_text(
      "[data]\nn_train = 8\nn_val = 4\nheight = 8\nwidth = 8\n[model]\nencoder = 4:3:2,8:3:2\n"
      "decoder = 4:3:2\n[train]\nepochs = 2\nbatch_size = 4\ntrace_every = 1\n");
  const auto data = obtain_dataset(c);
  const auto root = std::filesystem::temp_directory_path() / "cen_unit_runs";
  std::filesystem::remove_all(root);
  run_training(c, data, root / "a");
  run_training(c, data, root / "b");
  for (const char* f : {"metrics.csv", "trace.csv", "trace_summary.csv", "checkpoint.bin",
                        "resolved_config.txt", "summary.json"}) {
    CAPTURE(f);
    CHECK(read(root / "a" / f) == read(root / "b" / f));
  }
  const auto eval = run_evaluation(root / "a" / "checkpoint.bin", data);
  CHECK(eval.steps == 4);
  std::filesystem::remove_all(root);
}
