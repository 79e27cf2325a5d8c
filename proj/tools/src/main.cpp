// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cen/error.hpp"
#include "cencli/config.hpp"
#include "cencli/experiment.hpp"

namespace fs = std::filesystem;
using namespace cencli;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
  std::string data;
};

void add_common(CLI::App* app, Common& c, bool with_run_flags) {
  app->add_option("--config", c.config, "Experiment config file (defaults apply when omitted)");
  app->add_option("--out", c.out, "Output directory")->required();
  if (!with_run_flags) return;
  app->add_option("--seed", c.seed, "Training seed (overrides [train] seed)");
  app->add_option("--variant", c.variant,
                  "Exchange variant: threshold, fixed_fraction, random_fraction, zero_out, no_divide");
  app->add_option("--data", c.data, "Dataset file (overrides [data] file)");
}

ExperimentConfig load(const Common& c) {
  auto config = c.config.empty() ? parse_config_text("") : parse_config(c.config);
  if (c.seed) config.train.seed = *c.seed;
  if (!c.variant.empty()) config.variant = cen::parse_variant_kind(c.variant);
  if (!c.data.empty()) config.data_file = c.data;
  return config;
}

void write_report(const fs::path& dir, const nlohmann::json& report) {
  fs::create_directories(dir);
  write_text(dir / "summary.json", report.dump(2) + "\n");
}

void print_run(const RunResult& r) {
  for (const auto& t : r.metrics.tasks) {
    std::printf("%s task %zu ensemble loss %.6g", r.name.c_str(), t.task, t.ensemble.loss);
    for (const auto& s : t.streams) std::printf("  stream %zu %.6g", s.stream, s.loss);
    if (t.segmentation) std::printf("  mIoU %.4f", t.ensemble.miou);
    std::printf("\n");
  }
}

std::string tag(double v) { return format_number(v); }

int cmd_gen_data(const Common& c) {
  const auto config = load(c);
  const auto data = obtain_dataset(config);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "resolved_config.txt", echo_config(config));
  cen::save_dataset(data, out / "data.bin");
  std::printf("wrote %s (%zu train, %zu val, %zu modalities, %zu targets)\n",
              (out / "data.bin").string().c_str(), data.n_train, data.n_val, data.modalities.size(),
              data.targets.size());
  return 0;
}

int cmd_train(const Common& c) {
  const auto config = load(c);
  const auto data = obtain_dataset(config);
  const auto r = run_training(config, data, c.out);
  print_run(r);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_file, const std::string& out) {
  auto config = checkpoint_config(checkpoint);
  if (!data_file.empty()) config.data_file = data_file;
  const auto data = obtain_dataset(config);
  const auto r = run_evaluation(checkpoint, data);
  print_run(r);
  if (!out.empty())
    write_report(out, {{"command", "eval"}, {"checkpoint", checkpoint},
                       {"runs", nlohmann::json::array({to_json(r)})}});
  return 0;
}

int cmd_sweep(const Common& c) {
  const auto config = load(c);
  const auto data = obtain_dataset(config);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "resolved_config.txt", echo_config(config));
  const auto thetas = config.sweep_thetas.empty() ? std::vector<double>{config.train.theta}
                                                  : config.sweep_thetas;
  nlohmann::json runs = nlohmann::json::array();
  for (double theta : thetas)
    for (double lambda : config.sweep_lambdas) {
      auto run = config;
      run.train.lambda = lambda;
      run.train.theta = theta;
      const std::string name = "lambda_" + tag(lambda) + "_theta_" + tag(theta);
      const auto r = run_training(run, data, out / name, name);
      print_run(r);
      auto j = to_json(r);
      j["lambda"] = lambda;
      j["theta"] = theta;
      runs.push_back(j);
    }
  write_report(out, {{"command", "sweep"}, {"runs", runs}});
  return 0;
}

int cmd_ablate(const Common& c, std::vector<std::string> rows, std::size_t seeds) {
  const auto config = load(c);
  const fs::path out = c.out;
  fs::create_directories(out);
  write_text(out / "resolved_config.txt", echo_config(config));
  if (seeds == 0) throw cen::ConfigError("--seeds must be >= 1");
  std::vector<cen::Dataset> datasets;
  for (std::size_t i = 0; i < seeds; ++i) {
    auto dc = config;
    dc.data_seed = config.data_seed + i;
    datasets.push_back(obtain_dataset(dc));
  }
  if (rows.empty()) rows = ablation_rows(datasets.front().modalities.size());
  // Validate every row before any training.
  for (const auto& row : rows) check_compatibility(apply_row(config, row), datasets.front());

  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json table = nlohmann::json::object();
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < seeds; ++i) {
      auto run = apply_row(config, row);
      run.data_seed = config.data_seed + i;
      run.train.seed = config.train.seed + i;
      const auto r = run_training(run, datasets[i], out / row / ("seed" + std::to_string(i)), row);
      print_run(r);
      auto j = to_json(r);
      j["row"] = row;
      j["seed_index"] = i;
      runs.push_back(j);
      table[row].push_back(r.ensemble_loss());
    }
  }
  write_report(out, {{"command", "ablate"}, {"seeds", seeds}, {"runs", runs},
                     {"ensemble_loss", table}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-exchanging networks: data generation, training, evaluation and ablations"};
  app.require_subcommand(1);

  Common gen, train, sweep, ablate;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  add_common(gen_cmd, gen, false);

  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  add_common(train_cmd, train, true);

  std::string checkpoint, eval_data, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Dataset file (default: regenerate from the checkpoint config)");
  eval_cmd->add_option("--out", eval_out, "Directory for summary.json");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train over the [sweep] lambda/theta grid");
  add_common(sweep_cmd, sweep, true);

  std::vector<std::string> rows;
  std::size_t seeds = 5;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train ablation rows over paired seeds");
  add_common(ablate_cmd, ablate, true);
  ablate_cmd->add_option("--rows", rows, "Comma-separated rows (default: all)")->delimiter(',');
  ablate_cmd->add_option("--seeds", seeds, "Number of paired seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(checkpoint, eval_data, eval_out);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*ablate_cmd) return cmd_ablate(ablate, rows, seeds);
  } catch (const cen::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cen::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const cen::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const cen::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
