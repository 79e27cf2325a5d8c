// SPDX-License-Identifier: Apache-2.0
#include "cencli/experiment.hpp"

#include <cmath>
#include <fstream>

#include "cen/checkpoint.hpp"
#include "cen/error.hpp"
#include "cen/trace.hpp"

namespace cencli {

namespace fs = std::filesystem;
using cen::ConfigError;

namespace {

// Start of the non-recovery window, in steps.
constexpr std::uint64_t kRecoveryStart = 200;

cen::Topology topology_for(cen::TaskKind kind) {
  switch (kind) {
    case cen::TaskKind::fusion_regression:
    case cen::TaskKind::fusion_segmentation:
      return cen::Topology::multimodal;
    case cen::TaskKind::cycle_triplet:
      return cen::Topology::cycle;
    case cen::TaskKind::multitask_pair:
      return cen::Topology::multitask;
    case cen::TaskKind::mm_mt_quad:
      return cen::Topology::mm_mt;
  }
  return cen::Topology::multimodal;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cen::IoError("cannot write " + path.string());
  return out;
}

std::string cell(double v) { return std::isfinite(v) ? format_number(v) : ""; }

void write_metrics_header(std::ostream& out, std::size_t streams, std::size_t tasks) {
  out << "step,epoch";
  for (std::size_t s = 0; s < streams; ++s) out << ",loss_s" << s;
  for (std::size_t t = 0; t < tasks; ++t) out << ",ens_t" << t;
  for (std::size_t t = 0; t < tasks; ++t) out << ",miou_t" << t;
  out << ",sparsity,total\n";
}

void write_metrics_row(std::ostream& out, const cen::StepRecord& r) {
  out << r.step << ',' << r.epoch;
  for (double v : r.stream_losses) out << ',' << cell(v);
  for (double v : r.ensemble_losses) out << ',' << cell(v);
  for (double v : r.ensemble_miou) out << ',' << cell(v);
  out << ',' << cell(r.sparsity) << ',' << cell(r.total) << '\n';
}

nlohmann::json stream_json(const cen::StreamMetrics& m, bool segmentation) {
  nlohmann::json j{{"loss", m.loss}, {"mse", m.mse}, {"mae", m.mae}};
  if (segmentation) j["miou"] = m.miou;
  return j;
}

template <typename T>
RunResult train_impl(const ExperimentConfig& config, const cen::Dataset& data, const fs::path& out,
                     const std::string& name) {
  fs::create_directories(out);
  const std::string echo = echo_config(config);
  write_text(out / "resolved_config.txt", echo);

  auto model = build_for<T>(config, data);
  const auto selected = select_modalities(data, config.modalities);
  cen::Trainer<T> trainer(model, config.train);

  auto metrics = open_out(out / "metrics.csv");
  write_metrics_header(metrics, model.streams.size(), model.num_tasks);
  auto trace = open_out(out / "trace.csv");
  cen::write_trace_header(trace);
  auto summary = open_out(out / "trace_summary.csv");
  cen::write_summary_header(summary);

  cen::RecoveryTracker tracker(config.train.theta, kRecoveryStart);
  std::uint64_t last_traced = static_cast<std::uint64_t>(-1);
  auto on_trace = [&](const cen::ChannelTrace& t) {
    cen::write_trace_rows(trace, t);
    cen::write_summary_rows(summary, t);
    tracker.observe(t);
    last_traced = t.summary.empty() ? trainer.step() : t.summary.front().step;
  };

  RunResult result;
  result.name = name;
  result.seed = config.train.seed;
  trainer.fit(
      selected,
      [&](const cen::StepRecord& r) {
        write_metrics_row(metrics, r);
        result.final_total = r.total;
      },
      on_trace);

  const auto final_trace = cen::record_trace(model, trainer.step());
  if (last_traced != trainer.step()) on_trace(final_trace);
  result.steps = trainer.step();
  result.fractions = cen::layer_fractions(final_trace);
  result.fallen = tracker.fallen();
  result.recovered = tracker.recovered();
  result.metrics = cen::evaluate(model, selected, cen::Split::val);

  cen::save_checkpoint(out / "checkpoint.bin", model, trainer.optimizer(), trainer.step(), echo);
  nlohmann::json report{{"command", "train"}, {"runs", nlohmann::json::array({to_json(result)})}};
  write_text(out / "summary.json", report.dump(2) + "\n");
  return result;
}

template <typename T>
RunResult eval_impl(const ExperimentConfig& config, const fs::path& checkpoint,
                    const cen::Dataset& data) {
  auto model = build_for<T>(config, data);
  cen::Trainer<T> trainer(model, config.train);
  const auto info = cen::load_checkpoint(checkpoint, model, trainer.optimizer());
  RunResult result;
  result.name = "eval";
  result.seed = config.train.seed;
  result.steps = info.step;
  result.final_total = std::nan("");
  result.fractions = cen::layer_fractions(cen::record_trace(model, info.step));
  result.metrics = cen::evaluate(model, select_modalities(data, config.modalities), cen::Split::val);
  return result;
}

}  // namespace

double RunResult::ensemble_loss() const {
  return metrics.tasks.empty() ? std::nan("") : metrics.tasks.front().ensemble.loss;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw cen::IoError("failed writing " + path.string());
}

cen::Dataset obtain_dataset(const ExperimentConfig& config) {
  if (!config.data_file.empty()) {
    if (!fs::exists(config.data_file)) throw cen::IoError("dataset file not found: " + config.data_file);
    return cen::load_dataset(config.data_file);
  }
  return cen::make_dataset(config.task, config.n_train, config.n_val, config.data_seed, config.data);
}

cen::Dataset select_modalities(const cen::Dataset& data, const std::vector<std::size_t>& modalities) {
  if (modalities.empty()) return data;
  cen::Dataset out = data;
  out.modalities.clear();
  out.modality_kinds.clear();
  for (auto m : modalities) {
    if (m >= data.modalities.size())
      throw ConfigError("modality " + std::to_string(m) + " out of range (dataset has " +
                        std::to_string(data.modalities.size()) + ")");
    out.modalities.push_back(data.modalities[m]);
    out.modality_kinds.push_back(data.modality_kinds[m]);
  }
  return out;
}

void check_compatibility(const ExperimentConfig& config, const cen::Dataset& data) {
  const auto expected = topology_for(data.kind);
  if (config.topology != expected)
    throw ConfigError("topology " + cen::to_string(config.topology) + " cannot run task " +
                      cen::to_string(data.kind) + " (expected " + cen::to_string(expected) + ")");
  if (!config.modalities.empty() && config.topology != cen::Topology::multimodal)
    throw ConfigError("modality selection is only available for the multimodal topology");
  const std::size_t m = config.modalities.empty() ? data.modalities.size() : config.modalities.size();
  if (config.variant != cen::VariantKind::threshold && config.fusion != cen::Fusion::exchange)
    throw ConfigError("variant " + cen::to_string(config.variant) + " requires fusion = exchange");
  if (config.topology == cen::Topology::multimodal && m < 2 && config.fusion != cen::Fusion::none)
    throw ConfigError("a single modality needs fusion = none");
  if (config.train.random_flow && config.topology != cen::Topology::cycle)
    throw ConfigError("random_flow applies to the cycle topology only");
}

template <typename T>
cen::ModelAssembly<T> build_for(const ExperimentConfig& config, const cen::Dataset& data) {
  check_compatibility(config, data);
  const auto selected = select_modalities(data, config.modalities);
  cen::AssemblyOptions opt;
  opt.share_convs = config.share_convs;
  opt.share_norms = config.share_norms;
  opt.fusion = config.fusion;
  opt.variant = {config.variant, config.variant_fraction, config.train.seed};
  opt.partition = config.partition;
  opt.rule = config.rule;
  opt.theta = config.train.theta;
  opt.cycle_shared_decoder = config.cycle_shared_decoder;
  opt.init_seed = config.train.seed;
  std::size_t m1 = selected.modalities.size();
  const std::size_t m2 = selected.targets.size();
  if (config.topology == cen::Topology::cycle) m1 -= 1;
  return cen::build_model<T>(config.net, config.topology, m1, m2, cen::task_specs(selected), opt);
}

template cen::ModelAssembly<float> build_for(const ExperimentConfig&, const cen::Dataset&);
template cen::ModelAssembly<double> build_for(const ExperimentConfig&, const cen::Dataset&);

RunResult run_training(const ExperimentConfig& config, const cen::Dataset& data, const fs::path& out,
                       const std::string& name) {
  return config.precision == Precision::f32 ? train_impl<float>(config, data, out, name)
                                            : train_impl<double>(config, data, out, name);
}

ExperimentConfig checkpoint_config(const fs::path& checkpoint) {
  const auto header = cen::read_checkpoint_header(checkpoint);
  auto config = parse_config_text(header.info.config_echo);
  const auto expected = config.precision == Precision::f32 ? 4u : 8u;
  if (header.scalar_bytes != expected)
    throw cen::FormatError("checkpoint scalar width disagrees with its configuration");
  return config;
}

RunResult run_evaluation(const fs::path& checkpoint, const cen::Dataset& data) {
  const auto config = checkpoint_config(checkpoint);
  return config.precision == Precision::f32 ? eval_impl<float>(config, checkpoint, data)
                                            : eval_impl<double>(config, checkpoint, data);
}

nlohmann::json to_json(const RunResult& r) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : r.metrics.tasks) {
    nlohmann::json streams = nlohmann::json::array();
    for (const auto& s : t.streams) {
      auto j = stream_json(s, t.segmentation);
      j["stream"] = s.stream;
      j["modality"] = s.modality;
      streams.push_back(j);
    }
    tasks.push_back({{"task", t.task},
                     {"segmentation", t.segmentation},
                     {"ensemble", stream_json(t.ensemble, t.segmentation)},
                     {"streams", streams},
                     {"alpha", t.alpha}});
  }
  nlohmann::json j{{"name", r.name},
                   {"seed", r.seed},
                   {"steps", r.steps},
                   {"tasks", tasks},
                   {"exchanged_fraction", r.fractions}};
  if (std::isfinite(r.final_total)) j["final_train_objective"] = r.final_total;
  if (r.fallen > 0) j["non_recovery"] = {{"fallen", r.fallen}, {"recovered", r.recovered}};
  return j;
}

std::vector<std::string> ablation_rows(std::size_t modalities) {
  std::vector<std::string> rows{"exchange",        "no-exchange",     "zero-out",
                                "no-divide",       "fixed-fraction",  "random-fraction",
                                "concat",          "average",         "shared-norms",
                                "unshared-convs"};
  for (std::size_t m = 0; m < modalities; ++m) rows.push_back("unimodal-" + std::to_string(m));
  return rows;
}

ExperimentConfig apply_row(ExperimentConfig c, const std::string& row) {
  c.fusion = cen::Fusion::exchange;
  c.variant = cen::VariantKind::threshold;
  if (row == "exchange") {
  } else if (row == "no-exchange") {
    c.fusion = cen::Fusion::none;
  } else if (row == "zero-out") {
    c.variant = cen::VariantKind::zero_out;
  } else if (row == "no-divide") {
    c.variant = cen::VariantKind::no_divide;
  } else if (row == "fixed-fraction") {
    c.variant = cen::VariantKind::fixed_fraction;
  } else if (row == "random-fraction") {
    c.variant = cen::VariantKind::random_fraction;
  } else if (row == "concat") {
    c.fusion = cen::Fusion::concat;
  } else if (row == "average") {
    c.fusion = cen::Fusion::average;
  } else if (row == "shared-norms") {
    c.share_norms = true;
  } else if (row == "unshared-convs") {
    c.share_convs = false;
  } else if (row.rfind("unimodal-", 0) == 0) {
    const auto k = row.substr(9);
    if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("unknown ablation row '" + row + "'");
    c.modalities = {static_cast<std::size_t>(std::stoul(k))};
    c.fusion = cen::Fusion::none;
  } else {
    throw ConfigError("unknown ablation row '" + row + "'");
  }
  return c;
}

}  // namespace cencli
