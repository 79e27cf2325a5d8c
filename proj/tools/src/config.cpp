// SPDX-License-Identifier: Apache-2.0
#include "cencli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cen/error.hpp"

namespace cencli {

namespace {

using cen::ConfigError;
using cen::ParseError;

// Raised by value parsers; turned into a ParseError with the line number.
struct BadValue {
  std::string message;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end)
    throw BadValue{"expected a number, got '" + v + "'"};
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != end)
    throw BadValue{"expected a non-negative integer, got '" + v + "'"};
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw BadValue{"expected true or false, got '" + v + "'"};
}

template <typename F>
auto enum_value(F parse, const std::string& v) {
  try {
    return parse(v);
  } catch (const ConfigError& e) {
    throw BadValue{e.what()};
  }
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  if (v.empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(to_double(part));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
  return out;
}

std::vector<cen::EncoderStage> to_encoder(const std::string& v) {
  std::vector<cen::EncoderStage> out;
  for (const auto& stage : split(v, ',')) {
    const auto f = split(stage, ':');
    if (f.size() != 3) throw BadValue{"encoder stages are channels:kernel:stride, got '" + stage + "'"};
    out.push_back({to_size(f[0]), to_size(f[1]), to_size(f[2])});
  }
  if (out.empty()) throw BadValue{"encoder needs at least one stage"};
  return out;
}

std::vector<cen::DecoderStage> to_decoder(const std::string& v) {
  std::vector<cen::DecoderStage> out;
  if (v.empty()) return out;
  for (const auto& stage : split(v, ',')) {
    const auto f = split(stage, ':');
    if (f.size() != 3) throw BadValue{"decoder stages are channels:kernel:upsample, got '" + stage + "'"};
    out.push_back({to_size(f[0]), to_size(f[1]), to_size(f[2])});
  }
  return out;
}

std::string precision_text(Precision p) { return p == Precision::f32 ? "float" : "double"; }

Precision to_precision(const std::string& v) {
  if (v == "float") return Precision::f32;
  if (v == "double") return Precision::f64;
  throw BadValue{"precision is float or double, got '" + v + "'"};
}

std::string partition_text(cen::Partition p) {
  return p == cen::Partition::divided ? "divided" : "undivided";
}

cen::Partition to_partition(const std::string& v) {
  if (v == "divided") return cen::Partition::divided;
  if (v == "undivided") return cen::Partition::undivided;
  throw BadValue{"partition is divided or undivided, got '" + v + "'"};
}

std::string rule_text(cen::ThresholdRule r) {
  return r == cen::ThresholdRule::magnitude ? "magnitude" : "signed";
}

cen::ThresholdRule to_rule(const std::string& v) {
  if (v == "magnitude") return cen::ThresholdRule::magnitude;
  if (v == "signed") return cen::ThresholdRule::signed_;
  throw BadValue{"threshold_rule is magnitude or signed, got '" + v + "'"};
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  using S = const std::string&;
  auto num = [](double v) { return format_number(v); };
  auto integer = [](std::uint64_t v) { return std::to_string(v); };
  auto boolean = [](bool v) { return std::string(v ? "true" : "false"); };
  static const std::vector<Key> table{
      {"experiment", "topology", [](C& c, S v) { c.topology = enum_value(cen::parse_topology, v); },
       [](const C& c) { return cen::to_string(c.topology); }},
      {"experiment", "fusion", [](C& c, S v) { c.fusion = enum_value(cen::parse_fusion, v); },
       [](const C& c) { return cen::to_string(c.fusion); }},
      {"experiment", "variant", [](C& c, S v) { c.variant = enum_value(cen::parse_variant_kind, v); },
       [](const C& c) { return cen::to_string(c.variant); }},
      {"experiment", "variant_fraction", [](C& c, S v) { c.variant_fraction = to_double(v); },
       [num](const C& c) { return num(c.variant_fraction); }},
      {"experiment", "share_convs", [](C& c, S v) { c.share_convs = to_bool(v); },
       [boolean](const C& c) { return boolean(c.share_convs); }},
      {"experiment", "share_norms", [](C& c, S v) { c.share_norms = to_bool(v); },
       [boolean](const C& c) { return boolean(c.share_norms); }},
      {"experiment", "partition", [](C& c, S v) { c.partition = to_partition(v); },
       [](const C& c) { return partition_text(c.partition); }},
      {"experiment", "threshold_rule", [](C& c, S v) { c.rule = to_rule(v); },
       [](const C& c) { return rule_text(c.rule); }},
      {"experiment", "cycle_shared_decoder", [](C& c, S v) { c.cycle_shared_decoder = to_bool(v); },
       [boolean](const C& c) { return boolean(c.cycle_shared_decoder); }},
      {"experiment", "precision", [](C& c, S v) { c.precision = to_precision(v); },
       [](const C& c) { return precision_text(c.precision); }},

      {"data", "task", [](C& c, S v) { c.task = enum_value(cen::parse_task_kind, v); },
       [](const C& c) { return cen::to_string(c.task); }},
      {"data", "n_train", [](C& c, S v) { c.n_train = to_size(v); },
       [integer](const C& c) { return integer(c.n_train); }},
      {"data", "n_val", [](C& c, S v) { c.n_val = to_size(v); },
       [integer](const C& c) { return integer(c.n_val); }},
      {"data", "seed", [](C& c, S v) { c.data_seed = to_u64(v); },
       [integer](const C& c) { return integer(c.data_seed); }},
      {"data", "height", [](C& c, S v) { c.data.height = to_size(v); },
       [integer](const C& c) { return integer(c.data.height); }},
      {"data", "width", [](C& c, S v) { c.data.width = to_size(v); },
       [integer](const C& c) { return integer(c.data.width); }},
      {"data", "bumps", [](C& c, S v) { c.data.latent.bumps = to_size(v); },
       [integer](const C& c) { return integer(c.data.latent.bumps); }},
      {"data", "bump_width_min", [](C& c, S v) { c.data.latent.width_min = to_double(v); },
       [num](const C& c) { return num(c.data.latent.width_min); }},
      {"data", "bump_width_max", [](C& c, S v) { c.data.latent.width_max = to_double(v); },
       [num](const C& c) { return num(c.data.latent.width_max); }},
      {"data", "coarse_noise", [](C& c, S v) { c.data.coarse_noise = to_double(v); },
       [num](const C& c) { return num(c.data.coarse_noise); }},
      {"data", "edge_noise", [](C& c, S v) { c.data.edge_noise = to_double(v); },
       [num](const C& c) { return num(c.data.edge_noise); }},
      {"data", "noisy_noise", [](C& c, S v) { c.data.noisy_noise = to_double(v); },
       [num](const C& c) { return num(c.data.noisy_noise); }},
      {"data", "classes", [](C& c, S v) { c.data.classes = to_size(v); },
       [integer](const C& c) { return integer(c.data.classes); }},
      {"data", "file", [](C& c, S v) { c.data_file = v; }, [](const C& c) { return c.data_file; }},

      {"model", "encoder",
       [](C& c, S v) { c.net.encoder = to_encoder(v); },
       [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.net.encoder.size(); ++i) {
           const auto& s = c.net.encoder[i];
           out += (i ? "," : "") + std::to_string(s.out_channels) + ":" +
                  std::to_string(s.kernel) + ":" + std::to_string(s.stride);
         }
         return out;
       }},
      {"model", "decoder",
       [](C& c, S v) { c.net.decoder = to_decoder(v); },
       [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.net.decoder.size(); ++i) {
           const auto& s = c.net.decoder[i];
           out += (i ? "," : "") + std::to_string(s.out_channels) + ":" +
                  std::to_string(s.kernel) + ":" + std::to_string(s.upsample);
         }
         return out;
       }},
      {"model", "head_kernel", [](C& c, S v) { c.net.head_kernel = to_size(v); },
       [integer](const C& c) { return integer(c.net.head_kernel); }},
      {"model", "head_upsample", [](C& c, S v) { c.net.head_upsample = to_size(v); },
       [integer](const C& c) { return integer(c.net.head_upsample); }},
      {"model", "norm",
       [](C& c, S v) { c.net.norm_mode = enum_value(cen::parse_norm_mode, v); },
       [](const C& c) { return cen::to_string(c.net.norm_mode); }},
      {"model", "exchange_on",
       [](C& c, S v) { c.net.exchange_on = enum_value(cen::parse_exchange_side, v); },
       [](const C& c) { return cen::to_string(c.net.exchange_on); }},
      {"model", "modalities",
       [](C& c, S v) {
         c.modalities.clear();
         if (v == "all") return;
         for (const auto& part : split(v, ',')) c.modalities.push_back(to_size(part));
         if (c.modalities.empty()) throw BadValue{"modalities is 'all' or a list of indices"};
       },
       [](const C& c) {
         if (c.modalities.empty()) return std::string("all");
         std::string out;
         for (std::size_t i = 0; i < c.modalities.size(); ++i)
           out += (i ? "," : "") + std::to_string(c.modalities[i]);
         return out;
       }},

      {"train", "lr_encoder", [](C& c, S v) { c.train.lr_encoder = to_double(v); },
       [num](const C& c) { return num(c.train.lr_encoder); }},
      {"train", "lr_decoder", [](C& c, S v) { c.train.lr_decoder = to_double(v); },
       [num](const C& c) { return num(c.train.lr_decoder); }},
      {"train", "lr_scores", [](C& c, S v) { c.train.lr_scores = to_double(v); },
       [num](const C& c) { return num(c.train.lr_scores); }},
      {"train", "momentum", [](C& c, S v) { c.train.momentum = to_double(v); },
       [num](const C& c) { return num(c.train.momentum); }},
      {"train", "weight_decay", [](C& c, S v) { c.train.weight_decay = to_double(v); },
       [num](const C& c) { return num(c.train.weight_decay); }},
      {"train", "lambda",
       [](C& c, S v) {
         c.train.lambda = to_double(v);
         c.lambda_set = true;
       },
       [num](const C& c) { return num(c.train.lambda); }},
      {"train", "theta",
       [](C& c, S v) {
         c.train.theta = to_double(v);
         c.theta_set = true;
       },
       [num](const C& c) { return num(c.train.theta); }},
      {"train", "batch_size", [](C& c, S v) { c.train.batch_size = to_size(v); },
       [integer](const C& c) { return integer(c.train.batch_size); }},
      {"train", "epochs", [](C& c, S v) { c.train.epochs = to_size(v); },
       [integer](const C& c) { return integer(c.train.epochs); }},
      {"train", "lr_decay_epoch", [](C& c, S v) { c.train.lr_decay_epoch = to_size(v); },
       [integer](const C& c) { return integer(c.train.lr_decay_epoch); }},
      {"train", "lr_decay_factor", [](C& c, S v) { c.train.lr_decay_factor = to_double(v); },
       [num](const C& c) { return num(c.train.lr_decay_factor); }},
      {"train", "seed", [](C& c, S v) { c.train.seed = to_u64(v); },
       [integer](const C& c) { return integer(c.train.seed); }},
      {"train", "trace_every", [](C& c, S v) { c.train.trace_every = to_size(v); },
       [integer](const C& c) { return integer(c.train.trace_every); }},
      {"train", "random_flow", [](C& c, S v) { c.train.random_flow = to_bool(v); },
       [boolean](const C& c) { return boolean(c.train.random_flow); }},

      {"sweep", "lambdas", [](C& c, S v) { c.sweep_lambdas = to_doubles(v); },
       [](const C& c) { return join_doubles(c.sweep_lambdas); }},
      {"sweep", "thetas", [](C& c, S v) { c.sweep_thetas = to_doubles(v); },
       [](const C& c) { return join_doubles(c.sweep_thetas); }},
  };
  return table;
}

const std::vector<std::string> kSections{"experiment", "data", "model", "train", "sweep"};

// Constraint checks; each names the key it concerns.
void check_constraints(const ExperimentConfig& c,
                       const std::function<void(const std::string&, const std::string&)>& fail) {
  if (c.variant_fraction < 0 || c.variant_fraction > 1)
    fail("variant_fraction", "variant_fraction must be in [0, 1]");
  if (c.n_train < 1) fail("n_train", "n_train must be >= 1");
  if (c.n_val < 1) fail("n_val", "n_val must be >= 1");
  if (c.data.height < 8) fail("height", "height must be >= 8");
  if (c.data.width < 8) fail("width", "width must be >= 8");
  if (c.data.latent.bumps < 1) fail("bumps", "bumps must be >= 1");
  if (!(c.data.latent.width_min > 0)) fail("bump_width_min", "bump_width_min must be > 0");
  if (c.data.latent.width_max < c.data.latent.width_min)
    fail("bump_width_max", "bump_width_max must be >= bump_width_min");
  if (c.data.coarse_noise < 0) fail("coarse_noise", "coarse_noise must be >= 0");
  if (c.data.edge_noise < 0) fail("edge_noise", "edge_noise must be >= 0");
  if (c.data.noisy_noise < 0) fail("noisy_noise", "noisy_noise must be >= 0");
  if (c.data.classes < 2) fail("classes", "classes must be >= 2");
  if (c.train.lr_encoder < 0) fail("lr_encoder", "lr_encoder must be >= 0");
  if (c.train.lr_decoder < 0) fail("lr_decoder", "lr_decoder must be >= 0");
  if (c.train.lr_scores < 0) fail("lr_scores", "lr_scores must be >= 0");
  if (c.train.momentum < 0 || c.train.momentum >= 1) fail("momentum", "momentum must be in [0, 1)");
  if (c.train.weight_decay < 0) fail("weight_decay", "weight_decay must be >= 0");
  if (c.train.lambda < 0) fail("lambda", "lambda must satisfy λ >= 0");
  if (c.train.theta < 0) fail("theta", "theta must satisfy θ >= 0");
  if (c.train.batch_size < 1) fail("batch_size", "batch_size must be >= 1");
  if (c.train.epochs < 1) fail("epochs", "epochs must be >= 1");
  if (!(c.train.lr_decay_factor > 0)) fail("lr_decay_factor", "lr_decay_factor must be > 0");
  for (double v : c.sweep_lambdas)
    if (v < 0) fail("lambdas", "sweep lambdas must satisfy λ >= 0");
  for (double v : c.sweep_thetas)
    if (v < 0) fail("thetas", "sweep thetas must satisfy θ >= 0");
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double default_lambda(cen::TaskKind task) {
  return task == cen::TaskKind::fusion_segmentation || task == cen::TaskKind::mm_mt_quad ? 5e-3
                                                                                         : 1e-3;
}

double default_theta(cen::TaskKind task) {
  return task == cen::TaskKind::fusion_segmentation || task == cen::TaskKind::mm_mt_quad ? 2e-2
                                                                                         : 1e-2;
}

void ExperimentConfig::resolve() {
  if (!lambda_set) train.lambda = default_lambda(task);
  if (!theta_set) train.theta = default_theta(task);
  lambda_set = theta_set = true;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::map<std::string, int> seen;  // "section.key" -> line
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header '" + line + "'", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
        throw ParseError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ParseError("key '" + key + "' outside any section", line_no);
    const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) {
      return k.section == section && k.name == key;
    });
    if (it == keys().end()) throw ParseError("unknown key '" + key + "' in [" + section + "]", line_no);
    const std::string full = section + "." + key;
    if (seen.count(full)) throw ParseError("duplicate key '" + key + "' in [" + section + "]", line_no);
    seen[full] = line_no;
    try {
      it->set(config, value);
    } catch (const BadValue& e) {
      throw ParseError(key + ": " + e.message, line_no);
    }
  }
  config.resolve();
  check_constraints(config, [&](const std::string& key, const std::string& message) {
    int line = 0;
    for (const auto& [full, l] : seen)
      if (full.substr(full.find('.') + 1) == key) line = l;
    throw ParseError(message, line);
  });
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw cen::IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string echo_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& section : kSections) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& k : keys())
      if (k.section == section) {
        const auto value = k.get(config);
        out += k.name + (value.empty() ? " =" : " = " + value) + "\n";
      }
  }
  return out;
}

}  // namespace cencli
