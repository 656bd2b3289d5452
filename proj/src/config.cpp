#include "ablah/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <type_traits>

#include "ablah/binary_io.hpp"

namespace ablah {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string s = trim(raw);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = unquote(trim(part));
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <typename T>
T parse_value(const std::string& key, const std::string& raw) {
  const std::string v = unquote(trim(raw));
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    bad_value(key, v, "true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    return split_list(raw);
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    std::vector<std::size_t> out;
    for (const auto& part : split_list(raw)) out.push_back(parse_value<std::size_t>(key, part));
    return out;
  } else {
    T out{};
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
      bad_value(key, v, std::is_integral_v<T> ? "an integer" : "a number");
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(out)) bad_value(key, v, "a finite number");
    }
    return out;
  }
}

template <typename T>
std::string format_value(const T& value) {
  if constexpr (std::is_same_v<T, bool>) {
    return value ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return "\"" + value + "\"";
  } else if constexpr (std::is_same_v<T, std::vector<std::string>> || std::is_same_v<T, std::vector<std::size_t>>) {
    std::string out = "[";
    for (std::size_t n = 0; n < value.size(); ++n) {
      if (n) out += ", ";
      out += format_value(value[n]);
    }
    return out + "]";
  } else {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
  }
}

template <typename Access>
ConfigKey field(std::string name, std::string help, bool sweepable, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  return ConfigKey{name, std::move(help), sweepable,
                   [access, name](RunConfig& c, const std::string& v) { access(c) = parse_value<T>(name, v); },
                   [access](const RunConfig& c) { return format_value(access(c)); }};
}

template <typename E, typename Access>
ConfigKey choice(std::string name, std::string help, std::vector<std::pair<std::string, E>> options, Access access) {
  std::string expected;
  for (const auto& [label, e] : options) expected += (expected.empty() ? "" : " | ") + label;
  return ConfigKey{
      name, help + " (" + expected + ")", true,
      [=](RunConfig& c, const std::string& raw) {
        const std::string v = unquote(trim(raw));
        for (const auto& [label, e] : options) {
          if (label == v) {
            access(c) = e;
            return;
          }
        }
        bad_value(name, v, expected.c_str());
      },
      [=](const RunConfig& c) {
        for (const auto& [label, e] : options) {
          if (access(c) == e) return "\"" + label + "\"";
        }
        return std::string("\"?\"");
      }};
}

std::vector<ConfigKey> make_keys() {
  std::vector<ConfigKey> k;
  k.push_back(field("seed", "global seed for initialisation, sampling, splits and candidates", true,
                    [](auto& c) -> auto& { return c.train.seed; }));

  k.push_back(field("embedding_dim", "node embedding dimension d", true,
                    [](auto& c) -> auto& { return c.model.embedding_dim; }));
  k.push_back(field("hidden_dim", "LSTM hidden size per direction", true,
                    [](auto& c) -> auto& { return c.model.hidden_dim; }));
  k.push_back(field("layers", "stacked LSTM layers", true, [](auto& c) -> auto& { return c.model.layers; }));
  k.push_back(field("scorer_units", "hidden units of the path scorer", true,
                    [](auto& c) -> auto& { return c.model.scorer_units; }));
  k.push_back(field("use_attention", "attention pooling; off averages hidden states", true,
                    [](auto& c) -> auto& { return c.model.use_attention; }));
  k.push_back(field("bidirectional", "run a backward LSTM as well", true,
                    [](auto& c) -> auto& { return c.model.bidirectional; }));
  k.push_back(choice<EmbeddingCombine>("combine", "type/value embedding combination",
                                       {{"sum", EmbeddingCombine::Sum}, {"concat", EmbeddingCombine::Concat}},
                                       [](auto& c) -> auto& { return c.model.combine; }));
  k.push_back(field("dropout", "dropout rate during training", true,
                    [](auto& c) -> auto& { return c.model.dropout_rate; }));

  k.push_back(field("learning_rate", "Adam learning rate", true,
                    [](auto& c) -> auto& { return c.train.learning_rate; }));
  k.push_back(field("lr_final_fraction", "final learning rate as a fraction of the initial one", true,
                    [](auto& c) -> auto& { return c.train.lr_final_fraction; }));
  k.push_back(field("batch_size", "instances per update", true, [](auto& c) -> auto& { return c.train.batch_size; }));
  k.push_back(field("epochs", "training epochs", true, [](auto& c) -> auto& { return c.train.epochs; }));
  k.push_back(field("k_paths", "paths sampled per user-item pair", true,
                    [](auto& c) -> auto& { return c.train.k_paths; }));
  k.push_back(field("l_max", "maximum path length in nodes", true, [](auto& c) -> auto& { return c.train.l_max; }));
  k.push_back(field("negatives_per_positive", "sampled negatives per observed interaction", true,
                    [](auto& c) -> auto& { return c.train.negatives_per_positive; }));
  k.push_back(field("exclude_target_edge", "ignore the direct user-item edge when sampling training paths", true,
                    [](auto& c) -> auto& { return c.train.exclude_target_edge; }));
  k.push_back(field("checkpoint_every", "save a checkpoint every N epochs (0: only at the end)", false,
                    [](auto& c) -> auto& { return c.train.checkpoint_every; }));
  k.push_back(field("threads", "worker threads", false, [](auto& c) -> auto& { return c.train.threads; }));
  k.push_back(field("adam_beta1", "Adam first-moment decay", true,
                    [](auto& c) -> auto& { return c.train.adam.beta1; }));
  k.push_back(field("adam_beta2", "Adam second-moment decay", true,
                    [](auto& c) -> auto& { return c.train.adam.beta2; }));
  k.push_back(field("adam_eps", "Adam denominator offset", true,
                    [](auto& c) -> auto& { return c.train.adam.eps_hat; }));

  k.push_back(field("epsilon", "adversarial perturbation size", true,
                    [](auto& c) -> auto& { return c.adversarial.epsilon; }));
  k.push_back(field("lambda", "weight of the adversarial loss (0 disables it)", true,
                    [](auto& c) -> auto& { return c.adversarial.lambda; }));
  k.push_back(choice<PerturbationTarget>("perturb_target", "tensor receiving the perturbation",
                                         {{"node_embeddings", PerturbationTarget::NodeEmbeddings},
                                          {"path_representation", PerturbationTarget::PathRepresentation},
                                          {"logit", PerturbationTarget::Logit}},
                                         [](auto& c) -> auto& { return c.adversarial.target; }));
  k.push_back(choice<PerturbationNorm>("perturb_norm", "normalisation scope of the perturbation",
                                       {{"joint", PerturbationNorm::Joint}, {"per_tensor", PerturbationNorm::PerTensor}},
                                       [](auto& c) -> auto& { return c.adversarial.norm; }));
  k.push_back(field("perturb_positives_only", "perturb positive instances only", true,
                    [](auto& c) -> auto& { return c.adversarial.positives_only; }));

  k.push_back(field("eval_ks", "ranking cutoffs", false, [](auto& c) -> auto& { return c.eval.ks; }));
  k.push_back(field("candidate_negatives", "sampled negatives per test user (0: full catalog)", true,
                    [](auto& c) -> auto& { return c.eval.candidate_negatives; }));
  k.push_back(choice<SplitMode>("split_mode", "test split",
                                {{"holdout", SplitMode::HoldoutThenLeaveOneOut}, {"leave_one_out", SplitMode::LeaveOneOut}},
                                [](auto& c) -> auto& { return c.split.mode; }));
  k.push_back(field("test_fraction", "share of each user's items held out in holdout mode", true,
                    [](auto& c) -> auto& { return c.split.test_fraction; }));

  k.push_back(field("interactions", "interaction TSV file", false,
                    [](auto& c) -> auto& { return c.data.interactions; }));
  k.push_back(field("aux", "auxiliary edge TSV files", false, [](auto& c) -> auto& { return c.data.aux; }));
  k.push_back(field("min_user_interactions", "drop users with fewer interactions", false,
                    [](auto& c) -> auto& { return c.data.min_user_interactions; }));
  k.push_back(field("directed_edge_types", "edge types stored one-way", false,
                    [](auto& c) -> auto& { return c.data.directed_edge_types; }));
  k.push_back(field("graph", "ingested graph bundle directory", false, [](auto& c) -> auto& { return c.data.graph; }));
  k.push_back(field("runs_dir", "parent directory of run directories", false,
                    [](auto& c) -> auto& { return c.runs_dir; }));

  k.push_back(field("synth_users", "synthetic users", false, [](auto& c) -> auto& { return c.synth.users; }));
  k.push_back(field("synth_items", "synthetic items", false, [](auto& c) -> auto& { return c.synth.items; }));
  k.push_back(field("synth_artists", "synthetic artists", false, [](auto& c) -> auto& { return c.synth.artists; }));
  k.push_back(field("synth_albums_per_artist", "synthetic albums per artist", false,
                    [](auto& c) -> auto& { return c.synth.albums_per_artist; }));
  k.push_back(field("synth_interactions_per_user", "synthetic interactions per user", false,
                    [](auto& c) -> auto& { return c.synth.interactions_per_user; }));
  k.push_back(field("synth_blocks", "synthetic user blocks", false, [](auto& c) -> auto& { return c.synth.blocks; }));
  k.push_back(field("synth_artists_per_block", "artists preferred by each block", false,
                    [](auto& c) -> auto& { return c.synth.artists_per_block; }));
  k.push_back(field("synth_noise", "share of uniformly random synthetic interactions", false,
                    [](auto& c) -> auto& { return c.synth.noise; }));
  k.push_back(field("synth_seed", "seed of the synthetic generator", false,
                    [](auto& c) -> auto& { return c.synth.seed; }));
  return k;
}

}  // namespace

void RunConfig::sync() {
  split.seed = train.seed;
  eval.seed = train.seed;
  eval.k_paths = train.k_paths;
  eval.l_max = train.l_max;
  eval.threads = train.threads;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  adversarial.validate();
  eval.validate();
  if (split.mode == SplitMode::HoldoutThenLeaveOneOut && !(split.test_fraction > 0.0 && split.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = make_keys();
  return keys;
}

const ConfigKey& config_key(const std::string& name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown configuration key '" + name + "'");
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  config_key(key).set(config, value);
  config.sync();
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return config_key(key).get(config); }

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    // A '#' inside quotes is part of the value.
    bool quoted = false;
    for (std::size_t n = 0; n < line.size(); ++n) {
      if (line[n] == '"') quoted = !quoted;
      if (line[n] == '#' && !quoted) {
        line.resize(n);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      set_config_value(config, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig config;
  config.sync();
  apply_config_text(config, ss.str(), path);
  return config;
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const ConfigKey& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::string config_hash(const RunConfig& config) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << io::crc32(config_to_text(config));
  return os.str();
}

std::vector<std::string> parse_sweep_values(const std::string& spec) {
  const std::string s = trim(spec);
  if (s.find(':') != std::string::npos && s.find(',') == std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(trim(part));
    if (parts.size() != 3) throw ConfigError("sweep range must be start:stop:step, got '" + s + "'");
    const auto start = parse_value<double>("sweep start", parts[0]);
    const auto stop = parse_value<double>("sweep stop", parts[1]);
    const auto step = parse_value<double>("sweep step", parts[2]);
    if (!(step > 0.0) || stop < start) throw ConfigError("sweep range needs step > 0 and stop >= start");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<std::string> out;
    for (std::size_t n = 0; n < count; ++n) {
      // snap to the step's decimal grid: 0.1 + 2*0.1 prints as 0.3
      const double v = std::round((start + static_cast<double>(n) * step) * 1e9) / 1e9;
      out.push_back(format_value(v));
    }
    return out;
  }
  auto out = split_list(s);
  if (out.empty()) throw ConfigError("sweep needs at least one value");
  return out;
}

void require_sweepable(const std::string& key) {
  if (!config_key(key).sweepable) throw ConfigError("'" + key + "' cannot be swept");
}

}  // namespace ablah
