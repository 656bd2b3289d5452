#pragma once

// Run configuration: every model, training, adversarial, evaluation, data and
// synthetic-data setting behind one flat key space. Files use `key = value`
// lines; the same keys are accepted as command-line overrides.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ablah/adversarial.hpp"
#include "ablah/evaluation.hpp"
#include "ablah/model.hpp"
#include "ablah/synth.hpp"
#include "ablah/training.hpp"

namespace ablah {

struct DataConfig {
  std::string interactions;
  std::vector<std::string> aux;
  std::size_t min_user_interactions = 5;
  std::vector<std::string> directed_edge_types;
  std::string graph;  // ingested bundle directory
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PerturbationConfig adversarial;
  EvalConfig eval;
  SplitConfig split;
  SynthConfig synth;
  DataConfig data;
  std::string runs_dir = "runs";

  // Copies the shared seed, path and thread settings into every section.
  void sync();
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  bool sweepable = false;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey& config_key(const std::string& name);

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// `key = value` lines; '#' starts a comment; unknown keys are errors.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");
RunConfig load_config_file(const std::string& path);

// Every key with its current value, one per line, in registry order.
std::string config_to_text(const RunConfig& config);
// Eight hex digits identifying the full configuration.
std::string config_hash(const RunConfig& config);

// Values for a one-factor sweep: "16,32,64" or "start:stop:step".
std::vector<std::string> parse_sweep_values(const std::string& spec);
void require_sweepable(const std::string& key);

}  // namespace ablah
