#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ablah/adversarial.hpp"
#include "ablah/model.hpp"
#include "ablah/paths.hpp"

namespace ablah {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::size_t k_paths = 5;
  std::size_t l_max = 4;
  std::size_t negatives_per_positive = 4;
  std::uint64_t seed = 42;
  AdamConfig adam;
  double lr_final_fraction = 0.0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::size_t threads = 1;
  bool exclude_target_edge = true;

  void validate() const;
};

struct TrainState {
  ModelConfig model;
  ModelParams params;
  ParamTree<Matrix> first_moment;
  ParamTree<Matrix> second_moment;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  Rng rng;
};

TrainState init_state(const HinGraph& g, const ModelConfig& model, std::uint64_t seed);

// Bias-corrected Adam. Throws std::domain_error naming the tensor when a
// gradient is not finite; nothing is updated in that case.
void adam_step(TrainState& state, const Gradients& grads, double lr, const AdamConfig& adam);

// Linear decay from lr0 at step 0 to lr0 * final_fraction at total_steps.
double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double lr0, double final_fraction);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t processed = 0;
  std::size_t skipped = 0;
  double learning_rate = 0.0;
  std::optional<double> validation_hr10;
};

class UnusableTrainingSet : public DataError {
 public:
  using DataError::DataError;
};

struct TrainHooks {
  // Stop once this many epochs are complete (for resumable runs).
  std::optional<std::size_t> stop_after_epoch;
  // Called after each epoch; may return a validation HR@10 to log.
  std::function<std::optional<double>(const TrainState&, std::size_t epoch)> on_epoch_end;
};

// Runs epochs state.epoch .. config.epochs-1. `exclude` holds interactions
// that must never be drawn as negatives (typically the held-out test edges).
std::vector<EpochLog> train(const HinGraph& g, TrainState& state, const TrainConfig& config,
                            const PerturbationConfig& adv, const TrainHooks& hooks = {},
                            const HinGraph* exclude = nullptr);

// Gradient of the (optionally adversarial) objective for one instance.
struct InstanceGradient {
  double loss = 0.0;
  Gradients grads;
};
InstanceGradient instance_gradient(const ModelParams& params, const ModelConfig& model,
                                   const PerturbationConfig& adv, const PathSet& paths, int label,
                                   const ForwardOptions& options);

// Versioned little-endian container: magic, version, config JSON, counters,
// RNG state, parameters and both Adam moments, then a crc32 trailer.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

// One line per tensor: name and shape.
std::string checkpoint_manifest(const TrainState& state);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace ablah
