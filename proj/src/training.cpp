#include "ablah/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "ablah/binary_io.hpp"
#include "json.hpp"

namespace ablah {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (k_paths < 1) throw ConfigError("k_paths must be at least 1");
  if (l_max < 2) throw ConfigError("l_max must be at least 2");
  if (!(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0)) throw ConfigError("lr_final_fraction must lie in [0, 1]");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

TrainState init_state(const HinGraph& g, const ModelConfig& model, std::uint64_t seed) {
  TrainState s;
  s.model = model;
  s.params = init_params(g, model, seed);
  s.first_moment = zeros_like(s.params);
  s.second_moment = zeros_like(s.params);
  s.rng = Rng(derive_seed(seed, 0x747261696eULL));
  return s;
}

void adam_step(TrainState& state, const Gradients& grads, double lr, const AdamConfig& adam) {
  visit_tensors(
      [](const std::string& name, const Matrix& g) {
        if (!g.allFinite()) throw std::domain_error("non-finite gradient in tensor '" + name + "'");
      },
      grads);
  const double t = static_cast<double>(state.step + 1);
  const double correct1 = 1.0 - std::pow(adam.beta1, t);
  const double correct2 = 1.0 - std::pow(adam.beta2, t);
  visit_tensors(
      [&](const std::string& name, Matrix& p, Matrix& m, Matrix& v, const Matrix& g) {
        if (g.rows() != p.rows() || g.cols() != p.cols()) {
          throw ad::DimensionError("adam_step: gradient for '" + name + "' is " + ad::shape_of(g) + ", parameter is " +
                                   ad::shape_of(p));
        }
        m = adam.beta1 * m + (1.0 - adam.beta1) * g;
        v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / correct1) / ((v.array() / correct2).sqrt() + adam.eps_hat);
      },
      state.params, state.first_moment, state.second_moment, grads);
  ++state.step;
}

double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double lr0, double final_fraction) {
  if (total_steps == 0) return lr0;
  const double progress = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr0 * (1.0 - (1.0 - final_fraction) * progress);
}

namespace {

void add_tape_gradients(const Tape& tape, const BoundParams& bound, Gradients& acc) {
  visit_tensors(
      [&](const std::string&, const Var& v, Matrix& out) {
        if (const Matrix* g = tape.grad_if_reached(v)) out += *g;
      },
      bound, acc);
}

double accumulate_instance(const ModelParams& params, const ModelConfig& model, const PerturbationConfig& adv,
                           const PathSet& paths, int label, const ForwardOptions& options, Gradients& acc) {
  Tape tape;
  BoundParams bound = bind(tape, params);
  Objective obj = training_objective(tape, bound, model, adv, paths, label, options);
  tape.backward(obj.total);
  add_tape_gradients(tape, bound, acc);
  return obj.total.scalar();
}

struct ChunkResult {
  Gradients grads;
  double loss = 0.0;
  std::size_t processed = 0;
  std::size_t skipped = 0;
};

}  // namespace

InstanceGradient instance_gradient(const ModelParams& params, const ModelConfig& model,
                                   const PerturbationConfig& adv, const PathSet& paths, int label,
                                   const ForwardOptions& options) {
  InstanceGradient out{0.0, zeros_like(params)};
  out.loss = accumulate_instance(params, model, adv, paths, label, options, out.grads);
  return out;
}

std::vector<EpochLog> train(const HinGraph& g, TrainState& state, const TrainConfig& config,
                            const PerturbationConfig& adv, const TrainHooks& hooks, const HinGraph* exclude) {
  config.validate();
  adv.validate();
  state.model.validate();
  check_shapes(state.params, state.model);

  SampleOptions sample_options;
  sample_options.exclude_direct_edge = config.exclude_target_edge;

  std::vector<EpochLog> logs;
  while (state.epoch < config.epochs) {
    if (hooks.stop_after_epoch && state.epoch >= *hooks.stop_after_epoch) break;
    const std::size_t epoch = state.epoch;
    const std::uint64_t epoch_seed = derive_seed(config.seed, 0x65706f6368ULL, epoch);

    TrainingPairs pairs = sample_training_pairs(g, config.negatives_per_positive, epoch_seed, exclude);
    if (pairs.pairs.empty()) throw UnusableTrainingSet("no training instances: the graph has no interactions");
    std::vector<std::size_t> order(pairs.pairs.size());
    for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;
    shuffle(std::span<std::size_t>(order), state.rng);

    const std::uint64_t steps_per_epoch = (order.size() + config.batch_size - 1) / config.batch_size;
    const std::uint64_t total_steps = steps_per_epoch * config.epochs;

    EpochLog log;
    log.epoch = epoch + 1;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::uint64_t> dropout_seeds(end - start);
      for (auto& s : dropout_seeds) s = state.rng();

      auto run_chunk = [&](std::size_t lo, std::size_t hi, ChunkResult& out) {
        out.grads = zeros_like(state.params);
        for (std::size_t n = lo; n < hi; ++n) {
          const LabeledPair& pair = pairs.pairs[order[n]];
          PathSet paths = sample_paths(g, pair.user, pair.item, config.k_paths, config.l_max, epoch_seed, sample_options);
          if (paths.empty()) {
            ++out.skipped;
            continue;
          }
          ForwardOptions fo;
          fo.training = true;
          fo.dropout_seed = dropout_seeds[n - start];
          out.loss += accumulate_instance(state.params, state.model, adv, paths, pair.label, fo, out.grads);
          ++out.processed;
        }
      };

      const std::size_t workers = std::min<std::size_t>(config.threads, end - start);
      std::vector<ChunkResult> chunks(workers);
      if (workers <= 1) {
        run_chunk(start, end, chunks[0]);
      } else {
        std::vector<std::jthread> pool;
        const std::size_t per = (end - start + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
          const std::size_t lo = std::min(end, start + w * per);
          const std::size_t hi = std::min(end, lo + per);
          pool.emplace_back([&, lo, hi, w] { run_chunk(lo, hi, chunks[w]); });
        }
      }

      Gradients batch = std::move(chunks[0].grads);
      std::size_t processed = chunks[0].processed;
      double batch_loss = chunks[0].loss;
      log.skipped += chunks[0].skipped;
      for (std::size_t w = 1; w < chunks.size(); ++w) {
        visit_tensors([](const std::string&, Matrix& a, const Matrix& b) { a += b; }, batch, chunks[w].grads);
        processed += chunks[w].processed;
        batch_loss += chunks[w].loss;
        log.skipped += chunks[w].skipped;
      }
      log.processed += processed;
      loss_sum += batch_loss;
      if (processed == 0) continue;
      const double inv = 1.0 / static_cast<double>(processed);
      visit_tensors([inv](const std::string&, Matrix& m) { m *= inv; }, batch);
      log.learning_rate = lr_schedule(state.step, total_steps, config.learning_rate, config.lr_final_fraction);
      adam_step(state, batch, log.learning_rate, config.adam);
    }
    if (log.processed == 0) {
      throw UnusableTrainingSet("every training instance lacks a path within l_max = " + std::to_string(config.l_max));
    }
    log.mean_loss = loss_sum / static_cast<double>(log.processed);
    ++state.epoch;
    if (hooks.on_epoch_end) log.validation_hr10 = hooks.on_epoch_end(state, state.epoch);
    logs.push_back(log);
  }
  return logs;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'B', 'L', 'A', 'H', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::string model_config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["embedding_dim"] = c.embedding_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["layers"] = c.layers;
  j["scorer_units"] = c.scorer_units;
  j["use_attention"] = c.use_attention;
  j["bidirectional"] = c.bidirectional;
  j["combine"] = c.combine == EmbeddingCombine::Sum ? "sum" : "concat";
  j["dropout_rate"] = c.dropout_rate;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.embedding_dim = j.at("embedding_dim");
    c.hidden_dim = j.at("hidden_dim");
    c.layers = j.at("layers");
    c.scorer_units = j.at("scorer_units");
    c.use_attention = j.at("use_attention");
    c.bidirectional = j.at("bidirectional");
    c.combine = j.at("combine") == "sum" ? EmbeddingCombine::Sum : EmbeddingCombine::Concat;
    c.dropout_rate = j.at("dropout_rate");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid model configuration: ") + e.what());
  }
  return c;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  io::Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(model_config_json(state.model));
  w.put<std::uint64_t>(state.params.value_embeddings.size());
  w.put<std::uint64_t>(state.step);
  w.put<std::uint64_t>(state.epoch);
  w.put_string(rng_state(state.rng));
  std::uint32_t count = 0;
  visit_tensors([&](const std::string&, const Matrix&) { ++count; }, state.params);
  w.put<std::uint32_t>(count);
  visit_tensors(
      [&](const std::string& name, const Matrix& p, const Matrix& m, const Matrix& v) {
        w.put_string(name);
        w.put_matrix(p);
        w.put_matrix(m);
        w.put_matrix(v);
      },
      state.params, state.first_moment, state.second_moment);

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    w.write_to(out, true);
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  io::Reader r = io::Reader::from_stream(in);
  {
    io::Reader peek = r;
    std::string magic;
    try {
      magic = peek.get_bytes(sizeof kCheckpointMagic);
    } catch (const DataError&) {
      throw DataError("checkpoint " + path.string() + " is truncated");
    }
    if (magic != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
      throw DataError("checkpoint " + path.string() + ": bad magic bytes (not a checkpoint file)");
    }
  }
  try {
    r.verify_crc();
  } catch (const DataError& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what() + " (file truncated or corrupted)");
  }
  r.get_bytes(sizeof kCheckpointMagic);
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw DataError("checkpoint " + path.string() + ": unsupported version " + std::to_string(v));
  }
  TrainState s;
  s.model = model_config_from_json(r.get_string());
  const auto slots = r.get<std::uint64_t>();
  s.step = r.get<std::uint64_t>();
  s.epoch = r.get<std::uint64_t>();
  s.rng = rng_from_state(r.get_string());
  const auto count = r.get<std::uint32_t>();

  ModelParams skeleton;
  skeleton.value_embeddings.resize(slots);
  skeleton.forward.resize(static_cast<std::size_t>(s.model.layers));
  if (s.model.bidirectional) skeleton.backward.resize(static_cast<std::size_t>(s.model.layers));
  s.params = skeleton;
  s.first_moment = skeleton;
  s.second_moment = skeleton;
  std::uint32_t seen = 0;
  visit_tensors(
      [&](const std::string& name, Matrix& p, Matrix& m, Matrix& v) {
        if (seen++ >= count) throw DataError("checkpoint holds fewer tensors than its configuration needs");
        const std::string stored = r.get_string();
        if (stored != name) throw DataError("checkpoint tensor '" + stored + "' found where '" + name + "' expected");
        p = r.get_matrix();
        m = r.get_matrix();
        v = r.get_matrix();
      },
      s.params, s.first_moment, s.second_moment);
  if (seen != count || !r.done()) throw DataError("checkpoint has unexpected trailing tensors");
  check_shapes(s.params, s.model);
  return s;
}

std::string checkpoint_manifest(const TrainState& state) {
  std::ostringstream os;
  os << "# step " << state.step << " epoch " << state.epoch << "\n";
  os << "# config " << model_config_json(state.model) << "\n";
  visit_tensors([&](const std::string& name, const Matrix& p) { os << name << "\t" << p.rows() << "x" << p.cols() << "\n"; },
                state.params);
  return os.str();
}

}  // namespace ablah
