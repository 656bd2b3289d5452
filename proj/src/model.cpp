#include "ablah/model.hpp"

#include <cmath>

namespace ablah {

void ModelConfig::validate() const {
  if (embedding_dim < 1 || hidden_dim < 1 || scorer_units < 1) {
    throw ConfigError("model dimensions d, d_h and r must be at least 1");
  }
  if (layers < 1) throw ConfigError("LSTM layers must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

ModelParams zeros_like(const ModelParams& like) {
  ModelParams out = like;
  visit_tensors([](const std::string&, Matrix& m) { m.setZero(); }, out);
  return out;
}

namespace {

LstmWeights<Matrix> lstm_shapes(int d_in, int d_h) {
  LstmWeights<Matrix> w;
  for (Matrix* m : {&w.w_z, &w.w_i, &w.w_f, &w.w_o}) m->resize(d_in, d_h);
  for (Matrix* m : {&w.u_z, &w.u_i, &w.u_f, &w.u_o}) m->resize(d_h, d_h);
  for (Matrix* m : {&w.b_z, &w.b_i, &w.b_f, &w.b_o}) m->resize(d_h, 1);
  return w;
}

bool is_bias(const std::string& name) { return name.size() >= 4 && name.compare(name.size() - 4, 3, "/b_") == 0; }

}  // namespace

ModelParams init_params(const HinGraph& g, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const int d = config.embedding_dim;
  const int dh = config.hidden_dim;
  ModelParams p;
  p.type_embeddings.resize(static_cast<Eigen::Index>(g.type_slots()), d);
  for (std::size_t s = 0; s < g.type_slots(); ++s) {
    p.value_embeddings.emplace_back(static_cast<Eigen::Index>(g.node_count(static_cast<TypeSlot>(s))), d);
  }
  for (int l = 0; l < config.layers; ++l) {
    const int d_in = l == 0 ? config.input_dim() : dh;
    p.forward.push_back(lstm_shapes(d_in, dh));
    if (config.bidirectional) p.backward.push_back(lstm_shapes(d_in, dh));
  }
  p.attention.resize(1, config.state_dim());
  p.scorer_hidden.resize(config.state_dim(), config.scorer_units);
  p.scorer_output.resize(config.scorer_units, 1);

  Rng rng(derive_seed(seed, 0x696e6974ULL));
  visit_tensors(
      [&](const std::string& name, Matrix& m) {
        if (is_bias(name)) {
          m.setConstant(name.ends_with("b_f") ? 1.0 : 0.0);
          return;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = bound * (2.0 * uniform_unit(rng) - 1.0);
        }
      },
      p);
  return p;
}

void check_shapes(const ModelParams& params, const ModelConfig& config) {
  auto expect = [](const Matrix& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
    if (m.rows() != r || m.cols() != c) {
      throw ad::DimensionError(what + ": expected [" + std::to_string(r) + "x" + std::to_string(c) + "], got " +
                               ad::shape_of(m));
    }
  };
  const int d = config.embedding_dim;
  const int dh = config.hidden_dim;
  expect(params.type_embeddings, params.type_embeddings.rows(), d, "type_embeddings");
  if (params.value_embeddings.size() != static_cast<std::size_t>(params.type_embeddings.rows())) {
    throw ad::DimensionError("value_embeddings: one table per type slot expected");
  }
  for (const Matrix& t : params.value_embeddings) expect(t, t.rows(), d, "value_embeddings");
  const std::size_t layers = static_cast<std::size_t>(config.layers);
  if (params.forward.size() != layers || params.backward.size() != (config.bidirectional ? layers : 0)) {
    throw ad::DimensionError("lstm: layer count does not match the configuration");
  }
  auto check_layers = [&](const std::vector<LstmWeights<Matrix>>& dir) {
    for (std::size_t l = 0; l < dir.size(); ++l) {
      const int d_in = l == 0 ? config.input_dim() : dh;
      const auto& w = dir[l];
      for (const Matrix* m : {&w.w_z, &w.w_i, &w.w_f, &w.w_o}) expect(*m, d_in, dh, "lstm input map");
      for (const Matrix* m : {&w.u_z, &w.u_i, &w.u_f, &w.u_o}) expect(*m, dh, dh, "lstm recurrent map");
      for (const Matrix* m : {&w.b_z, &w.b_i, &w.b_f, &w.b_o}) expect(*m, dh, 1, "lstm bias");
    }
  };
  check_layers(params.forward);
  check_layers(params.backward);
  expect(params.attention, 1, config.state_dim(), "attention/W_u");
  expect(params.scorer_hidden, config.state_dim(), config.scorer_units, "scorer/W_2");
  expect(params.scorer_output, config.scorer_units, 1, "scorer/W_1");
}

BoundParams bind(Tape& tape, const ModelParams& params) {
  BoundParams b;
  b.value_embeddings.resize(params.value_embeddings.size());
  b.forward.resize(params.forward.size());
  b.backward.resize(params.backward.size());
  visit_tensors([&](const std::string&, const Matrix& m, Var& v) { v = tape.parameter(m); }, params, b);
  return b;
}

Gradients collect_gradients(const Tape& tape, const BoundParams& bound, const ModelParams& like) {
  Gradients g = zeros_like(like);
  visit_tensors(
      [&](const std::string&, const Var& v, Matrix& out) {
        if (const Matrix* grad = tape.grad_if_reached(v)) out = *grad;
      },
      bound, g);
  return g;
}

// ---------------------------------------------------------------------------

Var embed_node(const BoundParams& p, const ModelConfig& config, NodeId v) {
  if (v.type >= p.value_embeddings.size() || static_cast<Eigen::Index>(v.index) >= p.value_embeddings[v.type].rows()) {
    throw ContractError("embed_node: unknown node");
  }
  Var type_vec = ad::embedding_lookup(p.type_embeddings, v.type);
  Var value_vec = ad::embedding_lookup(p.value_embeddings[v.type], v.index);
  if (config.combine == EmbeddingCombine::Sum) return type_vec + value_vec;
  return ad::concat({type_vec, value_vec}, 0);
}

LstmState lstm_cell(const LstmWeights<Var>& w, Var x, Var h_prev, Var c_prev) {
  Var z = ad::tanh(ad::affine_tn({{w.w_z, x}, {w.u_z, h_prev}}, w.b_z));
  Var f = ad::sigmoid(ad::affine_tn({{w.w_f, x}, {w.u_f, h_prev}}, w.b_f));
  Var i = ad::sigmoid(ad::affine_tn({{w.w_i, x}, {w.u_i, h_prev}}, w.b_i));
  Var o = ad::sigmoid(ad::affine_tn({{w.w_o, x}, {w.u_o, h_prev}}, w.b_o));
  Var c = ad::hadamard(f, c_prev) + ad::hadamard(i, z);
  Var h = ad::hadamard(o, ad::tanh(c));
  return {h, c};
}

namespace {

std::vector<Var> run_direction(const std::vector<LstmWeights<Var>>& layers, std::vector<Var> sequence) {
  if (sequence.empty()) return sequence;
  Tape& tape = sequence.front().tape();
  for (const auto& w : layers) {
    const Eigen::Index dh = w.b_z.rows();
    Var zero = tape.constant(Matrix::Zero(dh, 1));
    LstmState state{zero, zero};
    std::vector<Var> outputs;
    outputs.reserve(sequence.size());
    for (Var x : sequence) {
      state = lstm_cell(w, x, state.h, state.c);
      outputs.push_back(state.h);
    }
    sequence = std::move(outputs);
  }
  return sequence;
}

}  // namespace

Var bilstm_forward(const BoundParams& p, const ModelConfig& config, std::span<const Var> embeddings) {
  if (embeddings.empty()) throw ContractError("bilstm_forward: empty path");
  std::vector<Var> seq(embeddings.begin(), embeddings.end());
  std::vector<Var> fwd = run_direction(p.forward, seq);
  Var hidden_fwd = ad::concat(std::span<const Var>(fwd), 1);
  if (!config.bidirectional) return hidden_fwd;
  std::reverse(seq.begin(), seq.end());
  std::vector<Var> bwd = run_direction(p.backward, seq);
  std::reverse(bwd.begin(), bwd.end());
  Var hidden_bwd = ad::concat(std::span<const Var>(bwd), 1);
  return ad::concat({hidden_fwd, hidden_bwd}, 0);
}

AttentionPool attention_pool(Var attention, Var hidden, bool use_attention) {
  Var alpha;
  if (use_attention) {
    Var m = ad::tanh(hidden);
    alpha = ad::softmax(ad::matmul(attention, m));
  } else {
    const auto len = hidden.cols();
    alpha = hidden.tape().constant(Matrix::Constant(1, len, 1.0 / static_cast<double>(len)));
  }
  Var r = ad::matmul(hidden, ad::transpose(alpha));
  return {r, alpha};
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask = Matrix::Ones(rows, cols);
  if (rate <= 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = uniform_unit(rng) < rate ? 0.0 : keep;
  }
  return mask;
}

Var score_path(Var scorer_hidden, Var scorer_output, Var representation, const Matrix* hidden_mask) {
  Var hidden = ad::relu(ad::matmul_tn(scorer_hidden, representation));
  if (hidden_mask) hidden = ad::hadamard(hidden, hidden.tape().constant(*hidden_mask));
  return ad::matmul_tn(scorer_output, hidden);
}

Prediction aggregate_and_predict(std::span<const Var> scores) {
  if (scores.empty()) throw ContractError("aggregate_and_predict: no path scores (apply the no-path policy first)");
  Var logit = ad::mean(scores);
  return {logit, ad::sigmoid(logit)};
}

Var loss(Var logit, int label) { return ad::bce_with_logits(logit, label); }

ForwardTrace forward(const BoundParams& p, const ModelConfig& config, const PathSet& paths,
                     const ForwardOptions& options) {
  if (paths.empty()) throw ContractError("forward: empty path set");
  const Perturbation* delta = options.perturbation;
  const bool dropout = options.training && config.dropout_rate > 0.0;
  Rng rng(options.dropout_seed);

  ForwardTrace trace;
  std::vector<Var> scores;
  for (std::size_t k = 0; k < paths.paths.size(); ++k) {
    const Path& path = paths.paths[k];
    if (path.size() < 2) throw ContractError("forward: paths need at least two nodes");
    PathTrace pt;
    std::vector<Var> inputs;
    for (std::size_t l = 0; l < path.size(); ++l) {
      Var e = embed_node(p, config, path.nodes[l]);
      pt.embeddings.push_back(e);
      if (delta && k < delta->node_embeddings.size() && delta->node_embeddings[k].size() != 0) {
        e = e + e.tape().constant(delta->node_embeddings[k].col(static_cast<Eigen::Index>(l)));
      }
      inputs.push_back(e);
    }
    pt.hidden = bilstm_forward(p, config, inputs);
    auto pooled = attention_pool(p.attention, pt.hidden, config.use_attention);
    pt.attention = pooled.weights;
    pt.representation = pooled.representation;
    Var r = pt.representation;
    if (delta && k < delta->path_representations.size() && delta->path_representations[k].size() != 0) {
      r = r + r.tape().constant(delta->path_representations[k]);
    }
    Matrix hidden_mask;
    if (dropout) {
      r = ad::hadamard(r, r.tape().constant(dropout_mask(r.rows(), 1, config.dropout_rate, rng)));
      hidden_mask = dropout_mask(p.scorer_output.rows(), 1, config.dropout_rate, rng);
    }
    pt.score = score_path(p.scorer_hidden, p.scorer_output, r, dropout ? &hidden_mask : nullptr);
    scores.push_back(pt.score);
    trace.paths.push_back(std::move(pt));
  }
  auto pred = aggregate_and_predict(scores);
  trace.logit = pred.logit;
  trace.output = pred.logit;
  trace.probability = pred.probability;
  if (delta && delta->logit != 0.0) {
    trace.output = pred.logit + pred.logit.tape().constant(Matrix::Constant(1, 1, delta->logit));
    trace.probability = ad::sigmoid(trace.output);
  }
  return trace;
}

double predict(const ModelParams& params, const ModelConfig& config, const PathSet& paths) {
  Tape tape(false);
  BoundParams b = bind(tape, params);
  return forward(b, config, paths).probability.scalar();
}

std::vector<PathScore> score_paths(const ModelParams& params, const ModelConfig& config, const PathSet& paths) {
  Tape tape(false);
  BoundParams b = bind(tape, params);
  std::vector<PathScore> out;
  if (paths.empty()) return out;
  ForwardTrace trace = forward(b, config, paths);
  for (const PathTrace& pt : trace.paths) {
    const Matrix& a = pt.attention.value();
    out.push_back(PathScore{pt.score.scalar(), std::vector<double>(a.data(), a.data() + a.size())});
  }
  return out;
}

}  // namespace ablah
