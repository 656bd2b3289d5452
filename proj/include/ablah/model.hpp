#pragma once

// Attention-based bidirectional LSTM path scorer.
//
// Every path node is embedded as type + value embedding, run through stacked
// LSTMs in both directions, pooled by attention into one path vector, scored
// by a two-layer MLP; path scores are averaged into the user–item logit.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ablah/autodiff.hpp"
#include "ablah/graph.hpp"
#include "ablah/paths.hpp"
#include "ablah/rng.hpp"

namespace ablah {

using Matrix = Eigen::MatrixXd;
using Tape = ad::BasicTape<double>;
using Var = ad::BasicVar<double>;

enum class EmbeddingCombine { Sum, Concat };

struct ModelConfig {
  int embedding_dim = 32;  // d
  int hidden_dim = 128;    // d_h, per direction
  int layers = 2;
  int scorer_units = 128;  // r
  bool use_attention = true;
  bool bidirectional = true;
  EmbeddingCombine combine = EmbeddingCombine::Sum;
  double dropout_rate = 0.5;

  [[nodiscard]] int input_dim() const { return combine == EmbeddingCombine::Sum ? embedding_dim : 2 * embedding_dim; }
  [[nodiscard]] int state_dim() const { return bidirectional ? 2 * hidden_dim : hidden_dim; }
  void validate() const;
};

// Input maps are d_in x d_h, recurrent maps d_h x d_h, biases d_h x 1.
template <typename T>
struct LstmWeights {
  T w_z, w_i, w_f, w_o;
  T u_z, u_i, u_f, u_o;
  T b_z, b_i, b_f, b_o;
};

// Every learnable tensor of the model. Instantiated with Matrix for values,
// gradients and optimizer moments, and with Var for a tape binding.
template <typename T>
struct ParamTree {
  T type_embeddings;                      // type slots x d
  std::vector<T> value_embeddings;        // per type slot: count x d
  std::vector<LstmWeights<T>> forward;    // per layer
  std::vector<LstmWeights<T>> backward;   // per layer; empty when unidirectional
  T attention;                            // 1 x state_dim
  T scorer_hidden;                        // state_dim x r  (W_2)
  T scorer_output;                        // r x 1          (W_1)
};

using ModelParams = ParamTree<Matrix>;
using Gradients = ParamTree<Matrix>;
using BoundParams = ParamTree<Var>;

namespace detail {
template <typename F, typename... L>
void visit_lstm(const std::string& prefix, F& f, L&... l) {
  f(prefix + "W_z", l.w_z...);
  f(prefix + "W_i", l.w_i...);
  f(prefix + "W_f", l.w_f...);
  f(prefix + "W_o", l.w_o...);
  f(prefix + "U_z", l.u_z...);
  f(prefix + "U_i", l.u_i...);
  f(prefix + "U_f", l.u_f...);
  f(prefix + "U_o", l.u_o...);
  f(prefix + "b_z", l.b_z...);
  f(prefix + "b_i", l.b_i...);
  f(prefix + "b_f", l.b_f...);
  f(prefix + "b_o", l.b_o...);
}
}  // namespace detail

// Calls f(name, t0, t1, ...) for every tensor, in a fixed canonical order,
// across trees of identical structure.
template <typename F, typename Tree, typename... Trees>
void visit_tensors(F&& f, Tree& tree, Trees&... trees) {
  f(std::string("type_embeddings"), tree.type_embeddings, trees.type_embeddings...);
  for (std::size_t s = 0; s < tree.value_embeddings.size(); ++s) {
    f("value_embeddings/" + std::to_string(s), tree.value_embeddings[s], trees.value_embeddings[s]...);
  }
  for (std::size_t l = 0; l < tree.forward.size(); ++l) {
    detail::visit_lstm("lstm/fwd/" + std::to_string(l) + "/", f, tree.forward[l], trees.forward[l]...);
  }
  for (std::size_t l = 0; l < tree.backward.size(); ++l) {
    detail::visit_lstm("lstm/bwd/" + std::to_string(l) + "/", f, tree.backward[l], trees.backward[l]...);
  }
  f(std::string("attention/W_u"), tree.attention, trees.attention...);
  f(std::string("scorer/W_2"), tree.scorer_hidden, trees.scorer_hidden...);
  f(std::string("scorer/W_1"), tree.scorer_output, trees.scorer_output...);
}

// Zero-filled tree shaped like `like`.
ModelParams zeros_like(const ModelParams& like);

// Glorot-uniform weights and embeddings, zero biases, forget-gate bias 1.
// Table sizes follow the graph's type slots and per-slot node counts.
ModelParams init_params(const HinGraph& g, const ModelConfig& config, std::uint64_t seed);

// Layout check: shapes match `config` and are mutually consistent.
void check_shapes(const ModelParams& params, const ModelConfig& config);

BoundParams bind(Tape& tape, const ModelParams& params);
Gradients collect_gradients(const Tape& tape, const BoundParams& bound, const ModelParams& like);

// ---------------------------------------------------------------------------
// Forward building blocks

Var embed_node(const BoundParams& p, const ModelConfig& config, NodeId v);

struct LstmState {
  Var h;
  Var c;
};

LstmState lstm_cell(const LstmWeights<Var>& w, Var x, Var h_prev, Var c_prev);

// Column l is [h_fwd_l ; h_bwd_l] (forward half only when unidirectional).
Var bilstm_forward(const BoundParams& p, const ModelConfig& config, std::span<const Var> embeddings);

struct AttentionPool {
  Var representation;  // state_dim x 1
  Var weights;         // 1 x len
};

AttentionPool attention_pool(Var attention, Var hidden, bool use_attention);

// Inverted-dropout mask (entries 0 or 1/(1-rate)); all ones when rate is 0.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

// W_1ᵀ ReLU(W_2ᵀ R), with an optional mask on the hidden layer.
Var score_path(Var scorer_hidden, Var scorer_output, Var representation, const Matrix* hidden_mask = nullptr);

struct Prediction {
  Var logit;        // s_ui
  Var probability;  // σ(s_ui)
};

Prediction aggregate_and_predict(std::span<const Var> scores);

// −[y log ŷ + (1−y) log(1−ŷ)] computed from the logit.
Var loss(Var logit, int label);

// ---------------------------------------------------------------------------
// Full pass

// Constant offsets injected into a forward pass. Entries left empty are not
// applied. node_embeddings[k] is d_in x len(path k).
struct Perturbation {
  std::vector<Matrix> node_embeddings;
  std::vector<Matrix> path_representations;
  double logit = 0.0;
};

struct ForwardOptions {
  bool training = false;
  // Dropout masks are drawn from this seed; two passes with the same seed
  // see identical masks.
  std::uint64_t dropout_seed = 0;
  const Perturbation* perturbation = nullptr;
};

struct PathTrace {
  std::vector<Var> embeddings;  // h_l before any perturbation
  Var hidden;                   // H̄
  Var attention;                // α
  Var representation;           // R before any perturbation
  Var score;                    // s_k
};

struct ForwardTrace {
  std::vector<PathTrace> paths;
  Var logit;        // s_ui before any perturbation
  Var probability;  // ŷ_ui of the (possibly perturbed) logit
  Var output;       // logit actually fed to the loss
};

ForwardTrace forward(const BoundParams& p, const ModelConfig& config, const PathSet& paths,
                     const ForwardOptions& options = {});

// ŷ for one path set without recording gradients.
double predict(const ModelParams& params, const ModelConfig& config, const PathSet& paths);

// Per-path score and attention weights, evaluation mode.
struct PathScore {
  double score = 0.0;
  std::vector<double> attention;
};
std::vector<PathScore> score_paths(const ModelParams& params, const ModelConfig& config, const PathSet& paths);

}  // namespace ablah
