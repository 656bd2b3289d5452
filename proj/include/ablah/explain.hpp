#pragma once

// Per-path explanations: which connecting paths drive a user–item score,
// their display weights and where the attention falls along each path.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ablah/graph.hpp"
#include "ablah/model.hpp"

namespace ablah {

struct ExplainedNode {
  std::string type;
  std::string key;
  friend bool operator==(const ExplainedNode&, const ExplainedNode&) = default;
};

struct ExplainedPath {
  std::vector<ExplainedNode> nodes;
  std::vector<std::string> edges;  // edges[l] joins nodes[l] and nodes[l+1]
  double score = 0.0;              // s_k
  double weight = 0.0;             // softmax of s_k over the listed paths
  std::vector<double> attention;   // α over nodes
  friend bool operator==(const ExplainedPath&, const ExplainedPath&) = default;
};

struct Explanation {
  ExplainedNode user;
  ExplainedNode item;
  double probability = 0.0;  // ŷ; 0 without evidence
  std::vector<ExplainedPath> paths;  // by weight, descending

  [[nodiscard]] bool has_evidence() const { return !paths.empty(); }
  [[nodiscard]] std::string to_json() const;
  static Explanation from_json(const std::string& text);
  // One path per line: weight, then the typed walk with edge labels.
  [[nodiscard]] std::string to_text() const;
  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// Softmax over scores with max subtraction.
std::vector<double> display_weights(std::span<const double> scores);

Explanation explain(const ModelParams& params, const ModelConfig& model, const HinGraph& g, const KeyMap& keys,
                    NodeId user, NodeId item, std::size_t k, std::size_t l_max, std::uint64_t seed);

// Weights of one shared path set under two models.
struct DirectionComparison {
  std::vector<std::string> paths;  // rendered walks
  std::vector<double> bidirectional;
  std::vector<double> unidirectional;
  std::size_t top_bidirectional = 0;
  std::size_t top_unidirectional = 0;

  [[nodiscard]] std::string to_text() const;
};

DirectionComparison compare_directions(const ModelParams& bi_params, const ModelConfig& bi_model,
                                       const ModelParams& uni_params, const ModelConfig& uni_model, const HinGraph& g,
                                       const KeyMap& keys, NodeId user, NodeId item, std::size_t k, std::size_t l_max,
                                       std::uint64_t seed);

}  // namespace ablah
