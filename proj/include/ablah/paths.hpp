#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ablah/graph.hpp"

namespace ablah {

// A simple User -> ... -> Item node sequence.
struct Path {
  std::vector<NodeId> nodes;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
  friend auto operator<=>(const Path&, const Path&) = default;
};

struct PathSet {
  NodeId user;
  NodeId item;
  std::vector<Path> paths;

  [[nodiscard]] bool empty() const { return paths.empty(); }
  [[nodiscard]] std::size_t size() const { return paths.size(); }
};

struct SampleOptions {
  // Rejected walks allowed per requested path before the DFS fallback.
  std::size_t budget_per_path = 100;
  bool dfs_fallback = true;
  // Ignore a direct user–item edge, so a training positive cannot be
  // explained by the very interaction it is labelled with.
  bool exclude_direct_edge = false;
};

// Up to `k` distinct simple paths from `user` to `item` with at most `l_max`
// nodes. Walks start at the user and step to a uniformly chosen unvisited
// neighbour; a walk is kept when it reaches the item. After
// budget_per_path * k rejected walks, a depth-first enumeration in ascending
// neighbour order tops the set up. Deterministic in (graph, endpoints, k,
// l_max, seed).
PathSet sample_paths(const HinGraph& g, NodeId user, NodeId item, std::size_t k, std::size_t l_max,
                     std::uint64_t seed, const SampleOptions& options = {});

class OracleOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every simple path user -> item with at most l_max nodes, in lexicographic
// order. Test oracle; throws OracleOverflow beyond `limit` paths.
std::vector<Path> enumerate_paths_oracle(const HinGraph& g, NodeId user, NodeId item, std::size_t l_max,
                                         std::size_t limit = 10'000);

// Endpoint types, adjacency, simplicity and the length bound.
bool is_valid_path(const HinGraph& g, const Path& p, std::size_t l_max);

struct LabeledPair {
  NodeId user;
  NodeId item;
  int label = 0;
};

struct TrainingPairs {
  std::vector<LabeledPair> pairs;
  // Negatives that could not be drawn because a user ran out of unseen items.
  std::size_t negative_shortfall = 0;
};

// Each observed interaction yields (u, i, 1) followed by up to
// `negatives_per_positive` distinct (u, j, 0), j drawn uniformly from items
// the user never interacted with. Items the user touched in `exclude` (when
// given) are never drawn as negatives either.
TrainingPairs sample_training_pairs(const HinGraph& g, std::size_t negatives_per_positive, std::uint64_t seed,
                                    const HinGraph* exclude = nullptr);

// Path cache: one path per line, comma-separated `Type:index` tokens.
void write_path_cache(std::ostream& out, const HinGraph& g, std::span<const Path> paths);
std::vector<Path> read_path_cache(std::istream& in, const HinGraph& g);
std::map<std::pair<NodeId, NodeId>, PathSet> group_by_endpoints(std::span<const Path> paths);

}  // namespace ablah
