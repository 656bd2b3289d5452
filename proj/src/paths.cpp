#include "ablah/paths.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "ablah/rng.hpp"

namespace ablah {

namespace {

void require_endpoints(const HinGraph& g, NodeId user, NodeId item, const char* op) {
  if (user.type != kUserSlot || !g.contains(user)) throw ContractError(std::string(op) + ": start is not a User node");
  if (item.type != kItemSlot || !g.contains(item)) throw ContractError(std::string(op) + ": end is not an Item node");
}

bool contains_node(const std::vector<NodeId>& seq, NodeId v) {
  return std::find(seq.begin(), seq.end(), v) != seq.end();
}

// Depth-first search in ascending neighbour order; stops when visit() returns false.
template <typename Visit>
bool dfs(const HinGraph& g, std::vector<NodeId>& stack, NodeId item, std::size_t l_max, bool exclude_direct,
         Visit& visit) {
  const NodeId here = stack.back();
  if (here == item) return visit(stack);
  if (stack.size() >= l_max) return true;
  for (NodeId next : g.neighbors(here)) {
    if (contains_node(stack, next)) continue;
    if (exclude_direct && stack.size() == 1 && next == item) continue;
    stack.push_back(next);
    const bool go_on = dfs(g, stack, item, l_max, exclude_direct, visit);
    stack.pop_back();
    if (!go_on) return false;
  }
  return true;
}

}  // namespace

PathSet sample_paths(const HinGraph& g, NodeId user, NodeId item, std::size_t k, std::size_t l_max,
                     std::uint64_t seed, const SampleOptions& options) {
  require_endpoints(g, user, item, "sample_paths");
  if (k == 0) throw ContractError("sample_paths: k must be at least 1");
  if (l_max < 2) throw ContractError("sample_paths: l_max must be at least 2");

  PathSet out{user, item, {}};
  std::set<std::vector<NodeId>> found;
  Rng rng(derive_seed(seed, user.index, item.index));

  const std::size_t budget = options.budget_per_path * k;
  std::size_t rejected = 0;
  std::vector<NodeId> walk;
  std::vector<NodeId> choices;
  while (out.paths.size() < k && rejected < budget) {
    walk.assign(1, user);
    bool reached = false;
    while (walk.size() < l_max) {
      choices.clear();
      for (NodeId n : g.neighbors(walk.back())) {
        if (contains_node(walk, n)) continue;
        if (options.exclude_direct_edge && walk.size() == 1 && n == item) continue;
        choices.push_back(n);
      }
      if (choices.empty()) break;
      walk.push_back(choices[uniform_index(rng, choices.size())]);
      if (walk.back() == item) {
        reached = true;
        break;
      }
    }
    if (reached && found.insert(walk).second) {
      out.paths.push_back(Path{walk});
    } else {
      ++rejected;
    }
  }

  if (out.paths.size() < k && options.dfs_fallback) {
    std::vector<NodeId> stack{user};
    auto collect = [&](const std::vector<NodeId>& p) {
      if (found.insert(p).second) out.paths.push_back(Path{p});
      return out.paths.size() < k;
    };
    dfs(g, stack, item, l_max, options.exclude_direct_edge, collect);
  }
  return out;
}

std::vector<Path> enumerate_paths_oracle(const HinGraph& g, NodeId user, NodeId item, std::size_t l_max,
                                         std::size_t limit) {
  require_endpoints(g, user, item, "enumerate_paths_oracle");
  std::vector<Path> out;
  if (l_max < 2) return out;
  std::vector<NodeId> stack{user};
  auto collect = [&](const std::vector<NodeId>& p) {
    if (out.size() >= limit) throw OracleOverflow("path enumeration exceeded " + std::to_string(limit) + " paths");
    out.push_back(Path{p});
    return true;
  };
  dfs(g, stack, item, l_max, false, collect);
  std::sort(out.begin(), out.end());
  return out;
}

bool is_valid_path(const HinGraph& g, const Path& p, std::size_t l_max) {
  if (p.size() < 2 || p.size() > l_max) return false;
  if (p.nodes.front().type != kUserSlot || p.nodes.back().type != kItemSlot) return false;
  for (NodeId v : p.nodes) {
    if (!g.contains(v)) return false;
  }
  for (std::size_t l = 1; l < p.size(); ++l) {
    if (!g.adjacent(p.nodes[l - 1], p.nodes[l])) return false;
  }
  std::vector<NodeId> sorted = p.nodes;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

TrainingPairs sample_training_pairs(const HinGraph& g, std::size_t negatives_per_positive, std::uint64_t seed,
                                    const HinGraph* exclude) {
  TrainingPairs out;
  Rng rng(derive_seed(seed, 0x7061697273ULL));
  std::vector<std::uint32_t> pool;
  for (std::uint32_t u = 0; u < g.users(); ++u) {
    const auto items = g.items_of(u);
    if (items.empty()) continue;
    pool.clear();
    for (std::uint32_t j = 0; j < g.items(); ++j) {
      if (g.interacted(u, j)) continue;
      if (exclude && u < exclude->users() && j < exclude->items() && exclude->interacted(u, j)) continue;
      pool.push_back(j);
    }
    const std::size_t take = std::min(negatives_per_positive, pool.size());
    for (std::uint32_t i : items) {
      out.pairs.push_back(LabeledPair{NodeId{kUserSlot, u}, NodeId{kItemSlot, i}, 1});
      // Partial Fisher–Yates: the first `take` slots become a uniform sample.
      for (std::size_t n = 0; n < take; ++n) {
        std::swap(pool[n], pool[n + uniform_index(rng, pool.size() - n)]);
        out.pairs.push_back(LabeledPair{NodeId{kUserSlot, u}, NodeId{kItemSlot, pool[n]}, 0});
      }
      out.negative_shortfall += negatives_per_positive - take;
    }
  }
  return out;
}

void write_path_cache(std::ostream& out, const HinGraph& g, std::span<const Path> paths) {
  for (const Path& p : paths) {
    for (std::size_t l = 0; l < p.size(); ++l) {
      if (l) out << ',';
      out << g.node_type(p.nodes[l].type).name() << ':' << p.nodes[l].index;
    }
    out << '\n';
  }
}

std::vector<Path> read_path_cache(std::istream& in, const HinGraph& g) {
  std::vector<Path> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Path p;
    std::istringstream tokens(line);
    std::string token;
    while (std::getline(tokens, token, ',')) {
      const auto colon = token.rfind(':');
      const auto slot = colon == std::string::npos ? std::nullopt : g.find_type(token.substr(0, colon));
      if (!slot) throw DataError("path cache line " + std::to_string(lineno) + ": bad token '" + token + "'");
      std::uint32_t index = 0;
      try {
        index = static_cast<std::uint32_t>(std::stoul(token.substr(colon + 1)));
      } catch (const std::exception&) {
        throw DataError("path cache line " + std::to_string(lineno) + ": bad index in '" + token + "'");
      }
      p.nodes.push_back(NodeId{*slot, index});
    }
    if (!is_valid_path(g, p, p.size())) {
      throw DataError("path cache line " + std::to_string(lineno) + ": not a valid path in this graph");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::map<std::pair<NodeId, NodeId>, PathSet> group_by_endpoints(std::span<const Path> paths) {
  std::map<std::pair<NodeId, NodeId>, PathSet> out;
  for (const Path& p : paths) {
    auto key = std::make_pair(p.nodes.front(), p.nodes.back());
    auto [it, inserted] = out.try_emplace(key, PathSet{key.first, key.second, {}});
    it->second.paths.push_back(p);
  }
  return out;
}

}  // namespace ablah
