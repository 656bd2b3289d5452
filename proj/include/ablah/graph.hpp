#pragma once

// Heterogeneous information network: typed nodes, typed edges, and the
// TSV ingestion path that builds one from edge lists.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ablah/error.hpp"

namespace ablah {

// Node category. The four built-in tags always occupy type slots 0..3;
// any other name is an extensible type appended after them.
class NodeType {
 public:
  explicit NodeType(std::string name);

  static NodeType user() { return NodeType("User"); }
  static NodeType item() { return NodeType("Item"); }
  static NodeType artist() { return NodeType("Artist"); }
  static NodeType album() { return NodeType("Album"); }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] bool builtin() const;

  friend bool operator==(const NodeType&, const NodeType&) = default;

 private:
  std::string name_;
};

class EdgeType {
 public:
  explicit EdgeType(std::string name);
  [[nodiscard]] const std::string& name() const { return name_; }
  friend bool operator==(const EdgeType&, const EdgeType&) = default;

 private:
  std::string name_;
};

using TypeSlot = std::uint16_t;
using EdgeTypeId = std::uint16_t;

inline constexpr TypeSlot kUserSlot = 0;
inline constexpr TypeSlot kItemSlot = 1;
inline constexpr TypeSlot kArtistSlot = 2;
inline constexpr TypeSlot kAlbumSlot = 3;
inline constexpr std::size_t kBuiltinSlots = 4;

struct NodeId {
  TypeSlot type = 0;
  std::uint32_t index = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct Adjacent {
  NodeId node;
  EdgeTypeId edge_type = 0;

  friend auto operator<=>(const Adjacent&, const Adjacent&) = default;
};

struct Edge {
  NodeId a;
  NodeId b;
  EdgeTypeId type = 0;
};

struct GraphStats {
  std::vector<std::pair<std::string, std::size_t>> nodes_per_type;
  std::vector<std::pair<std::string, std::size_t>> edges_per_type;
  std::size_t interactions = 0;
  // interactions / (users * items)
  double interaction_density = 0.0;
};

class HinGraph;

class BuildPhaseError : public ContractError {
 public:
  using ContractError::ContractError;
};

class HeterogeneityError : public DataError {
 public:
  using DataError::DataError;
};

class HinGraphBuilder {
 public:
  HinGraphBuilder();

  TypeSlot register_type(const NodeType& type);
  EdgeTypeId register_edge_type(const EdgeType& type, bool undirected = true);

  NodeId add_node(const NodeType& type);
  NodeId add_node(TypeSlot slot);

  // Returns false when the edge already exists (it is not added twice).
  bool add_edge(NodeId a, NodeId b, const EdgeType& type);
  bool add_edge(NodeId a, NodeId b, EdgeTypeId type);

  [[nodiscard]] std::size_t node_count(TypeSlot slot) const;
  [[nodiscard]] bool frozen() const { return frozen_; }

  // Ends the build phase. Throws HeterogeneityError when |T_V| + |T_E| < 3
  // and DataError when the graph has no users or no items.
  HinGraph freeze_and_validate();

 private:
  void require_building(const char* op) const;
  void require_node(NodeId v, const char* op) const;

  std::vector<NodeType> types_;
  std::vector<std::size_t> counts_;
  std::vector<EdgeType> edge_types_;
  std::vector<bool> undirected_;
  std::vector<Edge> edges_;
  std::set<std::tuple<NodeId, NodeId, EdgeTypeId>> seen_;
  bool frozen_ = false;
};

// Immutable after construction; safe to share between threads.
class HinGraph {
 public:
  [[nodiscard]] std::size_t type_slots() const { return types_.size(); }
  [[nodiscard]] const NodeType& node_type(TypeSlot slot) const { return types_.at(slot); }
  [[nodiscard]] std::optional<TypeSlot> find_type(const std::string& name) const;
  [[nodiscard]] std::size_t node_count(TypeSlot slot) const { return slot < counts_.size() ? counts_[slot] : 0; }
  [[nodiscard]] std::size_t users() const { return node_count(kUserSlot); }
  [[nodiscard]] std::size_t items() const { return node_count(kItemSlot); }
  [[nodiscard]] bool contains(NodeId v) const { return v.type < counts_.size() && v.index < counts_[v.type]; }

  [[nodiscard]] std::size_t edge_type_count() const { return edge_types_.size(); }
  [[nodiscard]] const EdgeType& edge_type(EdgeTypeId id) const { return edge_types_.at(id); }
  [[nodiscard]] bool undirected(EdgeTypeId id) const { return undirected_.at(id); }
  [[nodiscard]] std::optional<EdgeTypeId> find_edge_type(const std::string& name) const;
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }

  // Sorted by (type, index); deduplicated across edge types.
  [[nodiscard]] std::span<const NodeId> neighbors(NodeId v) const;
  [[nodiscard]] std::vector<NodeId> neighbors(NodeId v, EdgeTypeId t) const;
  [[nodiscard]] std::vector<NodeId> neighbors(NodeId v, std::optional<EdgeTypeId> t) const;
  [[nodiscard]] std::span<const Adjacent> adjacency(NodeId v) const;
  [[nodiscard]] bool adjacent(NodeId a, NodeId b) const;
  // Edge types that carry a -> b, ascending.
  [[nodiscard]] std::vector<EdgeTypeId> edge_types_between(NodeId a, NodeId b) const;

  // Items the user interacted with (any User–Item edge), ascending by index.
  [[nodiscard]] std::span<const std::uint32_t> items_of(std::uint32_t user) const;
  [[nodiscard]] bool interacted(std::uint32_t user, std::uint32_t item) const;
  // Number of users that interacted with the item.
  [[nodiscard]] std::size_t item_degree(std::uint32_t item) const { return item_degree_.at(item); }

  [[nodiscard]] const GraphStats& stats() const { return stats_; }

  // Copy of this graph keeping only the edges for which keep(edge) is true.
  // Node sets and type slots are preserved.
  template <typename Pred>
  HinGraph filtered(Pred keep) const {
    HinGraphBuilder b = builder_with_nodes();
    for (const Edge& e : edges_) {
      if (keep(e)) b.add_edge(e.a, e.b, e.type);
    }
    return b.freeze_and_validate();
  }

  // Canonical little-endian binary form; identical graphs produce identical bytes.
  void write_binary(std::ostream& out) const;
  static HinGraph read_binary(std::istream& in);

 private:
  friend class HinGraphBuilder;
  HinGraph() = default;

  [[nodiscard]] std::size_t flat(NodeId v) const;
  [[nodiscard]] HinGraphBuilder builder_with_nodes() const;
  void require_node(NodeId v, const char* op) const;

  std::vector<NodeType> types_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> offsets_;
  std::vector<EdgeType> edge_types_;
  std::vector<bool> undirected_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Adjacent>> adjacency_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<std::vector<std::uint32_t>> user_items_;
  std::vector<std::size_t> item_degree_;
  GraphStats stats_;
};

// String keys of every node, per type slot, in id order.
class KeyMap {
 public:
  KeyMap() = default;
  explicit KeyMap(std::vector<std::string> type_names);

  NodeId intern(TypeSlot slot, const std::string& key);
  [[nodiscard]] std::optional<NodeId> find(TypeSlot slot, const std::string& key) const;
  [[nodiscard]] std::optional<NodeId> find(const std::string& type_name, const std::string& key) const;
  [[nodiscard]] const std::string& key(NodeId v) const { return keys_.at(v.type).at(v.index); }
  [[nodiscard]] const std::vector<std::string>& type_names() const { return type_names_; }
  [[nodiscard]] std::size_t size(TypeSlot slot) const { return slot < keys_.size() ? keys_[slot].size() : 0; }

  // {"node_types": {"User": 0, ...}, "keys": {"User": ["u1", ...], ...}}
  [[nodiscard]] std::string to_json() const;
  static KeyMap from_json(const std::string& text);

 private:
  std::vector<std::string> type_names_;
  std::vector<std::vector<std::string>> keys_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> index_;
};

struct LoadOptions {
  // Users with fewer distinct interacted items are dropped before id assignment.
  std::size_t min_user_interactions = 5;
  // Edge types listed here are stored one-way; all others are undirected.
  std::vector<std::string> directed_edge_types;
};

struct LoadSummary {
  std::size_t lines = 0;
  std::size_t edges = 0;
  std::size_t duplicate_edges = 0;
  std::size_t dropped_users = 0;
};

struct LoadedGraph {
  HinGraph graph;
  KeyMap keys;
  LoadSummary summary;
};

// Each data line: src_type \t src_key \t edge_type \t dst_type \t dst_key.
// Blank lines, '#' comments and a leading header row are skipped.
LoadedGraph load_tsv(const std::filesystem::path& interactions,
                     std::span<const std::filesystem::path> aux_edges = {},
                     const LoadOptions& options = {});

// One typed edge as it appears in a TSV line; `where` locates it for errors.
struct EdgeRecord {
  std::string src_type, src_key, edge, dst_type, dst_key;
  std::string where;
};

// The same pipeline as load_tsv over records already in memory.
LoadedGraph load_records(std::span<const EdgeRecord> records, const LoadOptions& options = {});

std::string format_stats(const GraphStats& stats);

}  // namespace ablah
