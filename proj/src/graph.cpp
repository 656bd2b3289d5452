#include "ablah/graph.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ablah/binary_io.hpp"
#include "json.hpp"

namespace ablah {

namespace {

constexpr const char* kBuiltinNames[kBuiltinSlots] = {"User", "Item", "Artist", "Album"};
constexpr char kGraphMagic[8] = {'A', 'B', 'L', 'A', 'H', 'G', 'R', '1'};

std::string describe(NodeId v) {
  return "(" + std::to_string(v.type) + ", " + std::to_string(v.index) + ")";
}

}  // namespace

NodeType::NodeType(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw ContractError("node type name must be non-empty");
}

bool NodeType::builtin() const {
  return std::find(std::begin(kBuiltinNames), std::end(kBuiltinNames), name_) != std::end(kBuiltinNames);
}

EdgeType::EdgeType(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw ContractError("edge type name must be non-empty");
}

// ---------------------------------------------------------------------------
// HinGraphBuilder

HinGraphBuilder::HinGraphBuilder() {
  for (const char* name : kBuiltinNames) {
    types_.emplace_back(name);
    counts_.push_back(0);
  }
}

void HinGraphBuilder::require_building(const char* op) const {
  if (frozen_) throw BuildPhaseError(std::string(op) + ": graph is frozen");
}

void HinGraphBuilder::require_node(NodeId v, const char* op) const {
  if (v.type >= counts_.size() || v.index >= counts_[v.type]) {
    throw ContractError(std::string(op) + ": unknown node " + describe(v));
  }
}

TypeSlot HinGraphBuilder::register_type(const NodeType& type) {
  for (std::size_t s = 0; s < types_.size(); ++s) {
    if (types_[s] == type) return static_cast<TypeSlot>(s);
  }
  require_building("register_type");
  types_.push_back(type);
  counts_.push_back(0);
  return static_cast<TypeSlot>(types_.size() - 1);
}

EdgeTypeId HinGraphBuilder::register_edge_type(const EdgeType& type, bool undirected) {
  for (std::size_t t = 0; t < edge_types_.size(); ++t) {
    if (edge_types_[t] == type) {
      if (undirected_[t] != undirected) {
        throw ContractError("edge type '" + type.name() + "' registered with conflicting direction");
      }
      return static_cast<EdgeTypeId>(t);
    }
  }
  require_building("register_edge_type");
  edge_types_.push_back(type);
  undirected_.push_back(undirected);
  return static_cast<EdgeTypeId>(edge_types_.size() - 1);
}

NodeId HinGraphBuilder::add_node(const NodeType& type) { return add_node(register_type(type)); }

NodeId HinGraphBuilder::add_node(TypeSlot slot) {
  require_building("add_node");
  if (slot >= counts_.size()) throw ContractError("add_node: unknown type slot " + std::to_string(slot));
  return NodeId{slot, static_cast<std::uint32_t>(counts_[slot]++)};
}

bool HinGraphBuilder::add_edge(NodeId a, NodeId b, const EdgeType& type) {
  require_building("add_edge");
  EdgeTypeId id = 0;
  auto it = std::find(edge_types_.begin(), edge_types_.end(), type);
  id = it == edge_types_.end() ? register_edge_type(type, true)
                               : static_cast<EdgeTypeId>(it - edge_types_.begin());
  return add_edge(a, b, id);
}

bool HinGraphBuilder::add_edge(NodeId a, NodeId b, EdgeTypeId type) {
  require_building("add_edge");
  require_node(a, "add_edge");
  require_node(b, "add_edge");
  if (type >= edge_types_.size()) throw ContractError("add_edge: unknown edge type id " + std::to_string(type));
  if (a == b) throw ContractError("add_edge: self-loop on node " + describe(a));
  auto key = undirected_[type] ? std::make_tuple(std::min(a, b), std::max(a, b), type) : std::make_tuple(a, b, type);
  if (!seen_.insert(key).second) return false;
  edges_.push_back(Edge{a, b, type});
  return true;
}

std::size_t HinGraphBuilder::node_count(TypeSlot slot) const { return slot < counts_.size() ? counts_[slot] : 0; }

HinGraph HinGraphBuilder::freeze_and_validate() {
  require_building("freeze_and_validate");

  std::vector<std::size_t> edges_per_type(edge_types_.size(), 0);
  for (const Edge& e : edges_) ++edges_per_type[e.type];
  const auto node_kinds = std::count_if(counts_.begin(), counts_.end(), [](std::size_t c) { return c > 0; });
  const auto edge_kinds = std::count_if(edges_per_type.begin(), edges_per_type.end(), [](std::size_t c) { return c > 0; });
  if (node_kinds + edge_kinds < 3) {
    throw HeterogeneityError("graph is not heterogeneous: " + std::to_string(node_kinds) + " node types + " +
                             std::to_string(edge_kinds) + " edge types < 3");
  }
  if (counts_[kUserSlot] == 0 || counts_[kItemSlot] == 0) {
    throw DataError("graph is unusable: it needs at least one User and one Item node");
  }
  frozen_ = true;

  HinGraph g;
  g.types_ = types_;
  g.counts_ = counts_;
  g.edge_types_ = edge_types_;
  g.undirected_ = undirected_;
  g.edges_ = edges_;
  g.offsets_.assign(counts_.size() + 1, 0);
  for (std::size_t s = 0; s < counts_.size(); ++s) g.offsets_[s + 1] = g.offsets_[s] + counts_[s];
  const std::size_t total = g.offsets_.back();

  g.adjacency_.assign(total, {});
  for (const Edge& e : edges_) {
    g.adjacency_[g.flat(e.a)].push_back(Adjacent{e.b, e.type});
    if (undirected_[e.type]) g.adjacency_[g.flat(e.b)].push_back(Adjacent{e.a, e.type});
  }
  g.neighbors_.assign(total, {});
  for (std::size_t v = 0; v < total; ++v) {
    auto& adj = g.adjacency_[v];
    std::sort(adj.begin(), adj.end());
    auto& nb = g.neighbors_[v];
    for (const Adjacent& a : adj) {
      if (nb.empty() || nb.back() != a.node) nb.push_back(a.node);
    }
  }

  g.user_items_.assign(counts_[kUserSlot], {});
  g.item_degree_.assign(counts_[kItemSlot], 0);
  std::size_t interactions = 0;
  for (std::uint32_t u = 0; u < counts_[kUserSlot]; ++u) {
    auto& items = g.user_items_[u];
    for (NodeId n : g.neighbors_[g.flat(NodeId{kUserSlot, u})]) {
      if (n.type == kItemSlot) items.push_back(n.index);
    }
  }
  // Directed Item -> User edges also count as interactions.
  for (const Edge& e : edges_) {
    if (!undirected_[e.type] && e.a.type == kItemSlot && e.b.type == kUserSlot) {
      g.user_items_[e.b.index].push_back(e.a.index);
    }
  }
  for (auto& items : g.user_items_) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (std::uint32_t i : items) ++g.item_degree_[i];
    interactions += items.size();
  }

  for (std::size_t s = 0; s < types_.size(); ++s) g.stats_.nodes_per_type.emplace_back(types_[s].name(), counts_[s]);
  for (std::size_t t = 0; t < edge_types_.size(); ++t) {
    g.stats_.edges_per_type.emplace_back(edge_types_[t].name(), edges_per_type[t]);
  }
  g.stats_.interactions = interactions;
  g.stats_.interaction_density =
      static_cast<double>(interactions) / (static_cast<double>(counts_[kUserSlot]) * static_cast<double>(counts_[kItemSlot]));
  return g;
}

// ---------------------------------------------------------------------------
// HinGraph

std::size_t HinGraph::flat(NodeId v) const { return offsets_[v.type] + v.index; }

void HinGraph::require_node(NodeId v, const char* op) const {
  if (!contains(v)) throw ContractError(std::string(op) + ": unknown node " + describe(v));
}

std::optional<TypeSlot> HinGraph::find_type(const std::string& name) const {
  for (std::size_t s = 0; s < types_.size(); ++s) {
    if (types_[s].name() == name) return static_cast<TypeSlot>(s);
  }
  return std::nullopt;
}

std::optional<EdgeTypeId> HinGraph::find_edge_type(const std::string& name) const {
  for (std::size_t t = 0; t < edge_types_.size(); ++t) {
    if (edge_types_[t].name() == name) return static_cast<EdgeTypeId>(t);
  }
  return std::nullopt;
}

std::span<const NodeId> HinGraph::neighbors(NodeId v) const {
  require_node(v, "neighbors");
  return neighbors_[flat(v)];
}

std::vector<NodeId> HinGraph::neighbors(NodeId v, EdgeTypeId t) const {
  require_node(v, "neighbors");
  std::vector<NodeId> out;
  for (const Adjacent& a : adjacency_[flat(v)]) {
    if (a.edge_type == t) out.push_back(a.node);
  }
  return out;
}

std::vector<NodeId> HinGraph::neighbors(NodeId v, std::optional<EdgeTypeId> t) const {
  if (t) return neighbors(v, *t);
  auto nb = neighbors(v);
  return {nb.begin(), nb.end()};
}

std::span<const Adjacent> HinGraph::adjacency(NodeId v) const {
  require_node(v, "adjacency");
  return adjacency_[flat(v)];
}

bool HinGraph::adjacent(NodeId a, NodeId b) const {
  auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

std::vector<EdgeTypeId> HinGraph::edge_types_between(NodeId a, NodeId b) const {
  std::vector<EdgeTypeId> out;
  for (const Adjacent& adj : adjacency(a)) {
    if (adj.node == b) out.push_back(adj.edge_type);
  }
  return out;
}

std::span<const std::uint32_t> HinGraph::items_of(std::uint32_t user) const { return user_items_.at(user); }

bool HinGraph::interacted(std::uint32_t user, std::uint32_t item) const {
  const auto& items = user_items_.at(user);
  return std::binary_search(items.begin(), items.end(), item);
}

HinGraphBuilder HinGraph::builder_with_nodes() const {
  HinGraphBuilder b;
  for (const NodeType& t : types_) b.register_type(t);
  for (std::size_t s = 0; s < counts_.size(); ++s) {
    for (std::size_t k = 0; k < counts_[s]; ++k) b.add_node(static_cast<TypeSlot>(s));
  }
  for (std::size_t t = 0; t < edge_types_.size(); ++t) b.register_edge_type(edge_types_[t], undirected_[t]);
  return b;
}

void HinGraph::write_binary(std::ostream& out) const {
  io::Writer w;
  w.put_bytes(std::string_view(kGraphMagic, sizeof kGraphMagic));
  w.put<std::uint32_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(types_.size()));
  for (std::size_t s = 0; s < types_.size(); ++s) {
    w.put_string(types_[s].name());
    w.put<std::uint64_t>(counts_[s]);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(edge_types_.size()));
  for (std::size_t t = 0; t < edge_types_.size(); ++t) {
    w.put_string(edge_types_[t].name());
    w.put<std::uint8_t>(undirected_[t] ? 1 : 0);
  }
  w.put<std::uint64_t>(edges_.size());
  for (const Edge& e : edges_) {
    w.put<std::uint16_t>(e.a.type);
    w.put<std::uint32_t>(e.a.index);
    w.put<std::uint16_t>(e.b.type);
    w.put<std::uint32_t>(e.b.index);
    w.put<std::uint16_t>(e.type);
  }
  w.write_to(out, true);
}

HinGraph HinGraph::read_binary(std::istream& in) {
  io::Reader r = io::Reader::from_stream(in);
  r.verify_crc();
  if (r.get_bytes(sizeof kGraphMagic) != std::string(kGraphMagic, sizeof kGraphMagic)) {
    throw DataError("not a graph file (bad magic)");
  }
  if (const auto v = r.get<std::uint32_t>(); v != 1) throw DataError("unsupported graph version " + std::to_string(v));
  HinGraphBuilder b;
  const auto type_count = r.get<std::uint32_t>();
  for (std::uint32_t s = 0; s < type_count; ++s) {
    const TypeSlot slot = b.register_type(NodeType(r.get_string()));
    if (slot != s) throw DataError("graph file lists node types out of slot order");
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) b.add_node(slot);
  }
  const auto edge_type_count = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < edge_type_count; ++t) {
    std::string name = r.get_string();
    b.register_edge_type(EdgeType(std::move(name)), r.get<std::uint8_t>() != 0);
  }
  const auto edge_count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < edge_count; ++k) {
    NodeId a{r.get<std::uint16_t>(), r.get<std::uint32_t>()};
    NodeId c{r.get<std::uint16_t>(), r.get<std::uint32_t>()};
    b.add_edge(a, c, r.get<std::uint16_t>());
  }
  if (!r.done()) throw DataError("trailing bytes in graph file");
  return b.freeze_and_validate();
}

// ---------------------------------------------------------------------------
// KeyMap

KeyMap::KeyMap(std::vector<std::string> type_names)
    : type_names_(std::move(type_names)), keys_(type_names_.size()), index_(type_names_.size()) {}

NodeId KeyMap::intern(TypeSlot slot, const std::string& key) {
  if (slot >= keys_.size()) throw ContractError("KeyMap::intern: unknown type slot");
  auto [it, inserted] = index_[slot].try_emplace(key, static_cast<std::uint32_t>(keys_[slot].size()));
  if (inserted) keys_[slot].push_back(key);
  return NodeId{slot, it->second};
}

std::optional<NodeId> KeyMap::find(TypeSlot slot, const std::string& key) const {
  if (slot >= index_.size()) return std::nullopt;
  auto it = index_[slot].find(key);
  if (it == index_[slot].end()) return std::nullopt;
  return NodeId{slot, it->second};
}

std::optional<NodeId> KeyMap::find(const std::string& type_name, const std::string& key) const {
  auto it = std::find(type_names_.begin(), type_names_.end(), type_name);
  if (it == type_names_.end()) return std::nullopt;
  return find(static_cast<TypeSlot>(it - type_names_.begin()), key);
}

std::string KeyMap::to_json() const {
  nlohmann::ordered_json j;
  j["node_types"] = nlohmann::ordered_json::object();
  j["keys"] = nlohmann::ordered_json::object();
  for (std::size_t s = 0; s < type_names_.size(); ++s) {
    j["node_types"][type_names_[s]] = s;
    j["keys"][type_names_[s]] = keys_[s];
  }
  return j.dump(1);
}

KeyMap KeyMap::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("key sidecar is not valid JSON: ") + e.what());
  }
  std::vector<std::string> names(j.at("node_types").size());
  for (const auto& [name, slot] : j.at("node_types").items()) names.at(slot.get<std::size_t>()) = name;
  KeyMap km(names);
  for (std::size_t s = 0; s < names.size(); ++s) {
    for (const auto& key : j.at("keys").at(names[s])) km.intern(static_cast<TypeSlot>(s), key.get<std::string>());
  }
  return km;
}

// ---------------------------------------------------------------------------
// TSV ingestion

namespace {

std::vector<EdgeRecord> read_records(const std::filesystem::path& path, std::size_t& lines) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EdgeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 5) {
      throw DataError(where + ": expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (first_data_line && fields[0] == "src_type") {
      first_data_line = false;
      continue;
    }
    first_data_line = false;
    for (const auto& f : fields) {
      if (f.empty()) throw DataError(where + ": empty field");
    }
    ++lines;
    out.push_back(EdgeRecord{fields[0], fields[1], fields[2], fields[3], fields[4], where});
  }
  return out;
}

}  // namespace

LoadedGraph load_tsv(const std::filesystem::path& interactions, std::span<const std::filesystem::path> aux_edges,
                     const LoadOptions& options) {
  std::size_t lines = 0;
  std::vector<EdgeRecord> records = read_records(interactions, lines);
  for (const auto& p : aux_edges) {
    auto more = read_records(p, lines);
    records.insert(records.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  LoadedGraph out = load_records(records, options);
  out.summary.lines = lines;
  return out;
}

LoadedGraph load_records(std::span<const EdgeRecord> records, const LoadOptions& options) {
  LoadSummary summary;
  summary.lines = records.size();

  // Distinct interacted items per user key, for the minimum-activity filter.
  std::map<std::string, std::set<std::string>> user_items;
  std::vector<std::string> user_order;
  auto note_user = [&](const std::string& key) {
    if (user_items.try_emplace(key).second) user_order.push_back(key);
  };
  for (const EdgeRecord& r : records) {
    if (r.src_type == "User") note_user(r.src_key);
    if (r.dst_type == "User") note_user(r.dst_key);
    if (r.src_type == "User" && r.dst_type == "Item") user_items[r.src_key].insert(r.dst_key);
    if (r.src_type == "Item" && r.dst_type == "User") user_items[r.dst_key].insert(r.src_key);
  }
  std::set<std::string> dropped;
  for (const auto& key : user_order) {
    if (user_items[key].size() < options.min_user_interactions) dropped.insert(key);
  }
  summary.dropped_users = dropped.size();

  HinGraphBuilder builder;
  std::vector<std::string> type_names(kBuiltinNames, kBuiltinNames + kBuiltinSlots);
  KeyMap keys;
  // Nodes are numbered in first-seen order once every type slot is known.
  std::vector<std::pair<TypeSlot, std::string>> node_order;
  std::vector<std::tuple<std::size_t, std::size_t, EdgeTypeId, std::string>> edge_records;
  std::map<std::pair<TypeSlot, std::string>, std::size_t> node_index;

  auto slot_of = [&](const std::string& type_name) {
    const TypeSlot s = builder.register_type(NodeType(type_name));
    if (s >= type_names.size()) type_names.push_back(type_name);
    return s;
  };
  auto node_of = [&](TypeSlot slot, const std::string& key) {
    auto [it, inserted] = node_index.try_emplace({slot, key}, node_order.size());
    if (inserted) node_order.emplace_back(slot, key);
    return it->second;
  };
  for (const EdgeRecord& r : records) {
    const bool touches_dropped = (r.src_type == "User" && dropped.count(r.src_key)) ||
                                 (r.dst_type == "User" && dropped.count(r.dst_key));
    if (touches_dropped) continue;
    const TypeSlot a = slot_of(r.src_type);
    const TypeSlot b = slot_of(r.dst_type);
    const bool directed = std::find(options.directed_edge_types.begin(), options.directed_edge_types.end(), r.edge) !=
                          options.directed_edge_types.end();
    const EdgeTypeId t = builder.register_edge_type(EdgeType(r.edge), !directed);
    edge_records.emplace_back(node_of(a, r.src_key), node_of(b, r.dst_key), t, r.where);
  }

  keys = KeyMap(type_names);
  std::vector<NodeId> ids(node_order.size());
  for (std::size_t n = 0; n < node_order.size(); ++n) {
    const auto& [slot, key] = node_order[n];
    ids[n] = keys.intern(slot, key);
    const NodeId added = builder.add_node(slot);
    if (added != ids[n]) throw std::logic_error("load_tsv: key and node numbering diverged");
  }
  for (const auto& [a, b, t, where] : edge_records) {
    if (ids[a] == ids[b]) throw DataError(where + ": self-loop");
    if (builder.add_edge(ids[a], ids[b], t)) {
      ++summary.edges;
    } else {
      ++summary.duplicate_edges;
    }
  }
  return LoadedGraph{builder.freeze_and_validate(), std::move(keys), summary};
}

std::string format_stats(const GraphStats& stats) {
  std::ostringstream os;
  os << "nodes:\n";
  for (const auto& [name, n] : stats.nodes_per_type) {
    if (n > 0) os << "  " << std::left << std::setw(12) << name << n << "\n";
  }
  os << "edges:\n";
  for (const auto& [name, n] : stats.edges_per_type) os << "  " << std::left << std::setw(12) << name << n << "\n";
  os << "interactions: " << stats.interactions << "\n";
  os << "density: " << std::fixed << std::setprecision(4) << stats.interaction_density * 100.0 << "%\n";
  return os.str();
}

}  // namespace ablah
