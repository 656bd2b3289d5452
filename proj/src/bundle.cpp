#include "ablah/bundle.hpp"

#include <fstream>
#include <sstream>

#include "ablah/binary_io.hpp"
#include "json.hpp"

namespace ablah {

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

std::string stats_json(const GraphStats& stats) {
  nlohmann::ordered_json j;
  j["nodes_per_type"] = nlohmann::ordered_json::object();
  for (const auto& [name, n] : stats.nodes_per_type) j["nodes_per_type"][name] = n;
  j["edges_per_type"] = nlohmann::ordered_json::object();
  for (const auto& [name, n] : stats.edges_per_type) j["edges_per_type"][name] = n;
  j["interactions"] = stats.interactions;
  j["interaction_density"] = stats.interaction_density;
  return j.dump(2);
}

void write_bundle(const LoadedGraph& loaded, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "graph.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "graph.bin").string());
    loaded.graph.write_binary(out);
  }
  spit(dir / "keys.json", loaded.keys.to_json());
  spit(dir / "stats.json", stats_json(loaded.graph.stats()));
}

LoadedGraph read_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "graph.bin")) {
    throw DataError("no graph bundle at " + dir.string() + " (run `ablah ingest` first)");
  }
  std::ifstream in(dir / "graph.bin", std::ios::binary);
  HinGraph g = HinGraph::read_binary(in);
  KeyMap keys = KeyMap::from_json(slurp(dir / "keys.json"));
  return LoadedGraph{std::move(g), std::move(keys), {}};
}

std::uint32_t graph_checksum(const HinGraph& g) {
  std::ostringstream os;
  g.write_binary(os);
  return io::crc32(os.str());
}

}  // namespace ablah
