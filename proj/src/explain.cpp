#include "ablah/explain.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ablah/paths.hpp"
#include "json.hpp"

namespace ablah {

namespace {

ExplainedNode describe(const HinGraph& g, const KeyMap& keys, NodeId v) {
  const std::string& type = g.node_type(v.type).name();
  if (v.index < keys.size(v.type)) return ExplainedNode{type, keys.key(v)};
  return ExplainedNode{type, std::to_string(v.index)};
}

std::string edge_label(const HinGraph& g, NodeId a, NodeId b) {
  auto types = g.edge_types_between(a, b);
  if (types.empty()) types = g.edge_types_between(b, a);
  std::string out;
  for (EdgeTypeId t : types) {
    if (!out.empty()) out += '|';
    out += g.edge_type(t).name();
  }
  return out;
}

std::string render_walk(const ExplainedPath& p) {
  std::string out;
  for (std::size_t l = 0; l < p.nodes.size(); ++l) {
    if (l) out += " -(" + p.edges[l - 1] + ")-> ";
    out += p.nodes[l].type + ":" + p.nodes[l].key;
  }
  return out;
}

std::vector<ExplainedPath> describe_paths(const ModelParams& params, const ModelConfig& model, const HinGraph& g,
                                          const KeyMap& keys, const PathSet& set) {
  const auto scored = score_paths(params, model, set);
  std::vector<double> scores;
  for (const PathScore& s : scored) scores.push_back(s.score);
  const auto weights = display_weights(scores);
  std::vector<ExplainedPath> out;
  for (std::size_t k = 0; k < set.paths.size(); ++k) {
    ExplainedPath p;
    const auto& nodes = set.paths[k].nodes;
    for (std::size_t l = 0; l < nodes.size(); ++l) {
      p.nodes.push_back(describe(g, keys, nodes[l]));
      if (l) p.edges.push_back(edge_label(g, nodes[l - 1], nodes[l]));
    }
    p.score = scored[k].score;
    p.weight = weights[k];
    p.attention = scored[k].attention;
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::ordered_json node_json(const ExplainedNode& n) { return {{"type", n.type}, {"key", n.key}}; }
ExplainedNode node_from(const nlohmann::json& j) { return ExplainedNode{j.at("type"), j.at("key")}; }

}  // namespace

std::vector<double> display_weights(std::span<const double> scores) {
  std::vector<double> w(scores.begin(), scores.end());
  if (w.empty()) return w;
  const double top = *std::max_element(w.begin(), w.end());
  for (double& v : w) v = std::exp(v - top);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  return w;
}

Explanation explain(const ModelParams& params, const ModelConfig& model, const HinGraph& g, const KeyMap& keys,
                    NodeId user, NodeId item, std::size_t k, std::size_t l_max, std::uint64_t seed) {
  const PathSet set = sample_paths(g, user, item, k, l_max, seed);
  Explanation out;
  out.user = describe(g, keys, user);
  out.item = describe(g, keys, item);
  if (set.empty()) return out;
  out.probability = predict(params, model, set);
  out.paths = describe_paths(params, model, g, keys, set);
  std::stable_sort(out.paths.begin(), out.paths.end(),
                   [](const ExplainedPath& a, const ExplainedPath& b) { return a.weight > b.weight; });
  return out;
}

std::string Explanation::to_json() const {
  nlohmann::ordered_json j;
  j["user"] = node_json(user);
  j["item"] = node_json(item);
  j["probability"] = probability;
  j["evidence"] = has_evidence();
  auto& arr = j["paths"] = nlohmann::ordered_json::array();
  for (const ExplainedPath& p : paths) {
    nlohmann::ordered_json jp;
    auto& nodes = jp["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : p.nodes) nodes.push_back(node_json(n));
    jp["edges"] = p.edges;
    jp["score"] = p.score;
    jp["weight"] = p.weight;
    jp["attention"] = p.attention;
    arr.push_back(std::move(jp));
  }
  return j.dump(2);
}

Explanation Explanation::from_json(const std::string& text) {
  Explanation e;
  try {
    const auto j = nlohmann::json::parse(text);
    e.user = node_from(j.at("user"));
    e.item = node_from(j.at("item"));
    e.probability = j.at("probability");
    for (const auto& jp : j.at("paths")) {
      ExplainedPath p;
      for (const auto& n : jp.at("nodes")) p.nodes.push_back(node_from(n));
      p.edges = jp.at("edges").get<std::vector<std::string>>();
      p.score = jp.at("score");
      p.weight = jp.at("weight");
      p.attention = jp.at("attention").get<std::vector<double>>();
      e.paths.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("invalid explanation document: ") + ex.what());
  }
  return e;
}

std::string Explanation::to_text() const {
  std::ostringstream os;
  if (paths.empty()) {
    os << user.type << ":" << user.key << " -> " << item.type << ":" << item.key << ": no connective evidence\n";
    return os.str();
  }
  os << std::fixed << std::setprecision(2);
  for (const ExplainedPath& p : paths) os << p.weight << "  " << render_walk(p) << "\n";
  return os.str();
}

DirectionComparison compare_directions(const ModelParams& bi_params, const ModelConfig& bi_model,
                                       const ModelParams& uni_params, const ModelConfig& uni_model, const HinGraph& g,
                                       const KeyMap& keys, NodeId user, NodeId item, std::size_t k, std::size_t l_max,
                                       std::uint64_t seed) {
  const PathSet set = sample_paths(g, user, item, k, l_max, seed);
  DirectionComparison out;
  if (set.empty()) return out;
  const auto bi = describe_paths(bi_params, bi_model, g, keys, set);
  const auto uni = describe_paths(uni_params, uni_model, g, keys, set);
  for (std::size_t n = 0; n < set.paths.size(); ++n) {
    out.paths.push_back(render_walk(bi[n]));
    out.bidirectional.push_back(bi[n].weight);
    out.unidirectional.push_back(uni[n].weight);
  }
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  out.top_bidirectional = argmax(out.bidirectional);
  out.top_unidirectional = argmax(out.unidirectional);
  return out;
}

std::string DirectionComparison::to_text() const {
  if (paths.empty()) return "no connective evidence\n";
  std::ostringstream os;
  os << std::left << std::setw(6) << "path" << std::right << std::setw(8) << "bi" << std::setw(8) << "uni"
     << "  walk\n";
  os << std::fixed << std::setprecision(4);
  for (std::size_t n = 0; n < paths.size(); ++n) {
    os << std::left << std::setw(6) << n << std::right << std::setw(8) << bidirectional[n] << std::setw(8)
       << unidirectional[n] << "  " << paths[n] << "\n";
  }
  os << "top path: bidirectional " << top_bidirectional << ", unidirectional " << top_unidirectional << "\n";
  return os.str();
}

}  // namespace ablah
