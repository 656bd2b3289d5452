#pragma once

#include <cmath>
#include <functional>

#include "ablah/graph.hpp"
#include "ablah/model.hpp"
#include "ablah/rng.hpp"

namespace fixtures {

using namespace ablah;

// Tony listened to California Hotel, which connects to Tom (another
// listener), the Eagles (artist) and Live New York (album); all three lead
// on to In The City.
struct MusicGraph {
  HinGraph graph;
  NodeId tony, tom, california_hotel, in_the_city, eagles, live_new_york;
};

inline MusicGraph music_graph() {
  HinGraphBuilder b;
  const NodeId tony = b.add_node(NodeType::user());
  const NodeId tom = b.add_node(NodeType::user());
  const NodeId hotel = b.add_node(NodeType::item());
  const NodeId city = b.add_node(NodeType::item());
  const NodeId eagles = b.add_node(NodeType::artist());
  const NodeId live = b.add_node(NodeType::album());
  const EdgeType listened("listened"), sung_by("sung_by"), in_album("in_album");
  b.add_edge(tony, hotel, listened);
  b.add_edge(tom, hotel, listened);
  b.add_edge(tom, city, listened);
  b.add_edge(hotel, eagles, sung_by);
  b.add_edge(city, eagles, sung_by);
  b.add_edge(hotel, live, in_album);
  b.add_edge(city, live, in_album);
  return MusicGraph{b.freeze_and_validate(), tony, tom, hotel, city, eagles, live};
}

// Random typed graph: users, items and artists with listened / sung_by /
// friend_of edges. Every user and item node exists even if isolated.
inline HinGraph random_graph(std::uint64_t seed, std::size_t users, std::size_t items, std::size_t artists,
                             double p_edge) {
  Rng rng(seed);
  HinGraphBuilder b;
  std::vector<NodeId> us, is, as;
  for (std::size_t n = 0; n < users; ++n) us.push_back(b.add_node(NodeType::user()));
  for (std::size_t n = 0; n < items; ++n) is.push_back(b.add_node(NodeType::item()));
  for (std::size_t n = 0; n < artists; ++n) as.push_back(b.add_node(NodeType::artist()));
  const EdgeType listened("listened"), sung_by("sung_by"), friend_of("friend_of");
  b.register_edge_type(listened);
  for (NodeId u : us)
    for (NodeId i : is)
      if (uniform_unit(rng) < p_edge) b.add_edge(u, i, listened);
  for (NodeId i : is)
    for (NodeId a : as)
      if (uniform_unit(rng) < p_edge) b.add_edge(i, a, sung_by);
  for (std::size_t x = 0; x < us.size(); ++x)
    for (std::size_t y = x + 1; y < us.size(); ++y)
      if (uniform_unit(rng) < p_edge / 2) b.add_edge(us[x], us[y], friend_of);
  return b.freeze_and_validate();
}

// Central finite difference of f with respect to every entry of m.
inline Matrix numeric_gradient(Matrix& m, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double keep = m(i, j);
      m(i, j) = keep + h;
      const double up = f();
      m(i, j) = keep - h;
      const double down = f();
      m(i, j) = keep;
      g(i, j) = (up - down) / (2 * h);
    }
  }
  return g;
}

// Largest entrywise |a - n| / max(|a|, |n|, floor).
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double a = analytic.reshaped()(k), n = numeric.reshaped()(k);
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.reshaped()(k) = scale * (2 * uniform_unit(rng) - 1);
  return m;
}

}  // namespace fixtures
