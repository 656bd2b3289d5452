#include <algorithm>
#include <cmath>
#include <set>

#include "ablah/evaluation.hpp"
#include "ablah/synth.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace ablah;

namespace {

LoadedGraph tiny_graph() {
  SynthConfig s;
  s.users = 30;
  s.items = 80;
  s.artists = 8;
  s.blocks = 4;
  s.interactions_per_user = 6;
  LoadOptions o;
  o.min_user_interactions = 0;
  return build_synth(s, o);
}

// Position of `target` after sorting everything by (score desc, item asc).
std::size_t sorted_rank(Candidate target, std::vector<Candidate> all) {
  all.push_back(target);
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  });
  for (std::size_t n = 0; n < all.size(); ++n) {
    if (all[n].item == target.item) return n + 1;
  }
  return 0;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("hit ratio and NDCG on hand-computed ranks") {
    const std::vector<std::size_t> ranks{1, 12, 3};
    CHECK(hit_ratio(ranks, 5) == doctest::Approx(2.0 / 3.0));
    CHECK(ndcg(std::vector<std::size_t>{1}, 10) == 1.0);
    CHECK(ndcg(std::vector<std::size_t>{3}, 10) == doctest::Approx(0.5));
    CHECK(ndcg(std::vector<std::size_t>{11}, 10) == 0.0);
    CHECK(hit_ratio({}, 10) == 0.0);
    CHECK_THROWS_AS(hit_ratio(std::vector<std::size_t>{0}, 10), ContractError);
  }

  TEST_CASE("rank agrees with an external sort and ignores presentation order") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Candidate> negatives;
      std::set<std::uint32_t> used{0};
      while (negatives.size() < 20) {
        const auto item = static_cast<std::uint32_t>(uniform_index(rng, 100));
        if (!used.insert(item).second) continue;
        const double score = uniform_index(rng, 4) == 0 ? kNoEvidence : static_cast<double>(uniform_index(rng, 5));
        negatives.push_back({item, score});
      }
      const Candidate target{0, uniform_index(rng, 3) == 0 ? kNoEvidence : static_cast<double>(uniform_index(rng, 5))};
      const std::size_t r = rank_of(target, negatives);
      CHECK(r == sorted_rank(target, negatives));
      std::reverse(negatives.begin(), negatives.end());
      CHECK(rank_of(target, negatives) == r);
    }
    const std::vector<Candidate> scored{{5, 0.2}, {6, 0.9}, {7, kNoEvidence}};
    CHECK(rank_of({9, 1.0}, scored) == 1);
    CHECK(rank_of({9, kNoEvidence}, scored) == 4);
    CHECK(rank_of({1, kNoEvidence}, scored) == 3);
    CHECK_THROWS_AS(rank_of({5, 1.0}, scored), ContractError);
  }

  TEST_CASE("leave-one-out split partitions each user's interactions") {
    const LoadedGraph data = tiny_graph();
    for (SplitMode mode : {SplitMode::LeaveOneOut, SplitMode::HoldoutThenLeaveOneOut}) {
      SplitConfig cfg;
      cfg.mode = mode;
      const Split s = leave_one_out_split(data.graph, cfg);
      const Split again = leave_one_out_split(data.graph, cfg);
      CHECK(s.heldout == again.heldout);
      for (std::uint32_t u = 0; u < data.graph.users(); ++u) {
        const auto all = data.graph.items_of(u);
        const auto kept = s.train.items_of(u);
        REQUIRE(s.heldout[u]);
        CHECK(std::binary_search(s.removed[u].begin(), s.removed[u].end(), *s.heldout[u]));
        CHECK(s.removed[u].size() == (mode == SplitMode::LeaveOneOut ? 1u : std::size_t(std::lround(0.2 * all.size()))));
        CHECK(kept.size() + s.removed[u].size() == all.size());
        std::vector<std::uint32_t> merged(kept.begin(), kept.end());
        merged.insert(merged.end(), s.removed[u].begin(), s.removed[u].end());
        std::sort(merged.begin(), merged.end());
        CHECK(std::equal(merged.begin(), merged.end(), all.begin(), all.end()));
        CHECK_FALSE(s.train.interacted(u, *s.heldout[u]));
      }
      CHECK(s.train.edges().size() + data.graph.stats().interactions - s.train.stats().interactions ==
            data.graph.edges().size());
    }
    SplitConfig five;
    five.mode = SplitMode::LeaveOneOut;
    HinGraphBuilder b;
    const NodeId u = b.add_node(NodeType::user());
    for (int n = 0; n < 5; ++n) b.add_edge(u, b.add_node(NodeType::item()), EdgeType("listened"));
    const Split s = leave_one_out_split(b.freeze_and_validate(), five);
    CHECK(s.train.items_of(0).size() == 4);
  }

  TEST_CASE("candidates exclude every interaction") {
    const LoadedGraph data = tiny_graph();
    const auto c = sample_candidates(data.graph, 3, 7, 20, 1);
    CHECK(c.size() == 20);
    CHECK(std::set<std::uint32_t>(c.begin(), c.end()).size() == 20);
    for (std::uint32_t j : c) {
      CHECK_FALSE(data.graph.interacted(3, j));
      CHECK(j != 7);
    }
    CHECK(c == sample_candidates(data.graph, 3, 7, 20, 1));
    const auto all = sample_candidates(data.graph, 3, 7, 0, 1);
    CHECK(all.size() == data.graph.items() - data.graph.items_of(3).size() - (data.graph.interacted(3, 7) ? 0 : 1));
  }

  TEST_CASE("popularity baseline ranks by training degree with index tie-break") {
    HinGraphBuilder b;
    std::vector<NodeId> users, items;
    for (int n = 0; n < 3; ++n) users.push_back(b.add_node(NodeType::user()));
    for (int n = 0; n < 4; ++n) items.push_back(b.add_node(NodeType::item()));
    const EdgeType listened("listened");
    for (NodeId u : users) b.add_edge(u, items[2], listened);
    b.add_edge(users[0], items[1], listened);
    const HinGraph g = b.freeze_and_validate();
    const PopBaseline pop(g);
    CHECK(pop.rank(2, std::vector<std::uint32_t>{0, 1, 3}) == 1);
    CHECK(pop.rank(1, std::vector<std::uint32_t>{0, 3}) == 1);
    CHECK(pop.rank(3, std::vector<std::uint32_t>{0}) == 2);
    CHECK(pop.rank(0, std::vector<std::uint32_t>{3}) == 1);
  }

  TEST_CASE("evaluation report is consistent and reproducible") {
    const LoadedGraph data = tiny_graph();
    SplitConfig sc;
    sc.mode = SplitMode::LeaveOneOut;
    const Split split = leave_one_out_split(data.graph, sc);
    ModelConfig mc;
    mc.embedding_dim = 4;
    mc.hidden_dim = 4;
    mc.layers = 1;
    mc.scorer_units = 4;
    const ModelParams p = init_params(split.train, mc, 3);
    EvalConfig ec;
    ec.candidate_negatives = 30;
    ec.k_paths = 3;
    const EvalReport r = evaluate(p, mc, data.graph, split, ec);
    CHECK(r.users.size() + r.excluded == data.graph.users());
    for (std::size_t n = 0; n < r.ks.size(); ++n) {
      CHECK(r.ndcg[n] <= r.hr[n]);
      CHECK(r.hr[n] >= 0.0);
      CHECK(r.hr[n] <= 1.0);
    }
    CHECK(r.hr_at(5) <= r.hr_at(10));
    std::vector<std::size_t> ranks;
    for (const auto& u : r.users) ranks.push_back(u.rank);
    CHECK(r.hr_at(10) == hit_ratio(ranks, 10));

    ec.threads = 3;
    const EvalReport threaded = evaluate(p, mc, data.graph, split, ec);
    CHECK(threaded.to_json() == r.to_json());
    CHECK(EvalReport::from_json(r.to_json()).to_json() == r.to_json());
    CHECK(r.to_table().find("NDCG@10") != std::string::npos);
    CHECK_THROWS_AS(r.hr_at(7), std::out_of_range);
  }

  TEST_CASE("evaluation configuration validation") {
    EvalConfig c;
    c.ks = {10, 5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.candidate_negatives = 8;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.candidate_negatives = 0;
    CHECK_NOTHROW(c.validate());
  }
}
