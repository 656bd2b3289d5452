#include <cmath>

#include "ablah/model.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace ablah;
using fixtures::random_matrix;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.embedding_dim = 4;
  c.hidden_dim = 5;
  c.layers = 2;
  c.scorer_units = 6;
  c.dropout_rate = 0.0;
  return c;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PlainLstm {
  Matrix wz, wi, wf, wo, uz, ui, uf, uo, bz, bi, bf, bo;

  std::pair<Matrix, Matrix> step(const Matrix& x, const Matrix& h, const Matrix& c) const {
    Matrix z = (wz.transpose() * x + uz.transpose() * h + bz).array().tanh();
    Matrix i = (wi.transpose() * x + ui.transpose() * h + bi).unaryExpr(&sigm);
    Matrix f = (wf.transpose() * x + uf.transpose() * h + bf).unaryExpr(&sigm);
    Matrix o = (wo.transpose() * x + uo.transpose() * h + bo).unaryExpr(&sigm);
    Matrix c2 = f.cwiseProduct(c) + i.cwiseProduct(z);
    Matrix h2 = o.cwiseProduct(Matrix(c2.array().tanh()));
    return {h2, c2};
  }
};

PlainLstm plain(const LstmWeights<Matrix>& w) {
  return {w.w_z, w.w_i, w.w_f, w.w_o, w.u_z, w.u_i, w.u_f, w.u_o, w.b_z, w.b_i, w.b_f, w.b_o};
}

std::vector<Matrix> run_plain(const std::vector<LstmWeights<Matrix>>& layers, std::vector<Matrix> seq) {
  for (const auto& w : layers) {
    const PlainLstm cell = plain(w);
    Matrix h = Matrix::Zero(w.b_z.rows(), 1), c = h;
    for (Matrix& x : seq) {
      std::tie(h, c) = cell.step(x, h, c);
      x = h;
    }
  }
  return seq;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("initialisation shapes, bounds and forget-gate bias") {
    const auto m = fixtures::music_graph();
    const ModelConfig c = small_config();
    const ModelParams p = init_params(m.graph, c, 1);
    CHECK_NOTHROW(check_shapes(p, c));
    CHECK(p.type_embeddings.rows() == static_cast<Eigen::Index>(m.graph.type_slots()));
    CHECK(p.value_embeddings[kItemSlot].rows() == 2);
    CHECK(p.forward[0].w_z.rows() == 4);
    CHECK(p.forward[1].w_z.rows() == 5);
    CHECK(p.attention.cols() == 10);
    CHECK(p.scorer_hidden.rows() == 10);
    CHECK(p.scorer_hidden.cols() == 6);
    CHECK((p.forward[0].b_f.array() == 1.0).all());
    CHECK((p.backward[1].b_i.array() == 0.0).all());
    const double bound = std::sqrt(6.0 / (10 + 6));
    CHECK(p.scorer_hidden.cwiseAbs().maxCoeff() <= bound);
    const ModelParams again = init_params(m.graph, c, 1);
    CHECK(again.scorer_hidden == p.scorer_hidden);
    CHECK_FALSE(init_params(m.graph, c, 2).scorer_hidden == p.scorer_hidden);

    ModelConfig concat = c;
    concat.combine = EmbeddingCombine::Concat;
    CHECK(init_params(m.graph, concat, 1).forward[0].w_z.rows() == 8);
    CHECK_THROWS_AS(check_shapes(p, concat), ad::DimensionError);

    ModelConfig uni = c;
    uni.bidirectional = false;
    const ModelParams pu = init_params(m.graph, uni, 1);
    CHECK(pu.backward.empty());
    CHECK(pu.attention.cols() == 5);
  }

  TEST_CASE("invalid model configurations are rejected") {
    ModelConfig c = small_config();
    c.layers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.dropout_rate = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("LSTM cell matches the gate equations") {
    Rng rng(4);
    LstmWeights<Matrix> w;
    for (Matrix* m : {&w.w_z, &w.w_i, &w.w_f, &w.w_o}) *m = random_matrix(3, 2, rng);
    for (Matrix* m : {&w.u_z, &w.u_i, &w.u_f, &w.u_o}) *m = random_matrix(2, 2, rng);
    for (Matrix* m : {&w.b_z, &w.b_i, &w.b_f, &w.b_o}) *m = random_matrix(2, 1, rng);
    const Matrix x = random_matrix(3, 1, rng), h = random_matrix(2, 1, rng), c = random_matrix(2, 1, rng);

    Tape tape(false);
    LstmWeights<Var> v{tape.parameter(w.w_z), tape.parameter(w.w_i), tape.parameter(w.w_f), tape.parameter(w.w_o),
                       tape.parameter(w.u_z), tape.parameter(w.u_i), tape.parameter(w.u_f), tape.parameter(w.u_o),
                       tape.parameter(w.b_z), tape.parameter(w.b_i), tape.parameter(w.b_f), tape.parameter(w.b_o)};
    const LstmState s = lstm_cell(v, tape.constant(x), tape.constant(h), tape.constant(c));
    const auto [h2, c2] = plain(w).step(x, h, c);
    CHECK((s.h.value() - h2).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((s.c.value() - c2).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("bidirectional hidden states match separate forward and reversed passes") {
    const auto m = fixtures::music_graph();
    const ModelConfig c = small_config();
    const ModelParams p = init_params(m.graph, c, 9);
    Tape tape(false);
    const BoundParams b = bind(tape, p);
    const std::vector<NodeId> nodes{m.tony, m.california_hotel, m.eagles, m.in_the_city};
    std::vector<Var> emb;
    std::vector<Matrix> plain_seq;
    for (NodeId v : nodes) {
      emb.push_back(embed_node(b, c, v));
      plain_seq.push_back(Matrix(p.type_embeddings.row(v.type).transpose() +
                                 p.value_embeddings[v.type].row(v.index).transpose()));
      CHECK(emb.back().value() == plain_seq.back());
    }
    const Matrix hidden = bilstm_forward(b, c, emb).value();
    REQUIRE(hidden.rows() == 10);
    REQUIRE(hidden.cols() == 4);
    const auto fwd = run_plain(p.forward, plain_seq);
    auto reversed = plain_seq;
    std::reverse(reversed.begin(), reversed.end());
    auto bwd = run_plain(p.backward, reversed);
    std::reverse(bwd.begin(), bwd.end());
    for (Eigen::Index l = 0; l < 4; ++l) {
      CHECK((hidden.col(l).head(5) - fwd[static_cast<std::size_t>(l)]).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((hidden.col(l).tail(5) - bwd[static_cast<std::size_t>(l)]).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("attention pooling: softmax weights, uniform when disabled") {
    Rng rng(12);
    const Matrix h = random_matrix(6, 4, rng), wu = random_matrix(1, 6, rng);
    Tape tape(false);
    const AttentionPool a = attention_pool(tape.constant(wu), tape.constant(h), true);
    const Matrix logits = wu * Matrix(h.array().tanh());
    const Matrix expected = (logits.array() - logits.maxCoeff()).exp().matrix() /
                            (logits.array() - logits.maxCoeff()).exp().sum();
    CHECK((a.weights.value() - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(a.weights.value().sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((a.representation.value() - h * expected.transpose()).cwiseAbs().maxCoeff() < 1e-14);

    const AttentionPool u = attention_pool(tape.constant(wu), tape.constant(h), false);
    CHECK((u.weights.value().array() == 0.25).all());
  }

  TEST_CASE("path scorer matches an explicit two-loop evaluation") {
    Rng rng(21);
    const int H = 10, r = 8;
    const Matrix w2 = random_matrix(H, r, rng), w1 = random_matrix(r, 1, rng), rep = random_matrix(H, 1, rng);
    double expected = 0.0;
    for (int j = 0; j < r; ++j) {
      double pre = 0.0;
      for (int i = 0; i < H; ++i) pre += w2(i, j) * rep(i, 0);
      expected += w1(j, 0) * std::max(pre, 0.0);
    }
    Tape tape(false);
    const Var s = score_path(tape.constant(w2), tape.constant(w1), tape.constant(rep));
    CHECK(s.scalar() == doctest::Approx(expected).epsilon(1e-13));
  }

  TEST_CASE("aggregation averages path scores") {
    Tape tape(false);
    std::vector<Var> scores{tape.constant(Matrix::Constant(1, 1, 1.0)), tape.constant(Matrix::Constant(1, 1, -2.0)),
                            tape.constant(Matrix::Constant(1, 1, 4.0))};
    const Prediction p = aggregate_and_predict(scores);
    CHECK(p.logit.scalar() == doctest::Approx(1.0));
    CHECK(p.probability.scalar() == doctest::Approx(sigm(1.0)));
    CHECK_THROWS_AS(aggregate_and_predict({}), ContractError);
  }

  TEST_CASE("prediction equals the sigmoid of the mean path score") {
    const auto m = fixtures::music_graph();
    const ModelConfig c = small_config();
    const ModelParams p = init_params(m.graph, c, 5);
    const PathSet set{m.tony, m.in_the_city, enumerate_paths_oracle(m.graph, m.tony, m.in_the_city, 4)};
    const auto scores = score_paths(p, c, set);
    REQUIRE(scores.size() == 3);
    double mean = 0.0;
    for (const auto& s : scores) {
      mean += s.score / 3.0;
      double total = 0.0;
      for (double a : s.attention) total += a;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(predict(p, c, set) == doctest::Approx(sigm(mean)).epsilon(1e-14));
    CHECK_THROWS_AS(predict(p, c, PathSet{m.tony, m.in_the_city, {}}), ContractError);
  }

  TEST_CASE("dropout only acts in training mode and follows its seed") {
    const auto m = fixtures::music_graph();
    ModelConfig c = small_config();
    c.dropout_rate = 0.5;
    const ModelParams p = init_params(m.graph, c, 5);
    const PathSet set{m.tony, m.in_the_city, enumerate_paths_oracle(m.graph, m.tony, m.in_the_city, 4)};
    CHECK(predict(p, c, set) == predict(p, c, set));

    auto run = [&](bool training, std::uint64_t seed) {
      Tape tape(false);
      const BoundParams b = bind(tape, p);
      ForwardOptions o;
      o.training = training;
      o.dropout_seed = seed;
      return forward(b, c, set, o).probability.scalar();
    };
    CHECK(run(true, 3) == run(true, 3));
    CHECK(run(true, 3) != run(true, 4));
    CHECK(run(false, 3) == predict(p, c, set));

    Rng rng(1);
    const Matrix mask = dropout_mask(1000, 1, 0.5, rng);
    CHECK(((mask.array() == 0.0) || (mask.array() == 2.0)).all());
    Rng rng2(1);
    CHECK((dropout_mask(10, 1, 0.0, rng2).array() == 1.0).all());
  }

  TEST_CASE("reversing a path changes the prediction") {
    const auto m = fixtures::music_graph();
    const ModelConfig c = small_config();
    const ModelParams p = init_params(m.graph, c, 3);
    const Path walk{{m.tony, m.california_hotel, m.eagles, m.in_the_city}};
    Path reversed = walk;
    std::reverse(reversed.nodes.begin(), reversed.nodes.end());
    const double a = predict(p, c, PathSet{m.tony, m.in_the_city, {walk}});
    const double b = predict(p, c, PathSet{m.tony, m.in_the_city, {reversed}});
    CHECK(std::abs(a - b) > 1e-6);
  }
}
