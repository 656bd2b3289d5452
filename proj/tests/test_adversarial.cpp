#include <cmath>

#include "ablah/training.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace ablah;
using fixtures::random_matrix;

namespace {

ModelConfig toy_model() {
  ModelConfig c;
  c.embedding_dim = 4;
  c.hidden_dim = 5;
  c.layers = 2;
  c.scorer_units = 6;
  c.dropout_rate = 0.0;
  return c;
}

struct Toy {
  fixtures::MusicGraph m = fixtures::music_graph();
  ModelConfig model = toy_model();
  ModelParams params = init_params(m.graph, model, 7);
  PathSet paths{m.tony, m.in_the_city, enumerate_paths_oracle(m.graph, m.tony, m.in_the_city, 4)};
};

double clean_loss(const Toy& t, int label) {
  Tape tape(false);
  const BoundParams b = bind(tape, t.params);
  return loss(forward(b, t.model, t.paths).output, label).scalar();
}

}  // namespace

TEST_SUITE("adversarial") {
  TEST_CASE("perturbation norm equals epsilon") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      const auto rows = static_cast<Eigen::Index>(1 + uniform_index(rng, 8));
      const auto cols = static_cast<Eigen::Index>(1 + uniform_index(rng, 5));
      const double scale = std::pow(10.0, 6 * uniform_unit(rng) - 3);
      const double eps = 2 * uniform_unit(rng) + 0.01;
      const Matrix d = compute_perturbation(random_matrix(rows, cols, rng, scale), eps);
      CHECK(std::abs(d.norm() - eps) < 1e-12);
    }
    CHECK(compute_perturbation(Matrix::Zero(3, 2), 0.4).norm() == 0.0);
    Matrix g(2, 1);
    g << 3.0, 4.0;
    const Matrix d = compute_perturbation(g, 0.5);
    CHECK(d(0, 0) == doctest::Approx(-0.3));
    CHECK(d(1, 0) == doctest::Approx(-0.4));
  }

  TEST_CASE("joint and per-path normalisation") {
    Toy t;
    for (auto norm : {PerturbationNorm::Joint, PerturbationNorm::PerTensor}) {
      PerturbationConfig adv;
      adv.norm = norm;
      Tape tape;
      const BoundParams b = bind(tape, t.params);
      const Objective obj = training_objective(tape, b, t.model, adv, t.paths, 1);
      REQUIRE(obj.delta.node_embeddings.size() == 3);
      double sq = 0.0;
      for (const Matrix& d : obj.delta.node_embeddings) {
        CHECK(d.rows() == 4);
        CHECK(d.cols() == 4);
        if (norm == PerturbationNorm::PerTensor) CHECK(std::abs(d.norm() - adv.epsilon) < 1e-12);
        sq += d.squaredNorm();
      }
      if (norm == PerturbationNorm::Joint) CHECK(std::abs(std::sqrt(sq) - adv.epsilon) < 1e-12);
    }
  }

  TEST_CASE("zero epsilon leaves the loss unchanged") {
    Toy t;
    for (auto target :
         {PerturbationTarget::NodeEmbeddings, PerturbationTarget::PathRepresentation, PerturbationTarget::Logit}) {
      for (int label : {0, 1}) {
        PerturbationConfig adv;
        adv.epsilon = 0.0;
        adv.target = target;
        CHECK(adversarial_loss(t.params, t.model, adv, t.paths, label) == clean_loss(t, label));
      }
    }
  }

  TEST_CASE("logit perturbation has a closed form") {
    Toy t;
    Tape tape(false);
    const BoundParams b = bind(tape, t.params);
    const double s = forward(b, t.model, t.paths).logit.scalar();
    for (int label : {0, 1}) {
      for (double eps : {0.1, 0.4, 1.0}) {
        PerturbationConfig adv;
        adv.epsilon = eps;
        adv.target = PerturbationTarget::Logit;
        const double p = 1.0 / (1.0 + std::exp(-s));
        const double g = label - p;  // d log p(y|s) / ds
        const double shifted = 1.0 / (1.0 + std::exp(-(s - eps * (g > 0 ? 1.0 : -1.0))));
        const double expected = -(label * std::log(shifted) + (1 - label) * std::log(1 - shifted));
        CHECK(std::abs(adversarial_loss(t.params, t.model, adv, t.paths, label) - expected) < 1e-12);
      }
    }
  }

  TEST_CASE("the perturbation increases the loss to first order") {
    Toy t;
    for (auto target : {PerturbationTarget::NodeEmbeddings, PerturbationTarget::PathRepresentation}) {
      PerturbationConfig adv;
      adv.target = target;
      adv.epsilon = 1e-3;
      for (int label : {0, 1}) CHECK(adversarial_loss(t.params, t.model, adv, t.paths, label) > clean_loss(t, label));
    }
  }

  TEST_CASE("lambda zero gives exactly the clean gradient") {
    Toy t;
    PerturbationConfig adv;
    adv.lambda = 0.0;
    ForwardOptions o;
    const InstanceGradient ig = instance_gradient(t.params, t.model, adv, t.paths, 1, o);

    Tape tape;
    const BoundParams b = bind(tape, t.params);
    const Var l = loss(forward(b, t.model, t.paths, o).output, 1);
    tape.backward(l);
    const Gradients plain = collect_gradients(tape, b, t.params);
    CHECK(ig.loss == l.scalar());
    bool identical = true;
    visit_tensors([&](const std::string&, const Matrix& a, const Matrix& c) { identical = identical && a == c; },
                  ig.grads, plain);
    CHECK(identical);
    CHECK(total_loss(1.5, 99.0, 0.0) == 1.5);
  }

  TEST_CASE("positives-only skips negatives") {
    Toy t;
    PerturbationConfig adv;
    adv.positives_only = true;
    Tape tape;
    const BoundParams b = bind(tape, t.params);
    const Objective neg = training_objective(tape, b, t.model, adv, t.paths, 0);
    CHECK_FALSE(neg.adversarial_loss.valid());
    const Objective pos = training_objective(tape, b, t.model, adv, t.paths, 1);
    CHECK(pos.adversarial_loss.valid());
  }

  TEST_CASE("objective gradients match finite differences for every target") {
    Toy t;
    t.paths.paths.resize(2);
    for (auto target :
         {PerturbationTarget::NodeEmbeddings, PerturbationTarget::PathRepresentation, PerturbationTarget::Logit}) {
      PerturbationConfig adv;
      adv.target = target;
      for (int label : {0, 1}) {
        for (const auto& e : fixtures::objective_gradient_check(t.params, t.model, adv, t.paths, label, {})) {
          INFO(e.name);
          CHECK(e.relative_error < 1e-4);
        }
      }
    }
  }

  TEST_CASE("gradients with dropout masks match finite differences") {
    Toy t;
    t.model.dropout_rate = 0.3;
    t.params = init_params(t.m.graph, t.model, 7);
    ForwardOptions o;
    o.training = true;
    o.dropout_seed = 1234;
    for (const auto& e : fixtures::objective_gradient_check(t.params, t.model, PerturbationConfig{}, t.paths, 1, o)) {
      INFO(e.name);
      CHECK(e.relative_error < 1e-4);
    }
  }

  TEST_CASE("invalid settings are rejected") {
    PerturbationConfig adv;
    adv.epsilon = -0.1;
    CHECK_THROWS_AS(adv.validate(), ConfigError);
    adv = {};
    adv.lambda = -1;
    CHECK_THROWS_AS(adv.validate(), ConfigError);
  }
}
