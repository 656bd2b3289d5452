#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ablah/synth.hpp"
#include "ablah/training.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace ablah;
namespace fs = std::filesystem;

namespace {

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ablah_training_tests";
  fs::create_directories(dir);
  return dir / name;
}

SynthConfig tiny_synth() {
  SynthConfig s;
  s.users = 40;
  s.items = 100;
  s.artists = 10;
  s.blocks = 5;
  s.interactions_per_user = 6;
  return s;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.embedding_dim = 4;
  c.hidden_dim = 4;
  c.layers = 1;
  c.scorer_units = 4;
  c.dropout_rate = 0.2;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 32;
  t.negatives_per_positive = 1;
  t.k_paths = 3;
  t.seed = 5;
  return t;
}

LoadedGraph tiny_graph() {
  LoadOptions o;
  o.min_user_interactions = 0;
  return build_synth(tiny_synth(), o);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("Adam step matches the update rule written out per entry") {
    const auto m = fixtures::music_graph();
    TrainState s = init_state(m.graph, tiny_model(), 3);
    const ModelParams before = s.params;
    Rng rng(8);
    Gradients g1 = zeros_like(s.params), g2 = zeros_like(s.params);
    visit_tensors(
        [&](const std::string&, Matrix& a, Matrix& b) {
          a = fixtures::random_matrix(a.rows(), a.cols(), rng);
          b = fixtures::random_matrix(b.rows(), b.cols(), rng);
        },
        g1, g2);
    const AdamConfig adam;
    adam_step(s, g1, 0.01, adam);
    adam_step(s, g2, 0.005, adam);
    CHECK(s.step == 2);

    const double x0 = before.scorer_output(1, 0), a = g1.scorer_output(1, 0), b = g2.scorer_output(1, 0);
    double m1 = 0.1 * a, v1 = 0.001 * a * a;
    double x1 = x0 - 0.01 * (m1 / (1 - 0.9)) / (std::sqrt(v1 / (1 - 0.999)) + 1e-8);
    double m2 = 0.9 * m1 + 0.1 * b, v2 = 0.999 * v1 + 0.001 * b * b;
    double x2 = x1 - 0.005 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
    CHECK(s.params.scorer_output(1, 0) == doctest::Approx(x2).epsilon(1e-13));
  }

  TEST_CASE("zero gradients leave fresh parameters unchanged") {
    const auto m = fixtures::music_graph();
    TrainState s = init_state(m.graph, tiny_model(), 3);
    const ModelParams before = s.params;
    adam_step(s, zeros_like(s.params), 0.01, {});
    bool same = true;
    visit_tensors([&](const std::string&, const Matrix& a, const Matrix& b) { same = same && a == b; }, s.params, before);
    CHECK(same);
  }

  TEST_CASE("non-finite gradients are refused without side effects") {
    const auto m = fixtures::music_graph();
    TrainState s = init_state(m.graph, tiny_model(), 3);
    const ModelParams before = s.params;
    Gradients g = zeros_like(s.params);
    g.attention(0, 1) = std::nan("");
    try {
      adam_step(s, g, 0.01, {});
      FAIL("expected a domain error");
    } catch (const std::domain_error& e) {
      CHECK(std::string(e.what()).find("attention/W_u") != std::string::npos);
    }
    CHECK(s.step == 0);
    CHECK(s.params.attention == before.attention);
    CHECK(s.first_moment.attention.isZero());
  }

  TEST_CASE("learning rate decays linearly") {
    CHECK(lr_schedule(0, 100, 0.001, 0.1) == doctest::Approx(0.001));
    CHECK(lr_schedule(50, 100, 0.001, 0.1) == doctest::Approx(0.00055));
    CHECK(lr_schedule(100, 100, 0.001, 0.1) == doctest::Approx(0.0001));
    CHECK(lr_schedule(500, 100, 0.001, 0.1) == doctest::Approx(0.0001));
    CHECK(lr_schedule(5, 0, 0.001, 0.0) == 0.001);
  }

  TEST_CASE("training configuration validation") {
    TrainConfig t;
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.l_max = 1;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.lr_final_fraction = 2.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }

  TEST_CASE("checkpoints round-trip and detect damage") {
    const LoadedGraph data = tiny_graph();
    TrainState s = init_state(data.graph, tiny_model(), 1);
    train(data.graph, s, tiny_train(), {});
    const fs::path p = temp("roundtrip.bin");
    save_checkpoint(s, p);
    const TrainState back = load_checkpoint(p);
    CHECK(back.step == s.step);
    CHECK(back.epoch == 2);
    CHECK(model_config_json(back.model) == model_config_json(s.model));
    CHECK(back.rng == s.rng);
    const fs::path p2 = temp("roundtrip2.bin");
    save_checkpoint(back, p2);
    CHECK(bytes_of(p) == bytes_of(p2));
    CHECK(checkpoint_manifest(back).find("scorer/W_1\t4x1") != std::string::npos);

    const std::string good = bytes_of(p);
    auto write = [](const fs::path& f, const std::string& b) { std::ofstream(f, std::ios::binary) << b; };
    write(temp("magic.bin"), "NOTACKPT" + good.substr(8));
    CHECK_THROWS_WITH_AS(load_checkpoint(temp("magic.bin")), doctest::Contains("magic"), DataError);
    write(temp("short.bin"), good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(temp("short.bin")), DataError);
    std::string flipped = good;
    flipped[good.size() / 3] ^= 0x01;
    write(temp("flip.bin"), flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(temp("flip.bin")), doctest::Contains("checksum"), DataError);
    CHECK_THROWS_AS(load_checkpoint(temp("missing.bin")), DataError);
  }

  TEST_CASE("identical runs give identical checkpoints; resuming equals running through") {
    const LoadedGraph data = tiny_graph();
    auto run = [&](const std::string& name) {
      TrainState s = init_state(data.graph, tiny_model(), 11);
      train(data.graph, s, tiny_train(), {});
      save_checkpoint(s, temp(name));
      return bytes_of(temp(name));
    };
    const std::string a = run("det_a.bin");
    CHECK(a == run("det_b.bin"));

    TrainState first = init_state(data.graph, tiny_model(), 11);
    TrainHooks stop;
    stop.stop_after_epoch = 1;
    const auto logs = train(data.graph, first, tiny_train(), {}, stop);
    CHECK(logs.size() == 1);
    save_checkpoint(first, temp("half.bin"));
    TrainState resumed = load_checkpoint(temp("half.bin"));
    train(data.graph, resumed, tiny_train(), {});
    save_checkpoint(resumed, temp("resumed.bin"));
    CHECK(bytes_of(temp("resumed.bin")) == a);
  }

  TEST_CASE("epoch logs account for every instance") {
    const LoadedGraph data = tiny_graph();
    TrainState s = init_state(data.graph, tiny_model(), 2);
    TrainConfig t = tiny_train();
    t.threads = 3;
    const auto logs = train(data.graph, s, t, {});
    REQUIRE(logs.size() == 2);
    for (const EpochLog& l : logs) {
      CHECK(l.processed + l.skipped == 2 * data.graph.stats().interactions);
      CHECK(std::isfinite(l.mean_loss));
    }
  }

  TEST_CASE("a training set without any paths is reported") {
    HinGraphBuilder b;
    const NodeId u0 = b.add_node(NodeType::user()), u1 = b.add_node(NodeType::user());
    const NodeId i0 = b.add_node(NodeType::item()), i1 = b.add_node(NodeType::item());
    b.add_edge(u0, i0, EdgeType("listened"));
    b.add_edge(u1, i1, EdgeType("listened"));
    const HinGraph g = b.freeze_and_validate();
    TrainState s = init_state(g, tiny_model(), 1);
    CHECK_THROWS_AS(train(g, s, tiny_train(), {}), UnusableTrainingSet);
  }
}
