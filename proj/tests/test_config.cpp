#include <filesystem>
#include <fstream>
#include <set>

#include "ablah/config.hpp"
#include "doctest.h"

using namespace ablah;

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    RunConfig c;
    c.sync();
    CHECK(c.train.learning_rate == 0.001);
    CHECK(c.train.batch_size == 128);
    CHECK(c.model.layers == 2);
    CHECK(c.model.hidden_dim == 128);
    CHECK(c.adversarial.epsilon == 0.4);
    CHECK(c.eval.ks == std::vector<std::size_t>{5, 10});
    CHECK(c.eval.candidate_negatives == 100);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("every key round-trips through its text form") {
    RunConfig c;
    c.sync();
    std::set<std::string> names;
    for (const ConfigKey& k : config_keys()) {
      CHECK(names.insert(k.name).second);
      RunConfig d;
      set_config_value(d, k.name, k.get(c));
      CHECK(k.get(d) == k.get(c));
    }
    RunConfig parsed;
    apply_config_text(parsed, config_to_text(c));
    CHECK(config_to_text(parsed) == config_to_text(c));
    CHECK(config_hash(parsed) == config_hash(c));
  }

  TEST_CASE("file syntax, overrides and errors") {
    RunConfig c;
    apply_config_text(c,
                      "# ablation without adversarial training\n"
                      "lambda = 0\n"
                      "embedding_dim = 64   # trailing comment\n"
                      "use_attention = off\n"
                      "perturb_target = \"logit\"\n"
                      "aux = [\"a.tsv\", \"b.tsv\"]\n"
                      "eval_ks = [1, 5, 10]\n"
                      "seed = 9\n");
    CHECK(c.adversarial.lambda == 0.0);
    CHECK(c.model.embedding_dim == 64);
    CHECK_FALSE(c.model.use_attention);
    CHECK(c.adversarial.target == PerturbationTarget::Logit);
    CHECK(c.data.aux == std::vector<std::string>{"a.tsv", "b.tsv"});
    CHECK(c.eval.ks == std::vector<std::size_t>{1, 5, 10});
    CHECK(c.eval.seed == 9);
    CHECK(c.split.seed == 9);

    CHECK_THROWS_WITH_AS(apply_config_text(c, "embeding_dim = 3\n", "f.toml"), doctest::Contains("f.toml:1"),
                         ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "layers = two\n"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "layers\n"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "combine = product\n"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "dropout = nan\n"), ConfigError);
    CHECK_THROWS_AS(load_config_file("/nonexistent/config.toml"), ConfigError);
  }

  TEST_CASE("ablation variants are reachable from configuration alone") {
    RunConfig no_adv, no_attention, unidirectional;
    apply_config_text(no_adv, "lambda = 0\n");
    apply_config_text(no_attention, "use_attention = false\n");
    apply_config_text(unidirectional, "bidirectional = false\n");
    CHECK(no_adv.adversarial.lambda == 0.0);
    CHECK_FALSE(no_attention.model.use_attention);
    CHECK_FALSE(unidirectional.model.bidirectional);
  }

  TEST_CASE("sweep values") {
    CHECK(parse_sweep_values("16,32,64,128,256").size() == 5);
    const auto eps = parse_sweep_values("0.1:1.0:0.1");
    REQUIRE(eps.size() == 10);
    CHECK(eps.front() == "0.1");
    CHECK(eps[2] == "0.3");
    CHECK(eps.back() == "1");
    CHECK(parse_sweep_values("0.1:0.9:0.1").size() == 9);
    CHECK_THROWS_AS(parse_sweep_values("1:0:1"), ConfigError);
    CHECK_THROWS_AS(parse_sweep_values(""), ConfigError);
    CHECK_NOTHROW(require_sweepable("embedding_dim"));
    CHECK_NOTHROW(require_sweepable("epsilon"));
    CHECK_THROWS_AS(require_sweepable("interactions"), ConfigError);
    CHECK_THROWS_AS(require_sweepable("no_such_key"), ConfigError);
  }

  TEST_CASE("configuration hash follows the settings") {
    RunConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    set_config_value(b, "epsilon", "0.5");
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 8);
  }
}
