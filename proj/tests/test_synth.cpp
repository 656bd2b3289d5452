#include <filesystem>

#include "ablah/synth.hpp"
#include "doctest.h"

using namespace ablah;

TEST_SUITE("synth") {
  TEST_CASE("planted dataset shape") {
    const SynthConfig cfg;
    LoadOptions o;
    o.min_user_interactions = 0;
    const LoadedGraph data = build_synth(cfg, o);
    CHECK(data.graph.users() == 200);
    CHECK(data.graph.items() == 500);
    CHECK(data.graph.node_count(kArtistSlot) == 20);
    CHECK(data.graph.node_count(kAlbumSlot) == 100);
    CHECK(data.graph.stats().interactions == 2000);
    for (std::uint32_t u = 0; u < data.graph.users(); ++u) CHECK(data.graph.items_of(u).size() == 10);
  }

  TEST_CASE("most interactions follow the block preferences") {
    const SynthConfig cfg;
    const SynthData d = generate_synth(cfg);
    std::size_t inside = 0;
    for (const EdgeRecord& r : d.interactions) {
      const std::size_t user = std::stoul(r.src_key.substr(1)), item = std::stoul(r.dst_key.substr(1));
      const auto pref = synth_preferred_artists(cfg, synth_block(cfg, user));
      inside += std::find(pref.begin(), pref.end(), synth_artist_of(cfg, item)) != pref.end();
    }
    const double share = static_cast<double>(inside) / static_cast<double>(d.interactions.size());
    CHECK(share > 0.85);
    CHECK(share < 0.97);
  }

  TEST_CASE("seeded and written in the ingestion format") {
    SynthConfig cfg;
    cfg.users = 20;
    const SynthData a = generate_synth(cfg), b = generate_synth(cfg);
    CHECK(a.interactions.size() == b.interactions.size());
    for (std::size_t n = 0; n < a.interactions.size(); ++n) CHECK(a.interactions[n].dst_key == b.interactions[n].dst_key);
    cfg.seed = 8;
    const SynthData c = generate_synth(cfg);
    bool differs = false;
    for (std::size_t n = 0; n < a.interactions.size(); ++n) differs |= a.interactions[n].dst_key != c.interactions[n].dst_key;
    CHECK(differs);

    const auto dir = std::filesystem::temp_directory_path() / "ablah_synth_test";
    write_synth(a, dir);
    const std::vector<std::filesystem::path> aux{dir / "aux.tsv"};
    const LoadedGraph loaded = load_tsv(dir / "interactions.tsv", aux);
    CHECK(loaded.graph.users() == 20);
    CHECK(loaded.graph.stats().interactions == a.interactions.size());

    SynthConfig bad;
    bad.interactions_per_user = 1000;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
