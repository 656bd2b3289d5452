#include "ablah/synth.hpp"

#include <fstream>
#include <set>

#include "ablah/rng.hpp"

namespace ablah {

void SynthConfig::validate() const {
  if (users == 0 || items == 0 || artists == 0 || blocks == 0) throw ConfigError("synth sizes must be positive");
  if (items < artists) throw ConfigError("synth needs at least one item per artist");
  if (albums_per_artist == 0) throw ConfigError("synth albums_per_artist must be positive");
  if (artists_per_block == 0 || artists_per_block > artists) throw ConfigError("synth artists_per_block out of range");
  if (interactions_per_user == 0) throw ConfigError("synth interactions_per_user must be positive");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synth noise must lie in [0, 1]");
  const std::size_t pool = artists_per_block * (items / artists);
  if (interactions_per_user > pool) {
    throw ConfigError("synth interactions_per_user exceeds the preferred pool of " + std::to_string(pool) + " items");
  }
}

std::size_t synth_block(const SynthConfig& config, std::size_t user) { return user % config.blocks; }

std::vector<std::size_t> synth_preferred_artists(const SynthConfig& config, std::size_t block) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < config.artists_per_block; ++n) {
    out.push_back((block * config.artists_per_block + n) % config.artists);
  }
  return out;
}

std::size_t synth_artist_of(const SynthConfig& config, std::size_t item) { return item % config.artists; }

SynthData generate_synth(const SynthConfig& config) {
  config.validate();
  SynthData data;
  auto rec = [](const char* st, std::string sk, const char* e, const char* dt, std::string dk) {
    return EdgeRecord{st, std::move(sk), e, dt, std::move(dk), "synth"};
  };
  const auto song = [](std::size_t j) { return "s" + std::to_string(j); };

  std::vector<std::vector<std::size_t>> by_artist(config.artists);
  for (std::size_t j = 0; j < config.items; ++j) by_artist[synth_artist_of(config, j)].push_back(j);

  Rng rng(derive_seed(config.seed, 0x73796e7468ULL));
  for (std::size_t u = 0; u < config.users; ++u) {
    std::vector<std::size_t> preferred;
    for (std::size_t a : synth_preferred_artists(config, synth_block(config, u))) {
      preferred.insert(preferred.end(), by_artist[a].begin(), by_artist[a].end());
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < config.interactions_per_user) {
      const bool noisy = uniform_unit(rng) < config.noise;
      chosen.insert(noisy ? uniform_index(rng, config.items) : preferred[uniform_index(rng, preferred.size())]);
    }
    for (std::size_t j : chosen) data.interactions.push_back(rec("User", "u" + std::to_string(u), "listened", "Item", song(j)));
  }

  for (std::size_t a = 0; a < config.artists; ++a) {
    const auto& songs = by_artist[a];
    for (std::size_t n = 0; n < songs.size(); ++n) {
      const std::size_t album = a * config.albums_per_artist + n % config.albums_per_artist;
      data.aux.push_back(rec("Item", song(songs[n]), "sung_by", "Artist", "a" + std::to_string(a)));
      data.aux.push_back(rec("Item", song(songs[n]), "in_album", "Album", "al" + std::to_string(album)));
    }
  }
  return data;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [](const std::filesystem::path& p, const std::vector<EdgeRecord>& rows) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << "src_type\tsrc_key\tedge_type\tdst_type\tdst_key\n";
    for (const EdgeRecord& r : rows) {
      out << r.src_type << '\t' << r.src_key << '\t' << r.edge << '\t' << r.dst_type << '\t' << r.dst_key << '\n';
    }
  };
  dump(dir / "interactions.tsv", data.interactions);
  dump(dir / "aux.tsv", data.aux);
}

LoadedGraph build_synth(const SynthConfig& config, const LoadOptions& options) {
  SynthData data = generate_synth(config);
  std::vector<EdgeRecord> all = std::move(data.interactions);
  all.insert(all.end(), data.aux.begin(), data.aux.end());
  return load_records(all, options);
}

}  // namespace ablah
