#pragma once

// Seeded synthetic HIN with planted block preferences: users fall into
// blocks, each block favours the songs of a few artists.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ablah/graph.hpp"

namespace ablah {

struct SynthConfig {
  std::size_t users = 200;
  std::size_t items = 500;
  std::size_t artists = 20;
  std::size_t albums_per_artist = 5;
  std::size_t interactions_per_user = 10;
  std::size_t blocks = 10;
  std::size_t artists_per_block = 2;
  double noise = 0.1;  // share of interactions drawn uniformly from the catalog
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthData {
  std::vector<EdgeRecord> interactions;  // User -listened-> Item
  std::vector<EdgeRecord> aux;           // Item -sung_by-> Artist, Item -in_album-> Album
};

SynthData generate_synth(const SynthConfig& config);

// Block of a user and the artists that block prefers.
std::size_t synth_block(const SynthConfig& config, std::size_t user);
std::vector<std::size_t> synth_preferred_artists(const SynthConfig& config, std::size_t block);
std::size_t synth_artist_of(const SynthConfig& config, std::size_t item);

// interactions.tsv and aux.tsv in the ingestion format.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

LoadedGraph build_synth(const SynthConfig& config, const LoadOptions& options = {});

}  // namespace ablah
