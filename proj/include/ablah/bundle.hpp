#pragma once

// On-disk graph bundle: graph.bin, keys.json and stats.json in one directory.

#include <cstdint>
#include <filesystem>

#include "ablah/graph.hpp"

namespace ablah {

void write_bundle(const LoadedGraph& loaded, const std::filesystem::path& dir);
LoadedGraph read_bundle(const std::filesystem::path& dir);

// crc32 of the canonical binary form.
std::uint32_t graph_checksum(const HinGraph& g);

std::string stats_json(const GraphStats& stats);

}  // namespace ablah
