#pragma once

// Versioned binary model container. Layout: magic "VLCAECK1", u32 version,
// then length-prefixed little-endian fields. Doubles are stored as raw IEEE
// bits so a save/load round trip is exact.

#include <cstdint>
#include <string>
#include <vector>

#include "vlcae/binarizer.hpp"
#include "vlcae/nn.hpp"
#include "vlcae/trainer.hpp"

namespace vlcae {

struct Checkpoint {
  ModelParams params;
  DualState duals;
  BinarizerSpec binarizer;
  std::vector<double> dimming_set;
  std::uint64_t seed = 0;
  std::string config_text;  // run config snapshot
};

inline constexpr std::uint32_t checkpoint_version = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws ParseError (line 0) on a truncated or foreign file.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a 64-bit hash of a byte string, hex encoded; used in manifests.
std::string content_hash(const std::string& bytes);

}  // namespace vlcae
