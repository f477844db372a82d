#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relchain/optim.hpp"

namespace relchain {

// Single-file checkpoint: magic + version + metadata string, then per
// parameter `name, shape, raw 64-bit little-endian values`. Save/load is
// bit-exact.
void save_checkpoint(const std::filesystem::path& file, std::span<const Parameter> params,
                     const std::string& meta);

struct Checkpoint {
  std::string meta;
  std::vector<Parameter> params;
};

Checkpoint load_checkpoint(const std::filesystem::path& file);

// Copies values into matching parameters; throws on unknown names or shape
// mismatches.
void apply_checkpoint(const Checkpoint& ckpt, std::vector<Parameter>& params);

}  // namespace relchain
