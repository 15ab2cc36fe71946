#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "memvae/nn.hpp"

namespace memvae {

// Flat binary checkpoint: the magic string "MEMVAE01", then per parameter
// (in ParamList order): u32 name length, name bytes, u32 rank, u64 dims,
// little-endian f64 payload. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamList& params);

struct CheckpointEntry {
    Shape shape;
    std::vector<double> values;
};

std::map<std::string, CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

// Writes the stored values into matching parameters. Every parameter must be
// present with an identical shape.
void load_checkpoint_into(const std::filesystem::path& path, ParamList& params);

}  // namespace memvae
