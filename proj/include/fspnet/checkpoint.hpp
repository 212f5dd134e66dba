#pragma once

#include <string>

#include "fspnet/ad/tape.hpp"

namespace fspnet {

/// "FSPC" checkpoint: magic, u32 version, u32 entry count; per entry a u32
/// name length + UTF-8 name, u32 rank, u64 dims, then little-endian f64
/// values. Round-trips bit-exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ad::ParamStore& store, const std::string& path);

/// Load a checkpoint into a fresh store (moments zeroed, step counts reset).
ad::ParamStore load_checkpoint(const std::string& path);

/// Copy values by name into an existing store; every store entry must be
/// present in the file with a matching shape.
void load_checkpoint_into(ad::ParamStore& store, const std::string& path);

}  // namespace fspnet
