#pragma once

#include <cstdint>
#include <string>

#include "seqlab/model.hpp"

namespace seqlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes a self-contained model file: magic + version, a JSON metadata block
// (config, alphabets, tensor directory), every parameter and buffer as
// little-endian doubles, and a trailing FNV-1a checksum over the whole file.
void save_model(Tagger& tagger, const std::string& path);

// Rebuilds the tagger from such a file. Throws std::runtime_error on missing
// or truncated files, foreign magic, a newer version tag, checksum mismatch,
// or a directory that does not match the rebuilt architecture.
Tagger load_model(const std::string& path);

}  // namespace seqlab
