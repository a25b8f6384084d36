#pragma once

#include <string>

#include "caps/codec.hpp"

namespace caps::codec {

inline constexpr int kCheckpointFormatVersion = 1;

// JSON checkpoint: {format_version, rng_algorithm, config, params: {name ->
// {shape, data}}}. Doubles are written with round-trip precision. Loading
// validates every shape against the config and rejects missing or unknown
// parameter names.
void save_checkpoint(const std::string& path, const CodecParams& params);
CodecParams load_checkpoint(const std::string& path);

}  // namespace caps::codec
