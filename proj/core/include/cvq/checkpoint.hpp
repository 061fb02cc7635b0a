#pragma once

// Checkpoint container: magic "CVQC", version byte, the canonical settings
// text, the epoch counter, every parameter blob (name, shape, raw doubles),
// and the serialized RNG state. All multi-byte integers and double bit
// patterns are little-endian. Because the settings text and the parameter
// order are canonical, save -> load -> save is byte-identical.

#include <cstdint>
#include <string>
#include <vector>

#include "cvq/model.hpp"
#include "cvq/rng.hpp"

namespace cvq {

struct CheckpointData {
    Model model;
    int epoch = 0;
    Rng rng{0};
};

std::vector<uint8_t> serialize_checkpoint(Model& m, int epoch, const Rng& rng);
CheckpointData parse_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::string& path, Model& m, int epoch, const Rng& rng);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace cvq
