#pragma once

// Compressed-image container: magic "CVQN", version byte, image size, the
// per-group quantization setup, the channel permutation used by split/merge,
// each group's center table, and each group's arithmetic-coded payload.
// Multi-byte integers are big-endian; the center tables are little-endian
// f32 (they double as a hard compatibility check against the checkpoint).
// Parse -> serialize is byte-identical.

#include <cstdint>
#include <vector>

namespace cvq {

struct Bitstream {
    int height = 0;                             // pixels, u16
    int width = 0;                              // pixels, u16
    std::vector<int> group_levels;              // q_g, u8 each
    std::vector<int> group_sizes;               // C_g, u8 each; sums to C
    std::vector<int> permutation;               // C bytes
    std::vector<std::vector<float>> mu_tables;  // per group, q_g centers
    std::vector<std::vector<uint8_t>> payloads; // per group, u32 length + bytes
};

void validate_bitstream(const Bitstream& bs);
std::vector<uint8_t> serialize_bitstream(const Bitstream& bs);
Bitstream parse_bitstream(const std::vector<uint8_t>& bytes);

}  // namespace cvq
