#pragma once

// Binary PPM (P6, 8-bit) image I/O. Pixels map to [0,1] by dividing by 255;
// writing rounds to the nearest byte after a defensive clamp. The parser
// accepts comments and arbitrary whitespace in the header but requires
// maxval 255 and rejects trailing bytes, so parse/serialize round-trips are
// byte-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "cvq/tensor.hpp"

namespace cvq {

Tensor parse_ppm(const std::vector<uint8_t>& bytes);   // -> [3,H,W] in [0,1]
std::vector<uint8_t> serialize_ppm(const Tensor& image);

Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

}  // namespace cvq
