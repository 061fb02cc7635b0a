#include "cvq/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cvq {

namespace {

bool is_space(uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
long next_header_int(const std::vector<uint8_t>& b, size_t& pos) {
    for (;;) {
        while (pos < b.size() && is_space(b[pos])) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
        throw std::runtime_error("ppm: malformed header");
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        if (v > 1000000000L) throw std::runtime_error("ppm: header value out of range");
        ++pos;
    }
    return v;
}

}  // namespace

Tensor parse_ppm(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw std::runtime_error("ppm: not a P6 file");
    size_t pos = 2;
    long w = next_header_int(bytes, pos);
    long h = next_header_int(bytes, pos);
    long maxval = next_header_int(bytes, pos);
    if (w < 1 || h < 1) throw std::runtime_error("ppm: bad dimensions");
    if (maxval != 255) throw std::runtime_error("ppm: only 8-bit (maxval 255) is supported");
    if (pos >= bytes.size() || !is_space(bytes[pos]))
        throw std::runtime_error("ppm: malformed header");
    ++pos;  // single whitespace byte before the raster
    size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
    if (bytes.size() - pos < need) throw std::runtime_error("ppm: truncated pixel data");
    if (bytes.size() - pos > need) throw std::runtime_error("ppm: trailing bytes after pixel data");
    int hi = static_cast<int>(h), wi = static_cast<int>(w);
    std::vector<double> v(3 * need / 3);
    size_t plane = static_cast<size_t>(hi) * wi;
    for (size_t p = 0; p < plane; ++p)
        for (size_t c = 0; c < 3; ++c)
            v[c * plane + p] = bytes[pos + p * 3 + c] / 255.0;
    return Tensor::from_vector({3, hi, wi}, std::move(v));
}

std::vector<uint8_t> serialize_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("ppm: expected a [3,H,W] tensor");
    int h = image.dim(1), w = image.dim(2);
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    const std::vector<double>& v = image.values();
    size_t plane = static_cast<size_t>(h) * w;
    out.reserve(out.size() + plane * 3);
    for (size_t p = 0; p < plane; ++p)
        for (size_t c = 0; c < 3; ++c) {
            double x = v[c * plane + p];
            x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
            out.push_back(static_cast<uint8_t>(std::lround(x * 255.0)));
        }
    return out;
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ppm: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_ppm(bytes);
}

void write_ppm(const std::string& path, const Tensor& image) {
    std::vector<uint8_t> bytes = serialize_ppm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("ppm: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("ppm: write failed for " + path);
}

}  // namespace cvq
