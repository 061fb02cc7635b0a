#include "cvq/bitstream.hpp"

#include <bit>
#include <stdexcept>
#include <string>

#include "cvq/controller.hpp"

namespace cvq {

namespace {

constexpr uint8_t kVersion = 1;
const char kMagic[4] = {'C', 'V', 'Q', 'N'};

void put_u8(std::vector<uint8_t>& b, int v, const char* what) {
    if (v < 0 || v > 255) throw std::invalid_argument(std::string("bitstream: ") + what + " does not fit a byte");
    b.push_back(static_cast<uint8_t>(v));
}

void put_u16(std::vector<uint8_t>& b, int v, const char* what) {
    if (v < 0 || v > 65535)
        throw std::invalid_argument(std::string("bitstream: ") + what + " does not fit 16 bits");
    b.push_back(static_cast<uint8_t>(v >> 8));
    b.push_back(static_cast<uint8_t>(v & 0xff));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    b.push_back(static_cast<uint8_t>(v >> 24));
    b.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    b.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    b.push_back(static_cast<uint8_t>(v & 0xff));
}

void put_f32le(std::vector<uint8_t>& b, float v) {
    uint32_t bits = std::bit_cast<uint32_t>(v);
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (b.size() - pos < n) throw std::runtime_error("bitstream: truncated");
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    int u16() {
        need(2);
        int v = (b[pos] << 8) | b[pos + 1];
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | b[pos + i];
        pos += 4;
        return v;
    }
    float f32le() {
        need(4);
        uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
        pos += 4;
        return std::bit_cast<float>(bits);
    }
};

}  // namespace

void validate_bitstream(const Bitstream& bs) {
    size_t g = bs.group_levels.size();
    if (g < 1 || g > 255) throw std::invalid_argument("bitstream: group count out of range");
    if (bs.group_sizes.size() != g || bs.mu_tables.size() != g || bs.payloads.size() != g)
        throw std::invalid_argument("bitstream: per-group field counts disagree");
    if (bs.height < 1 || bs.height > 65535 || bs.width < 1 || bs.width > 65535)
        throw std::invalid_argument("bitstream: image size out of range");
    size_t c = bs.permutation.size();
    if (c < 1 || c > 255) throw std::invalid_argument("bitstream: channel count out of range");
    int total = 0;
    for (size_t i = 0; i < g; ++i) {
        if (bs.group_levels[i] < 1 || bs.group_levels[i] > 255)
            throw std::invalid_argument("bitstream: levels out of range");
        if (bs.group_sizes[i] < 1 || bs.group_sizes[i] > 255)
            throw std::invalid_argument("bitstream: group size out of range");
        if (bs.mu_tables[i].size() != static_cast<size_t>(bs.group_levels[i]))
            throw std::invalid_argument("bitstream: center table size disagrees with levels");
        total += bs.group_sizes[i];
    }
    if (total != static_cast<int>(c))
        throw std::invalid_argument("bitstream: group sizes do not sum to the channel count");
    inverse_permutation(bs.permutation);  // throws unless bijective
}

std::vector<uint8_t> serialize_bitstream(const Bitstream& bs) {
    validate_bitstream(bs);
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u16(out, bs.height, "height");
    put_u16(out, bs.width, "width");
    put_u8(out, static_cast<int>(bs.permutation.size()), "channel count");
    put_u8(out, static_cast<int>(bs.group_levels.size()), "group count");
    for (size_t i = 0; i < bs.group_levels.size(); ++i) {
        put_u8(out, bs.group_levels[i], "levels");
        put_u8(out, bs.group_sizes[i], "group size");
    }
    for (int p : bs.permutation) put_u8(out, p, "permutation entry");
    for (const auto& table : bs.mu_tables)
        for (float v : table) put_f32le(out, v);
    for (const auto& payload : bs.payloads) {
        put_u32(out, static_cast<uint32_t>(payload.size()));
        out.insert(out.end(), payload.begin(), payload.end());
    }
    return out;
}

Bitstream parse_bitstream(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    for (int i = 0; i < 4; ++i)
        if (bytes[i] != static_cast<uint8_t>(kMagic[i]))
            throw std::runtime_error("bitstream: bad magic");
    r.pos = 4;
    if (r.u8() != kVersion) throw std::runtime_error("bitstream: unsupported version");
    Bitstream bs;
    bs.height = r.u16();
    bs.width = r.u16();
    int c = r.u8();
    int g = r.u8();
    if (c < 1 || g < 1) throw std::runtime_error("bitstream: empty channel or group count");
    for (int i = 0; i < g; ++i) {
        bs.group_levels.push_back(r.u8());
        bs.group_sizes.push_back(r.u8());
    }
    for (int i = 0; i < c; ++i) bs.permutation.push_back(r.u8());
    for (int i = 0; i < g; ++i) {
        std::vector<float> table(static_cast<size_t>(bs.group_levels[static_cast<size_t>(i)]));
        for (float& v : table) v = r.f32le();
        bs.mu_tables.push_back(std::move(table));
    }
    for (int i = 0; i < g; ++i) {
        uint32_t len = r.u32();
        r.need(len);
        bs.payloads.emplace_back(bytes.begin() + static_cast<ptrdiff_t>(r.pos),
                                 bytes.begin() + static_cast<ptrdiff_t>(r.pos + len));
        r.pos += len;
    }
    if (r.pos != bytes.size()) throw std::runtime_error("bitstream: trailing bytes");
    try {
        validate_bitstream(bs);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(e.what());
    }
    return bs;
}

}  // namespace cvq
