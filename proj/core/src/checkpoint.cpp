#include "cvq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "cvq/config.hpp"

namespace cvq {

namespace {

constexpr uint8_t kVersion = 1;
const char kMagic[4] = {'C', 'V', 'Q', 'C'};

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xff));
    b.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<uint8_t>& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

void put_bytes(std::vector<uint8_t>& b, const std::string& s) {
    b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (b.size() - pos < n) throw std::runtime_error("checkpoint: truncated");
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(size_t n) {
        need(n);
        std::string s(b.begin() + static_cast<ptrdiff_t>(pos),
                      b.begin() + static_cast<ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<uint8_t> serialize_checkpoint(Model& m, int epoch, const Rng& rng) {
    if (epoch < 0) throw std::invalid_argument("checkpoint: epoch must be nonnegative");
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u8(out, kVersion);
    std::string cfg = serialize_settings(m.settings);
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    put_bytes(out, cfg);
    put_u32(out, static_cast<uint32_t>(epoch));

    auto params = model_params(m);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        if (name.size() >= 65536) throw std::logic_error("checkpoint: parameter name too long");
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_bytes(out, name);
        const Shape& shape = t->shape();
        put_u8(out, static_cast<uint8_t>(shape.size()));
        for (int d : shape) put_u32(out, static_cast<uint32_t>(d));
        for (double v : t->values()) put_f64(out, v);
    }

    std::string rs = rng.serialize();
    put_u32(out, static_cast<uint32_t>(rs.size()));
    put_bytes(out, rs);
    return out;
}

CheckpointData parse_checkpoint(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4)) throw std::runtime_error("checkpoint: bad magic");
    if (r.u8() != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    std::string cfg = r.str(r.u32());
    Settings settings = parse_settings(cfg);
    int epoch = static_cast<int>(r.u32());

    Rng init(settings.seed);
    CheckpointData data{make_model(settings, init), epoch, Rng(0)};

    std::map<std::string, Tensor*> registry;
    for (auto& [name, t] : model_params(data.model)) registry.emplace(name, t);

    uint32_t count = r.u32();
    if (count != registry.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    std::map<std::string, bool> seen;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u16());
        auto it = registry.find(name);
        if (it == registry.end())
            throw std::runtime_error("checkpoint: unknown parameter " + name);
        if (seen[name]) throw std::runtime_error("checkpoint: duplicate parameter " + name);
        seen[name] = true;
        Shape shape(r.u8());
        for (int& d : shape) d = static_cast<int>(r.u32());
        if (shape != it->second->shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        std::vector<double>& dst = it->second->mutable_values();
        for (double& v : dst) v = r.f64();
    }

    data.rng.deserialize(r.str(r.u32()));
    if (r.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
    return data;
}

void save_checkpoint(const std::string& path, Model& m, int epoch, const Rng& rng) {
    std::vector<uint8_t> bytes = serialize_checkpoint(m, epoch, rng);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

}  // namespace cvq
