#include "cvq/entropy_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cvq/init.hpp"

namespace cvq {

namespace {

constexpr double kPmfFloor = 1e-9;

int receptive_radius(const ContextModelConfig& cfg) {
    // every masked conv with filter size k widens the dependency cone by k/2;
    // the pointwise output layer adds nothing
    return (cfg.filter_size / 2) * (1 + 2 * cfg.residual_layers);
}

}  // namespace

void validate_context_config(const ContextModelConfig& cfg) {
    if (cfg.filter_size < 1 || cfg.filter_size % 2 == 0)
        throw std::invalid_argument("context model: filter size must be odd and positive");
    if (cfg.hidden_channels < 1)
        throw std::invalid_argument("context model: hidden channels must be positive");
    if (cfg.residual_layers < 0)
        throw std::invalid_argument("context model: residual layer count must be >= 0");
    if (cfg.levels < 1) throw std::invalid_argument("context model: levels must be positive");
}

ContextModel make_context_model(const ContextModelConfig& cfg, Rng& rng) {
    validate_context_config(cfg);
    ContextModel m;
    m.cfg = cfg;
    int in_ch = cfg.one_hot ? cfg.levels : 1;
    int hid = cfg.hidden_channels;
    m.in_w = kaiming_conv3d_weight(hid, in_ch, cfg.filter_size, rng);
    m.in_b = zero_bias(hid);
    for (int l = 0; l < cfg.residual_layers; ++l) {
        m.res_w1.push_back(kaiming_conv3d_weight(hid, hid, cfg.filter_size, rng));
        m.res_b1.push_back(zero_bias(hid));
        m.res_w2.push_back(kaiming_conv3d_weight(hid, hid, cfg.filter_size, rng));
        m.res_b2.push_back(zero_bias(hid));
    }
    // zero logits -> uniform PMF from an untrained model
    m.out_w = Tensor::zeros({cfg.levels, hid, 1, 1, 1}, /*requires_grad=*/true);
    m.out_b = Tensor::zeros({cfg.levels}, /*requires_grad=*/true);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> context_model_params(ContextModel& m,
                                                                  const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back(prefix + ".in_w", &m.in_w);
    out.emplace_back(prefix + ".in_b", &m.in_b);
    for (size_t l = 0; l < m.res_w1.size(); ++l) {
        std::string base = prefix + ".res" + std::to_string(l);
        out.emplace_back(base + ".w1", &m.res_w1[l]);
        out.emplace_back(base + ".b1", &m.res_b1[l]);
        out.emplace_back(base + ".w2", &m.res_w2[l]);
        out.emplace_back(base + ".b2", &m.res_b2[l]);
    }
    out.emplace_back(prefix + ".out_w", &m.out_w);
    out.emplace_back(prefix + ".out_b", &m.out_b);
    return out;
}

Tensor embed_symbols(const std::vector<int>& symbols, int channels, int height, int width,
                     const ContextModelConfig& cfg) {
    int64_t n = static_cast<int64_t>(channels) * height * width;
    if (static_cast<int64_t>(symbols.size()) != n)
        throw std::invalid_argument("embed_symbols: symbol count does not match the grid");
    for (int s : symbols)
        if (s < 0 || s >= cfg.levels)
            throw std::invalid_argument("embed_symbols: symbol out of range");
    if (cfg.one_hot) {
        std::vector<double> v(static_cast<size_t>(cfg.levels) * n, 0.0);
        for (int64_t i = 0; i < n; ++i)
            v[static_cast<size_t>(symbols[static_cast<size_t>(i)]) * n + i] = 1.0;
        return Tensor::from_vector({cfg.levels, channels, height, width}, std::move(v));
    }
    std::vector<double> v(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        v[static_cast<size_t>(i)] =
            cfg.levels > 1
                ? static_cast<double>(symbols[static_cast<size_t>(i)]) / (cfg.levels - 1) - 0.5
                : -0.5;
    return Tensor::from_vector({1, channels, height, width}, std::move(v));
}

Tensor context_forward(const Tensor& embedded, const ContextModel& m) {
    Tensor x = embedded;
    if (x.rank() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
    if (x.rank() != 4)
        throw std::invalid_argument("context_forward: expected a [Cin,C,h,w] volume");
    int expected_in = m.cfg.one_hot ? m.cfg.levels : 1;
    if (x.dim(0) != expected_in)
        throw std::invalid_argument("context_forward: input planes do not match the config");
    Tensor a = relu(masked_conv3d(x, m.in_w, m.in_b, MaskType::A));
    for (size_t l = 0; l < m.res_w1.size(); ++l) {
        Tensor t = masked_conv3d(a, m.res_w1[l], m.res_b1[l], MaskType::B);
        t = masked_conv3d(relu(t), m.res_w2[l], m.res_b2[l], MaskType::B);
        a = add(a, t);
    }
    Tensor logits = masked_conv3d(relu(a), m.out_w, m.out_b, MaskType::B);
    Tensor pmf = softmax(logits, 0);
    // floor + exact renormalization keeps every column summing to 1
    return mul_const(add_const(pmf, kPmfFloor), 1.0 / (1.0 + m.cfg.levels * kPmfFloor));
}

Tensor predict_pmf(const std::vector<int>& symbols, int channels, int height, int width,
                   const ContextModel& m) {
    return context_forward(embed_symbols(symbols, channels, height, width, m.cfg), m);
}

Tensor entropy_loss_bits(const Tensor& pmf, const std::vector<int>& symbols) {
    constexpr double kInvLn2 = 1.4426950408889634074;  // 1/ln 2
    return mul_const(sum_all(log(gather_symbols(pmf, symbols))), -kInvLn2);
}

std::vector<double> pmf_at_voxel(const std::vector<int>& grid, int channels, int height,
                                 int width, int64_t index, const ContextModel& m) {
    int64_t n = static_cast<int64_t>(channels) * height * width;
    if (static_cast<int64_t>(grid.size()) != n)
        throw std::invalid_argument("pmf_at_voxel: grid size mismatch");
    if (index < 0 || index >= n) throw std::invalid_argument("pmf_at_voxel: index out of range");
    int cz = static_cast<int>(index / (static_cast<int64_t>(height) * width));
    int rem = static_cast<int>(index % (static_cast<int64_t>(height) * width));
    int cy = rem / width;
    int cx = rem % width;
    int r = receptive_radius(m.cfg);
    // the dependency cone never looks at deeper channels, so the window can
    // stop at the current one
    int z0 = std::max(0, cz - r), z1 = cz;
    int y0 = std::max(0, cy - r), y1 = std::min(height - 1, cy + r);
    int x0 = std::max(0, cx - r), x1 = std::min(width - 1, cx + r);
    int wc = z1 - z0 + 1, wh = y1 - y0 + 1, ww = x1 - x0 + 1;
    std::vector<int> crop(static_cast<size_t>(wc) * wh * ww, 0);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                int64_t src = (static_cast<int64_t>(z) * height + y) * width + x;
                // later voxels are masked out anyway; copying them is harmless
                // but keep the window honestly causal
                int v = src < index ? grid[static_cast<size_t>(src)] : 0;
                crop[(static_cast<size_t>(z - z0) * wh + (y - y0)) * ww + (x - x0)] = v;
            }
    Tensor pmf = predict_pmf(crop, wc, wh, ww, m);
    const std::vector<double>& pv = pmf.values();
    int64_t plane = static_cast<int64_t>(wc) * wh * ww;
    int64_t center = (static_cast<int64_t>(cz - z0) * wh + (cy - y0)) * ww + (cx - x0);
    std::vector<double> out(static_cast<size_t>(m.cfg.levels));
    for (int q = 0; q < m.cfg.levels; ++q)
        out[static_cast<size_t>(q)] = pv[static_cast<size_t>(q * plane + center)];
    return out;
}

PmfProvider context_pmf_provider(const ContextModel& m, int channels, int height, int width) {
    auto grid = std::make_shared<std::vector<int>>(
        static_cast<size_t>(channels) * height * width, 0);
    const ContextModel* model = &m;  // must outlive the provider
    return [model, grid, channels, height, width](size_t index,
                                                  const std::vector<int>& prefix) {
        if (prefix.size() != index)
            throw std::invalid_argument("context provider: prefix length mismatch");
        if (index > 0) (*grid)[index - 1] = prefix[index - 1];
        return pmf_at_voxel(*grid, channels, height, width, static_cast<int64_t>(index),
                            *model);
    };
}

}  // namespace cvq
