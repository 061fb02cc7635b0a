#include "cvq/gmm_quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvq {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2

double inv_softplus(double y) {
    if (y <= 0.0) throw std::invalid_argument("gmm: sigma must exceed the floor");
    // solve softplus(x) = y
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

void check_levels(const GmmParams& g) {
    if (g.levels < 1) throw std::invalid_argument("gmm: levels must be >= 1");
    if (g.pi_logits.size() != g.levels || g.mu.size() != g.levels || g.sigma_raw.size() != g.levels) {
        throw std::invalid_argument("gmm: parameter vectors must hold `levels` elements");
    }
}

// Per-component log weight log(pi_q) + log N(z | mu_q, sigma_q^2).
std::vector<double> log_weights(double z, const GmmSnapshot& s) {
    std::vector<double> lw(s.mu.size());
    for (size_t q = 0; q < s.mu.size(); ++q) {
        double d = z - s.mu[q];
        lw[q] = std::log(s.pi[q]) - std::log(s.sigma[q]) - kHalfLog2Pi -
                d * d / (2.0 * s.sigma[q] * s.sigma[q]);
    }
    return lw;
}

}  // namespace

GmmParams make_gmm(int levels, double sigma_init, bool requires_grad) {
    if (levels < 1) throw std::invalid_argument("make_gmm: levels must be >= 1");
    std::vector<double> mu(levels, 0.0);
    if (levels > 1) {
        for (int q = 0; q < levels; ++q) mu[q] = -1.0 + 2.0 * q / (levels - 1);
    }
    GmmParams g;
    g.levels = levels;
    g.pi_logits = Tensor::zeros({levels}, requires_grad);
    g.mu = Tensor::from_vector({levels}, std::move(mu), requires_grad);
    g.sigma_raw = Tensor::full({levels}, inv_softplus(sigma_init - kSigmaFloor), requires_grad);
    return g;
}

void set_gmm_pi(GmmParams& g, const std::vector<double>& pi) {
    check_levels(g);
    if (static_cast<int>(pi.size()) != g.levels) throw std::invalid_argument("set_gmm_pi: size mismatch");
    auto& v = g.pi_logits.mutable_values();
    for (int q = 0; q < g.levels; ++q) {
        if (pi[q] <= 0.0) throw std::invalid_argument("set_gmm_pi: weights must be positive");
        v[q] = std::log(pi[q]);
    }
}

void set_gmm_mu(GmmParams& g, const std::vector<double>& mu) {
    check_levels(g);
    if (static_cast<int>(mu.size()) != g.levels) throw std::invalid_argument("set_gmm_mu: size mismatch");
    g.mu.mutable_values() = mu;
}

void set_gmm_sigma(GmmParams& g, const std::vector<double>& sigma) {
    check_levels(g);
    if (static_cast<int>(sigma.size()) != g.levels) throw std::invalid_argument("set_gmm_sigma: size mismatch");
    auto& v = g.sigma_raw.mutable_values();
    for (int q = 0; q < g.levels; ++q) v[q] = inv_softplus(sigma[q] - kSigmaFloor);
}

GmmSnapshot gmm_snapshot(const GmmParams& g) {
    check_levels(g);
    GmmSnapshot s;
    const auto& logits = g.pi_logits.values();
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    s.pi.resize(g.levels);
    for (int q = 0; q < g.levels; ++q) {
        s.pi[q] = std::exp(logits[q] - mx);
        denom += s.pi[q];
    }
    for (double& p : s.pi) p /= denom;
    s.mu = g.mu.values();
    s.sigma.resize(g.levels);
    const auto& raw = g.sigma_raw.values();
    for (int q = 0; q < g.levels; ++q) {
        double sp = raw[q] > 0.0 ? raw[q] + std::log1p(std::exp(-raw[q])) : std::log1p(std::exp(raw[q]));
        s.sigma[q] = sp + kSigmaFloor;
    }
    return s;
}

std::vector<double> responsibilities(double z, const GmmSnapshot& s) {
    std::vector<double> lw = log_weights(z, s);
    double mx = *std::max_element(lw.begin(), lw.end());
    double denom = 0.0;
    std::vector<double> r(lw.size());
    for (size_t q = 0; q < lw.size(); ++q) {
        r[q] = std::exp(lw[q] - mx);
        denom += r[q];
    }
    for (double& v : r) v /= denom;
    return r;
}

std::pair<double, int> quantize_hard(double z, const GmmSnapshot& s) {
    std::vector<double> lw = log_weights(z, s);
    int best = 0;
    for (size_t q = 1; q < lw.size(); ++q) {
        if (lw[q] > lw[best]) best = static_cast<int>(q);  // ties keep the lowest index
    }
    return {s.mu[best], best};
}

double quantize_soft_value(double z, const GmmSnapshot& s) {
    std::vector<double> r = responsibilities(z, s);
    double acc = 0.0;
    for (size_t q = 0; q < r.size(); ++q) acc += r[q] * s.mu[q];
    return acc;
}

double soft_quantizer_reference(double z, const std::vector<double>& centers, double temperature) {
    if (centers.empty()) throw std::invalid_argument("soft_quantizer_reference: no centers");
    std::vector<double> logits(centers.size());
    for (size_t j = 0; j < centers.size(); ++j) {
        double d = z - centers[j];
        logits[j] = -temperature * d * d;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    std::vector<double> w(centers.size());
    for (size_t j = 0; j < centers.size(); ++j) {
        w[j] = std::exp(logits[j] - mx);
        denom += w[j];
    }
    double acc = 0.0;
    for (size_t j = 0; j < centers.size(); ++j) acc += (w[j] / denom) * centers[j];
    return acc;
}

// ---------------------------------------------------------------------------
// graph builders

namespace {

struct MixturePieces {
    Tensor log_weight;               // [Q, n]
    std::vector<Tensor> mu_parts;    // Q x [1]
};

// Builds the [Q, n] matrix of log(pi_q) + log N(z_i | mu_q, sigma_q^2).
MixturePieces build_log_weights(const Tensor& z, const GmmParams& g) {
    check_levels(g);
    const int q = g.levels;
    const int64_t n = z.size();
    Tensor z_flat = reshape(z, {static_cast<int>(n)});

    Tensor log_pi = broadcast_add(g.pi_logits, neg(logsumexp(g.pi_logits, 0)));  // [Q]
    Tensor sigma = add_const(softplus(g.sigma_raw), kSigmaFloor);                // [Q]

    std::vector<int> ones(q, 1);
    auto log_pi_parts = split(log_pi, 0, ones);
    auto sigma_parts = split(sigma, 0, ones);
    MixturePieces pieces;
    pieces.mu_parts = split(g.mu, 0, ones);

    std::vector<Tensor> rows;
    rows.reserve(q);
    for (int j = 0; j < q; ++j) {
        Tensor diff = broadcast_add(z_flat, neg(pieces.mu_parts[j]));            // [n]
        Tensor quad = broadcast_mul(square(diff),
                                    pow_const(mul_const(square(sigma_parts[j]), 2.0), -1.0));
        Tensor coef = add_const(sub(log_pi_parts[j], log(sigma_parts[j])), -kHalfLog2Pi);  // [1]
        Tensor row = broadcast_add(neg(quad), coef);                             // [n]
        rows.push_back(reshape(row, {1, static_cast<int>(n)}));
    }
    pieces.log_weight = concat(rows, 0);  // [Q, n]
    return pieces;
}

Tensor soft_from_pieces(const MixturePieces& pieces, const Shape& out_shape) {
    const int q = pieces.log_weight.dim(0);
    const int n = pieces.log_weight.dim(1);
    Tensor resp = softmax(pieces.log_weight, 0);  // [Q, n]
    std::vector<int> ones(q, 1);
    auto resp_rows = split(resp, 0, ones);
    Tensor acc;
    for (int j = 0; j < q; ++j) {
        Tensor term = broadcast_mul(reshape(resp_rows[j], {n}), pieces.mu_parts[j]);
        acc = j == 0 ? term : add(acc, term);
    }
    return reshape(acc, out_shape);
}

Tensor soft_index_from_pieces(const MixturePieces& pieces) {
    const int q = pieces.log_weight.dim(0);
    const int n = pieces.log_weight.dim(1);
    Tensor resp = softmax(pieces.log_weight, 0);
    std::vector<int> ones(q, 1);
    auto resp_rows = split(resp, 0, ones);
    Tensor acc = reshape(mul_const(resp_rows[0], 0.0), {n});
    for (int j = 1; j < q; ++j) {
        acc = add(acc, reshape(mul_const(resp_rows[j], static_cast<double>(j)), {n}));
    }
    return acc;  // [n]
}

}  // namespace

Tensor quantize_soft(const Tensor& z, const GmmParams& g) {
    MixturePieces pieces = build_log_weights(z, g);
    return soft_from_pieces(pieces, z.shape());
}

QuantizeResult quantize_ste(const Tensor& z, const GmmParams& g, bool soft_forward) {
    MixturePieces pieces = build_log_weights(z, g);
    Tensor soft_values = soft_from_pieces(pieces, z.shape());

    GmmSnapshot snap = gmm_snapshot(g);
    const auto& zv = z.values();
    QuantizeResult result;
    result.symbols.resize(zv.size());
    std::vector<double> hard(zv.size());
    for (size_t i = 0; i < zv.size(); ++i) {
        auto [value, symbol] = quantize_hard(zv[i], snap);
        hard[i] = value;
        result.symbols[i] = symbol;
    }

    const double denom = g.levels > 1 ? static_cast<double>(g.levels - 1) : 1.0;
    Tensor soft_embed = add_const(mul_const(soft_index_from_pieces(pieces), 1.0 / denom), -0.5);
    soft_embed = reshape(soft_embed, z.shape());

    if (soft_forward) {
        result.values = soft_values;
        result.embedding = soft_embed;
    } else {
        std::vector<double> hard_embed(zv.size());
        for (size_t i = 0; i < zv.size(); ++i) {
            hard_embed[i] = static_cast<double>(result.symbols[i]) / denom - 0.5;
        }
        result.values = ste_override(soft_values, std::move(hard));
        result.embedding = ste_override(soft_embed, std::move(hard_embed));
    }
    return result;
}

Tensor gmm_nll(const Tensor& z, const GmmParams& g) {
    MixturePieces pieces = build_log_weights(z, g);
    return neg(sum_all(logsumexp(pieces.log_weight, 0)));
}

}  // namespace cvq
