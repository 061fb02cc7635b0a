#pragma once

// Scalar Gaussian-mixture quantizer shared by every channel of a group.
// Mixture weights live as raw logits (softmax keeps them on the simplex),
// scales as raw values mapped through softplus plus a floor so they stay
// positive. Quantization picks the component with the largest posterior
// responsibility; the soft path is the responsibility-weighted mean of the
// component centers. All log-density math runs in log space.

#include <utility>
#include <vector>

#include "cvq/tensor.hpp"

namespace cvq {

inline constexpr double kSigmaFloor = 1e-3;

struct GmmParams {
    int levels = 0;     // Q
    Tensor pi_logits;   // [Q]
    Tensor mu;          // [Q]
    Tensor sigma_raw;   // [Q]
};

// Centers evenly spaced over [-1, 1], uniform weights, sigma near sigma_init.
GmmParams make_gmm(int levels, double sigma_init = 0.3, bool requires_grad = true);

// Overwrite parameters with exact target values (tests, fixtures).
void set_gmm_pi(GmmParams& g, const std::vector<double>& pi);
void set_gmm_mu(GmmParams& g, const std::vector<double>& mu);
void set_gmm_sigma(GmmParams& g, const std::vector<double>& sigma);

// Plain-double view of the constrained parameters.
struct GmmSnapshot {
    std::vector<double> pi, mu, sigma;
};
GmmSnapshot gmm_snapshot(const GmmParams& g);

// Posterior responsibility of each component for observation z; sums to 1.
std::vector<double> responsibilities(double z, const GmmSnapshot& s);
// (center value, symbol index); ties resolve to the lowest index.
std::pair<double, int> quantize_hard(double z, const GmmSnapshot& s);
double quantize_soft_value(double z, const GmmSnapshot& s);
// Independent reference: softmax(-temperature * (z - centers)^2) weighted mean.
double soft_quantizer_reference(double z, const std::vector<double>& centers, double temperature);

// Graph builders ------------------------------------------------------------

// Responsibility-weighted mean of the centers, differentiable in z and all
// mixture parameters.
Tensor quantize_soft(const Tensor& z, const GmmParams& g);

struct QuantizeResult {
    Tensor values;             // hard centers forward, soft-path backward
    Tensor embedding;          // symbol/(Q-1) - 0.5 forward, soft index backward
    std::vector<int> symbols;  // raster-order hard assignments
};
// With soft_forward the straight-through override is skipped and the soft
// values/embedding are used directly (symbols are still the hard picks).
QuantizeResult quantize_ste(const Tensor& z, const GmmParams& g, bool soft_forward = false);

// Negative log-likelihood of z under the mixture, summed over elements
// (natural log).
Tensor gmm_nll(const Tensor& z, const GmmParams& g);

}  // namespace cvq
