#include "cvq/init.hpp"

#include <cmath>
#include <stdexcept>

namespace cvq {

namespace {

Tensor uniform_tensor(const Shape& shape, double bound, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_vector(shape, std::move(v), /*requires_grad=*/true);
}

}  // namespace

Tensor kaiming_conv2d_weight(int out_channels, int in_channels, int kh, int kw, Rng& rng) {
    if (out_channels < 1 || in_channels < 1 || kh < 1 || kw < 1)
        throw std::invalid_argument("kaiming_conv2d_weight: dimensions must be positive");
    double fan_in = static_cast<double>(in_channels) * kh * kw;
    return uniform_tensor({out_channels, in_channels, kh, kw}, std::sqrt(6.0 / fan_in), rng);
}

Tensor kaiming_conv3d_weight(int out_channels, int in_channels, int k, Rng& rng) {
    if (out_channels < 1 || in_channels < 1 || k < 1)
        throw std::invalid_argument("kaiming_conv3d_weight: dimensions must be positive");
    double fan_in = static_cast<double>(in_channels) * k * k * k;
    return uniform_tensor({out_channels, in_channels, k, k, k}, std::sqrt(6.0 / fan_in), rng);
}

Tensor zero_bias(int channels) {
    if (channels < 1) throw std::invalid_argument("zero_bias: channels must be positive");
    return Tensor::zeros({channels}, /*requires_grad=*/true);
}

}  // namespace cvq
