#include "cvq/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cvq {

namespace {

constexpr double kDbCap = 99.0;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kWindow = 11;
constexpr double kLevelWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kStabilityFloor = 1e-6;

Tensor gaussian_kernel() {
    constexpr double sigma = 1.5;
    double g[kWindow];
    for (int i = 0; i < kWindow; ++i) {
        double d = i - (kWindow - 1) / 2.0;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    std::vector<double> taps(kWindow * kWindow);
    double total = 0.0;
    for (int y = 0; y < kWindow; ++y)
        for (int x = 0; x < kWindow; ++x) {
            taps[static_cast<size_t>(y * kWindow + x)] = g[y] * g[x];
            total += g[y] * g[x];
        }
    for (double& t : taps) t /= total;
    return Tensor::from_vector({1, 1, kWindow, kWindow}, std::move(taps));
}

// per-channel valid Gaussian filtering: [C,H,W] -> [C,H-10,W-10]
Tensor blur(const Tensor& x, const Tensor& kernel, const Tensor& zero_bias1) {
    int c = x.dim(0);
    if (c == 1) return conv2d(x, kernel, zero_bias1, 0);
    std::vector<Tensor> channels = split(x, 0, std::vector<int>(static_cast<size_t>(c), 1));
    std::vector<Tensor> blurred;
    blurred.reserve(channels.size());
    for (const Tensor& ch : channels) blurred.push_back(conv2d(ch, kernel, zero_bias1, 0));
    return concat(blurred, 0);
}

int level_count(int height, int width) {
    int m = std::min(height, width);
    if (m < 16) return 0;
    return std::min(5, static_cast<int>(std::floor(std::log2(m / 8.0))));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::vector<double>& av = a.values();
    const std::vector<double>& bv = b.values();
    double mse = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        mse += d * d;
    }
    mse /= static_cast<double>(av.size());
    if (mse <= 0.0) return kDbCap;
    return std::min(kDbCap, 10.0 * std::log10(1.0 / mse));
}

Tensor ms_ssim(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || a.shape() != b.shape())
        throw std::invalid_argument("ms_ssim: expected two [C,H,W] images of equal shape");
    int levels = level_count(a.dim(1), a.dim(2));
    if (levels < 1)
        throw std::invalid_argument("ms_ssim: image too small, need min(H,W) >= 16, got " +
                                    shape_str(a.shape()));
    double weight_sum = 0.0;
    for (int j = 0; j < levels; ++j) weight_sum += kLevelWeights[j];
    Tensor kernel = gaussian_kernel();
    Tensor zero_bias1 = Tensor::zeros({1});
    Tensor x = a, y = b;
    Tensor result;
    for (int j = 0; j < levels; ++j) {
        Tensor mu_x = blur(x, kernel, zero_bias1);
        Tensor mu_y = blur(y, kernel, zero_bias1);
        Tensor mu_xx = mul(mu_x, mu_x);
        Tensor mu_yy = mul(mu_y, mu_y);
        Tensor mu_xy = mul(mu_x, mu_y);
        Tensor var_x = sub(blur(mul(x, x), kernel, zero_bias1), mu_xx);
        Tensor var_y = sub(blur(mul(y, y), kernel, zero_bias1), mu_yy);
        Tensor cov = sub(blur(mul(x, y), kernel, zero_bias1), mu_xy);
        Tensor cs_map = div(add_const(mul_const(cov, 2.0), kC2),
                            add_const(add(var_x, var_y), kC2));
        Tensor term;
        if (j + 1 == levels) {
            Tensor l_map = div(add_const(mul_const(mu_xy, 2.0), kC1),
                               add_const(add(mu_xx, mu_yy), kC1));
            term = mean_all(mul(l_map, cs_map));
        } else {
            term = mean_all(cs_map);
        }
        Tensor factor =
            pow_const(clamp_min(term, kStabilityFloor), kLevelWeights[j] / weight_sum);
        result = j == 0 ? factor : mul(result, factor);
        if (j + 1 < levels) {
            x = avg_pool2(x);
            y = avg_pool2(y);
        }
    }
    return result;
}

double ms_ssim_value(const Tensor& a, const Tensor& b) { return ms_ssim(a, b).item(); }

double ms_ssim_db(double v) {
    if (!(v >= 0.0) || v > 1.0)
        throw std::invalid_argument("ms_ssim_db: value must lie in [0,1]");
    double rest = 1.0 - v;
    if (rest <= 0.0) return kDbCap;
    return std::min(kDbCap, -10.0 * std::log10(rest));
}

double bpp(size_t stream_bytes, int height, int width) {
    if (height < 1 || width < 1) throw std::invalid_argument("bpp: dimensions must be positive");
    return 8.0 * static_cast<double>(stream_bytes) /
           (static_cast<double>(height) * static_cast<double>(width));
}

}  // namespace cvq
