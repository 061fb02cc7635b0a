#include "cvq/pixel_shuffle.hpp"

#include <stdexcept>

namespace cvq {

Tensor inverse_pixel_shuffle(const Tensor& x, int d) {
    if (x.rank() != 3) throw std::invalid_argument("inverse_pixel_shuffle: input must be [C,H,W]");
    if (d < 1) throw std::invalid_argument("inverse_pixel_shuffle: factor must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % d != 0 || w % d != 0) {
        throw std::invalid_argument("inverse_pixel_shuffle: spatial dims not divisible by " +
                                    std::to_string(d));
    }
    const int oh = h / d, ow = w / d, oc = c * d * d;
    std::vector<int64_t> map(static_cast<size_t>(oc) * oh * ow);
    int64_t k = 0;
    for (int cc = 0; cc < c; ++cc)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx)
                        map[k++] = (static_cast<int64_t>(cc) * h + (d * y + i)) * w + (d * xx + j);
    return apply_index_map(x, {oc, oh, ow}, std::move(map), "inverse_pixel_shuffle");
}

Tensor pixel_shuffle(const Tensor& x, int d) {
    if (x.rank() != 3) throw std::invalid_argument("pixel_shuffle: input must be [C,h,w]");
    if (d < 1) throw std::invalid_argument("pixel_shuffle: factor must be >= 1");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (c % (d * d) != 0) {
        throw std::invalid_argument("pixel_shuffle: channels not divisible by " + std::to_string(d * d));
    }
    const int oc = c / (d * d), oh = h * d, ow = w * d;
    std::vector<int64_t> map(static_cast<size_t>(oc) * oh * ow);
    int64_t k = 0;
    for (int cc = 0; cc < oc; ++cc)
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                int i = y % d, j = xx % d;
                int src_c = cc * d * d + i * d + j;
                map[k++] = (static_cast<int64_t>(src_c) * h + y / d) * w + xx / d;
            }
    return apply_index_map(x, {oc, oh, ow}, std::move(map), "pixel_shuffle");
}

}  // namespace cvq
