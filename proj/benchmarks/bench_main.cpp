#include <benchmark/benchmark.h>

#include <cmath>

#include "cvq/arithmetic_coder.hpp"
#include "cvq/config.hpp"
#include "cvq/entropy_model.hpp"
#include "cvq/metrics.hpp"
#include "cvq/model.hpp"
#include "cvq/pipeline.hpp"
#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace {

cvq::Tensor random_tensor(cvq::Rng& rng, const cvq::Shape& shape) {
    std::vector<double> v(cvq::shape_numel(shape));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return cvq::Tensor::from_vector(shape, std::move(v));
}

cvq::Tensor random_image(cvq::Rng& rng, int hw) {
    std::vector<double> v(static_cast<size_t>(3) * hw * hw);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    return cvq::Tensor::from_vector({3, hw, hw}, std::move(v));
}

void BM_conv2d_forward(benchmark::State& state) {
    cvq::Rng rng(1);
    int c = static_cast<int>(state.range(0));
    cvq::Tensor x = random_tensor(rng, {c, 32, 32});
    cvq::Tensor w = random_tensor(rng, {c, c, 3, 3});
    cvq::Tensor b = random_tensor(rng, {c});
    for (auto _ : state) {
        benchmark::DoNotOptimize(cvq::conv2d(x, w, b, 1));
    }
}
BENCHMARK(BM_conv2d_forward)->Arg(8)->Arg(32);

void BM_masked_conv3d_forward(benchmark::State& state) {
    cvq::Rng rng(2);
    int c = static_cast<int>(state.range(0));
    cvq::Tensor x = random_tensor(rng, {c, 8, 8, 8});
    cvq::Tensor w = random_tensor(rng, {c, c, 3, 3, 3});
    cvq::Tensor b = random_tensor(rng, {c});
    for (auto _ : state) {
        benchmark::DoNotOptimize(cvq::masked_conv3d(x, w, b, cvq::MaskType::B));
    }
}
BENCHMARK(BM_masked_conv3d_forward)->Arg(4)->Arg(8);

void BM_ms_ssim(benchmark::State& state) {
    cvq::Rng rng(3);
    int hw = static_cast<int>(state.range(0));
    cvq::Tensor a = random_image(rng, hw);
    cvq::Tensor b = random_image(rng, hw);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cvq::ms_ssim_value(a, b));
    }
}
BENCHMARK(BM_ms_ssim)->Arg(32)->Arg(64);

// Coder throughput with a fixed skewed PMF, no model in the loop.
void BM_arithmetic_coder(benchmark::State& state) {
    cvq::Rng rng(4);
    size_t n = static_cast<size_t>(state.range(0));
    std::vector<int> symbols;
    for (size_t i = 0; i < n; ++i) {
        int r = rng.uniform_int(10);
        symbols.push_back(r < 6 ? 2 : r < 8 ? 1 : r - 6);
    }
    std::vector<double> pmf{0.1, 0.2, 0.6, 0.05, 0.05};
    cvq::PmfProvider provider = [&](size_t, const std::vector<int>&) { return pmf; };
    for (auto _ : state) {
        std::vector<uint8_t> bytes = cvq::encode_symbols(symbols, provider);
        benchmark::DoNotOptimize(cvq::decode_symbols(bytes, n, provider));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                            static_cast<int64_t>(n) * 2);
}
BENCHMARK(BM_arithmetic_coder)->Arg(1024)->Arg(8192);

// Sequential per-voxel PMF prediction, the decoder-side bottleneck.
void BM_context_pmf_sequence(benchmark::State& state) {
    cvq::Rng rng(5);
    cvq::ContextModelConfig cfg;
    cfg.levels = 5;
    cfg.hidden_channels = 8;
    cvq::ContextModel m = cvq::make_context_model(cfg, rng);
    const int c = 4, h = 4, w = 4;
    std::vector<int> grid;
    for (int i = 0; i < c * h * w; ++i) grid.push_back(rng.uniform_int(cfg.levels));
    for (auto _ : state) {
        for (int64_t i = 0; i < c * h * w; ++i)
            benchmark::DoNotOptimize(cvq::pmf_at_voxel(grid, c, h, w, i, m));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * c * h * w);
}
BENCHMARK(BM_context_pmf_sequence);

cvq::Settings bench_settings() {
    return cvq::parse_settings(
        "stage_channels_enc=4,4,4,4\n"
        "stage_channels_dec=4,4,4,4\n"
        "blocks_per_stage=1\n"
        "latent_channels=8\n"
        "se_reduction=2\n"
        "context_hidden=4\n"
        "seed=17\n");
}

void BM_compress_image(benchmark::State& state) {
    cvq::Settings s = bench_settings();
    cvq::Rng rng(s.seed);
    cvq::Model m = cvq::make_model(s, rng);
    cvq::Rng data_rng(6);
    cvq::Tensor image = random_image(data_rng, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cvq::compress_image(image, m));
    }
}
BENCHMARK(BM_compress_image)->Arg(32)->Arg(64);

void BM_decompress_stream(benchmark::State& state) {
    cvq::Settings s = bench_settings();
    cvq::Rng rng(s.seed);
    cvq::Model m = cvq::make_model(s, rng);
    cvq::Rng data_rng(7);
    cvq::Tensor image = random_image(data_rng, static_cast<int>(state.range(0)));
    cvq::Bitstream stream = cvq::compress_image(image, m).stream;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cvq::decompress_stream(stream, m));
    }
}
BENCHMARK(BM_decompress_stream)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
