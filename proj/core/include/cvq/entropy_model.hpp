#pragma once

// Context entropy model over a group's quantized symbols. The [C,h,w] symbol
// grid is treated as a 3D volume (channel = depth) and run through masked 3D
// convolutions: a type-A layer (center excluded) followed by residual type-B
// layers (center included), so the PMF predicted at a voxel depends only on
// symbols strictly earlier in (channel, row, column) raster order. That makes
// the model usable on the decoder side, where later symbols are still unknown.
//
// Symbols enter as centered reals, symbol/(levels-1) - 0.5 (a one-hot variant
// is available for ablation). The output layer is zero-initialized so an
// untrained model predicts the uniform PMF. PMFs are floored at 1e-9 and
// renormalized so an observed symbol can never have zero probability.

#include <cstdint>
#include <vector>

#include "cvq/arithmetic_coder.hpp"
#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace cvq {

struct ContextModelConfig {
    int filter_size = 3;     // odd
    int hidden_channels = 64;
    int residual_layers = 1;
    int levels = 0;          // symbol alphabet size Q
    bool one_hot = false;    // ablation: one-hot input planes instead of centered reals
};

void validate_context_config(const ContextModelConfig& cfg);

struct ContextModel {
    ContextModelConfig cfg;
    Tensor in_w, in_b;    // type-A masked conv, 1 (or Q) -> hidden
    std::vector<Tensor> res_w1, res_b1, res_w2, res_b2;  // type-B conv pairs with skip
    Tensor out_w, out_b;  // 1x1x1 pointwise to Q logits; zero-initialized
};

ContextModel make_context_model(const ContextModelConfig& cfg, Rng& rng);

// Named parameter access in a fixed order (checkpointing, optimizers).
std::vector<std::pair<std::string, Tensor*>> context_model_params(ContextModel& m,
                                                                  const std::string& prefix);

// Leaf tensor holding the embedded symbols: [1,C,h,w] centered reals, or
// [Q,C,h,w] one-hot planes. Throws on out-of-range symbols.
Tensor embed_symbols(const std::vector<int>& symbols, int channels, int height, int width,
                     const ContextModelConfig& cfg);

// Full network on an embedded grid ([C,h,w] tensors are treated as [1,C,h,w]).
// Returns the floored per-voxel PMF [Q,C,h,w]. Differentiable.
Tensor context_forward(const Tensor& embedded, const ContextModel& m);

// Convenience: embed + forward from raw symbols.
Tensor predict_pmf(const std::vector<int>& symbols, int channels, int height, int width,
                   const ContextModel& m);

// -sum_v log2 pmf[symbol_v] in bits. Differentiable through the pmf.
Tensor entropy_loss_bits(const Tensor& pmf, const std::vector<int>& symbols);

// PMF of a single voxel (raster index) given a partial grid: only positions
// strictly before `index` are read. Evaluates the network on the voxel's
// receptive-field window, which reproduces the batched forward bit for bit.
std::vector<double> pmf_at_voxel(const std::vector<int>& grid, int channels, int height,
                                 int width, int64_t index, const ContextModel& m);

// Stateful causal provider for the arithmetic coder: call index i may read
// prefix symbols [0, i). One provider instance per payload, used in order.
PmfProvider context_pmf_provider(const ContextModel& m, int channels, int height, int width);

}  // namespace cvq
