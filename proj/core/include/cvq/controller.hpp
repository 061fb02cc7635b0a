#pragma once

// Channel grouping controller: scores channel importance, sorts channels
// ascending by importance, partitions them into groups that each get their
// own quantization level budget, and merges them back with the inverse
// permutation. Also evaluates the entropy upper bound that motivates the
// grouping (a ratio-weighted log2 of the per-group levels versus a single
// uniform level count).

#include <string>
#include <vector>

#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace cvq {

// How channel importance is obtained: a learned squeeze-excite scorer (se),
// per-channel reconstruction-error probing (re), or the fixed ascending ramp
// (predefined).
enum class ImportanceMode { Se, Re, Predefined };

ImportanceMode importance_mode_from_string(const std::string& s);
std::string to_string(ImportanceMode mode);

struct GroupSpec {
    std::vector<double> ratios;  // per-group channel fraction; positive, sums to 1
    std::vector<int> levels;     // per-group quantization levels; nondecreasing
    int groups() const { return static_cast<int>(ratios.size()); }
};

// Throws std::invalid_argument on empty/mismatched vectors, non-positive
// ratios, ratio sum off by more than 1e-9, non-positive or decreasing levels.
void validate_group_spec(const GroupSpec& spec);

// Deterministic partition of `channels` into spec.groups() sizes:
// floor(channels * r_g), with the leftover channels handed out one per group
// starting from the last (highest-importance) group and walking backward.
// Throws if any resulting group would be empty.
std::vector<int> group_sizes(const GroupSpec& spec, int channels);

struct ChannelImportance {
    std::vector<double> weights;   // per original channel
    std::vector<int> permutation;  // permutation[k] = original index of the k-th
                                   // channel in ascending-weight order (stable)
    ImportanceMode mode = ImportanceMode::Predefined;
};

// Sorts ascending (stable: ties keep original channel order).
ChannelImportance importance_from_weights(std::vector<double> weights, ImportanceMode mode);

// w_c = c using 1-based channel positions; the permutation is the identity.
ChannelImportance importance_predefined(int channels);

// Squeeze-excite scorer: global average pool, 1x1 conv down to
// channels/reduction, relu, 1x1 conv back up, sigmoid.
struct SeScorer {
    Tensor reduce_w, reduce_b;  // [C/red, C, 1, 1], [C/red]
    Tensor expand_w, expand_b;  // [C, C/red, 1, 1], [C]
};

SeScorer make_se_scorer(int channels, int reduction, Rng& rng);

// [C,h,w] -> [C]; every score lies in (0,1).
Tensor se_scores(const Tensor& z, const SeScorer& scorer);

// z_batch [M,C,h,w]; weights are the per-channel scores averaged over the
// batch. Throws on wrong rank or an empty batch.
ChannelImportance importance_se(const Tensor& z_batch, const SeScorer& scorer);

// out[k] = z[order[k]] along the channel axis of a [C,h,w] tensor; `order`
// may select any subset/ordering of valid channel indices.
Tensor gather_channels(const Tensor& z, const std::vector<int>& order);

// Throws unless `perm` is a bijection on [0, perm.size()).
std::vector<int> inverse_permutation(const std::vector<int>& perm);

struct SplitResult {
    std::vector<Tensor> groups;
    std::vector<int> permutation;
};

// Reorders channels ascending by importance and partitions them into
// group_sizes(spec, C) consecutive blocks: lowest-importance channels land in
// the first group (fewest levels), highest in the last.
SplitResult split_channels(const Tensor& z, const ChannelImportance& imp, const GroupSpec& spec);

// Concatenates the groups and applies the inverse permutation; exact inverse
// of split_channels for any valid permutation.
Tensor merge_channels(const std::vector<Tensor>& groups, const std::vector<int>& permutation);

struct EntropyBound {
    double grouped_bits = 0.0;        // H*W*C * sum_g r_g * log2(q_g)
    double single_bits = 0.0;         // H*W*C * log2(Q)
    double grouped_per_symbol = 0.0;  // sum_g r_g * log2(q_g)
    double single_per_symbol = 0.0;   // log2(Q)
    bool satisfied = false;           // strict: grouped_per_symbol < single_per_symbol
};

EntropyBound entropy_upper_bound(const GroupSpec& spec, int channels, int height, int width,
                                 int single_levels);

}  // namespace cvq
