#pragma once

// Flat key=value run configuration. One key per line, '#' starts a comment.
// Unknown keys and duplicate keys are errors; every key has a default, so an
// empty file is a valid configuration. serialize_settings emits a canonical
// form (fixed key order, round-trip-exact numbers) that is embedded verbatim
// in checkpoints.

#include <string>
#include <vector>

#include "cvq/codec_network.hpp"
#include "cvq/controller.hpp"
#include "cvq/entropy_model.hpp"

namespace cvq {

struct Settings {
    // codec network
    std::vector<int> stage_channels_enc = {32, 64, 128, 192};
    std::vector<int> stage_channels_dec = {192, 128, 64, 32};
    int blocks_per_stage = 6;
    int latent_channels = 32;
    int downsample_factor = 2;
    int se_reduction = 4;
    int kernel_size = 3;
    // variable quantization controller
    int groups = 3;
    std::vector<double> group_ratios = {0.25, 0.5, 0.25};
    std::vector<int> group_levels = {3, 5, 7};
    std::string importance_mode = "predefined";
    int re_validation_images = 8;
    // context entropy model
    int context_filter_size = 3;
    int context_hidden = 64;
    int context_residual_layers = 1;
    // training
    double alpha = 128.0;
    double beta = 0.001;
    double lr_encoder = 1e-4;
    double lr_quantizer = 1e-4;
    double lr_entropy = 5e-5;
    double lr_decoder = 1e-4;
    int epochs = 400;
    int batch_size = 32;
    std::vector<int> lr_milestones = {200, 300};
    unsigned long long seed = 1;
    // ablation flags
    bool quantizer_soft_forward = false;
    bool re_importance_delta = false;
    bool rate_grad_to_encoder = true;
    bool context_onehot = false;
};

Settings parse_settings(const std::string& text);
std::string serialize_settings(const Settings& s);
Settings load_settings_file(const std::string& path);
void validate_settings(const Settings& s);

// Views into the per-module configurations.
CodecConfig codec_config(const Settings& s);
GroupSpec group_spec(const Settings& s);
ContextModelConfig context_config(const Settings& s, int group_levels);

}  // namespace cvq
