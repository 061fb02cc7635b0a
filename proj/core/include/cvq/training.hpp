#pragma once

// Joint training of the codec, quantizers, and context models with Adam and
// per-component learning rates, plus the channel-influence pruning
// experiment. Runs are bit-for-bit reproducible for a fixed seed: data order,
// initialization, and updates are all driven by one generator.

#include <map>
#include <string>
#include <vector>

#include "cvq/model.hpp"
#include "cvq/pipeline.hpp"
#include "cvq/rng.hpp"

namespace cvq {

struct AdamState {
    std::vector<double> m, v;
    long long t = 0;
};

// One standard Adam update (beta1 0.9, beta2 0.999, eps 1e-8) reading the
// parameter's accumulated gradient; does not clear it.
void adam_step(Tensor& param, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Base learning rate scaled down 5x at each passed milestone (1-based epochs;
// the drop applies from the milestone epoch onward).
double scheduled_lr(double base, const std::vector<int>& milestones, int epoch);

// Joint rate-distortion objective: alpha * (-MS-SSIM) + mean over groups of the
// context-model bits + beta * mean over groups of the mixture NLL.
struct LossBreakdown {
    Tensor total;          // scalar graph node
    double dis = 0.0;      // -MS-SSIM
    double ent_bits = 0.0; // sum over groups of coded-bit estimates
    double gmm_nll = 0.0;  // sum over groups
    double ms_ssim = 0.0;
    double est_bpp = 0.0;  // ent_bits / pixel count
};
LossBreakdown total_loss(const Tensor& image, Model& m, const Reconstruction& r);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0, dis = 0.0, ent_bits = 0.0, gmm_nll = 0.0, ms_ssim = 0.0, est_bpp = 0.0;
};

std::string train_log_csv(const std::vector<EpochLog>& log);

// Full training loop over `images` (mutates the model in place); `rng` drives
// the shuffle order and must be the generator that initialized the model.
std::vector<EpochLog> train(Model& m, const std::vector<Tensor>& images, Rng& rng);

// Reconstruction damage from zeroing one quantized-latent channel at a time:
// baseline-minus-pruned PSNR and MS-SSIM (dB), averaged over `images`.
struct InfluenceRow {
    int channel = 0;
    double psnr_loss_db = 0.0;
    double msssim_loss_db = 0.0;
};
std::vector<InfluenceRow> channel_influence_experiment(Model& m,
                                                       const std::vector<Tensor>& images);
std::string influence_csv(const std::vector<InfluenceRow>& rows);

}  // namespace cvq
