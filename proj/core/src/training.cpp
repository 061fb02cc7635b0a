#include "cvq/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "cvq/metrics.hpp"

namespace cvq {

namespace {

Tensor detach(const Tensor& t) { return Tensor::from_vector(t.shape(), t.values()); }

std::string fmt(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

}  // namespace

void adam_step(Tensor& param, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    Tensor grad = param.grad();
    const std::vector<double>& g = grad.values();
    std::vector<double>& p = param.mutable_values();
    if (state.m.empty()) {
        state.m.assign(p.size(), 0.0);
        state.v.assign(p.size(), 0.0);
    }
    if (state.m.size() != p.size())
        throw std::invalid_argument("adam_step: state size does not match the parameter");
    ++state.t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < p.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
        double mhat = state.m[i] / c1;
        double vhat = state.v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double scheduled_lr(double base, const std::vector<int>& milestones, int epoch) {
    double lr = base;
    for (int m : milestones)
        if (epoch >= m) lr /= 5.0;
    return lr;
}

LossBreakdown total_loss(const Tensor& image, Model& m, const Reconstruction& r) {
    int groups = m.settings.groups;
    if (static_cast<int>(r.quant.size()) != groups)
        throw std::invalid_argument("total_loss: group count mismatch");

    Tensor similarity = ms_ssim(image, r.recon);
    Tensor dis = neg(similarity);

    Tensor ent_sum, nll_sum;
    int h = r.z.dim(1), w = r.z.dim(2);
    for (int g = 0; g < groups; ++g) {
        size_t gi = static_cast<size_t>(g);
        const ContextModel& ctx = m.ctx[gi];
        int cg = r.split.groups[gi].dim(0);
        Tensor embedded = (m.settings.rate_grad_to_encoder && !ctx.cfg.one_hot)
                              ? r.quant[gi].embedding
                              : embed_symbols(r.quant[gi].symbols, cg, h, w, ctx.cfg);
        Tensor pmf = context_forward(embedded, ctx);
        Tensor bits = entropy_loss_bits(pmf, r.quant[gi].symbols);
        Tensor nll = gmm_nll(r.split.groups[gi], m.gmm[gi]);
        ent_sum = g == 0 ? bits : add(ent_sum, bits);
        nll_sum = g == 0 ? nll : add(nll_sum, nll);
    }

    double inv_g = 1.0 / static_cast<double>(groups);
    LossBreakdown out;
    out.total = add(mul_const(dis, m.settings.alpha),
                    add(mul_const(ent_sum, inv_g), mul_const(nll_sum, m.settings.beta * inv_g)));
    out.ms_ssim = similarity.item();
    out.dis = -out.ms_ssim;
    out.ent_bits = ent_sum.item();
    out.gmm_nll = nll_sum.item();
    out.est_bpp = out.ent_bits / (static_cast<double>(image.dim(1)) * image.dim(2));
    return out;
}

std::string train_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,loss,dis,ent_bits,gmm_nll,ms_ssim,est_bpp\n";
    for (const EpochLog& e : log) {
        out += std::to_string(e.epoch) + "," + fmt(e.loss) + "," + fmt(e.dis) + "," +
               fmt(e.ent_bits) + "," + fmt(e.gmm_nll) + "," + fmt(e.ms_ssim) + "," +
               fmt(e.est_bpp) + "\n";
    }
    return out;
}

std::vector<EpochLog> train(Model& m, const std::vector<Tensor>& images, Rng& rng) {
    if (images.empty()) throw std::invalid_argument("train: empty dataset");
    int divisor = spatial_divisor(codec_config(m.settings));
    for (const Tensor& img : images)
        if (img.rank() != 3 || img.dim(0) != 3 || img.dim(1) % divisor != 0 ||
            img.dim(2) % divisor != 0)
            throw std::invalid_argument("train: images must be [3,H,W] with H,W divisible by " +
                                        std::to_string(divisor));

    auto params = model_params(m);
    std::map<std::string, AdamState> states;
    ImportanceMode mode = importance_mode_from_string(m.settings.importance_mode);

    std::vector<EpochLog> log;
    int n = static_cast<int>(images.size());
    for (int epoch = 1; epoch <= m.settings.epochs; ++epoch) {
        ChannelImportance fixed;
        const ChannelImportance* imp = nullptr;
        if (mode == ImportanceMode::Predefined) {
            fixed = importance_predefined(m.settings.latent_channels);
            imp = &fixed;
        } else if (mode == ImportanceMode::Re) {
            int k = std::min(n, m.settings.re_validation_images);
            std::vector<Tensor> validation(images.begin(), images.begin() + k);
            fixed = importance_re(validation, m, m.settings.re_importance_delta);
            imp = &fixed;
        }  // squeeze-excite scores each image's own latent inside reconstruct

        std::vector<int> order(images.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        rng.shuffle(order);

        EpochLog e;
        e.epoch = epoch;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(m.settings.batch_size)) {
            size_t stop = std::min(order.size(), start + static_cast<size_t>(m.settings.batch_size));
            Tensor batch_sum;
            for (size_t i = start; i < stop; ++i) {
                const Tensor& img = images[static_cast<size_t>(order[i])];
                Reconstruction r = reconstruct(img, m, imp);
                LossBreakdown lb = total_loss(img, m, r);
                batch_sum = i == start ? lb.total : add(batch_sum, lb.total);
                e.loss += lb.total.item() / n;
                e.dis += lb.dis / n;
                e.ent_bits += lb.ent_bits / n;
                e.gmm_nll += lb.gmm_nll / n;
                e.ms_ssim += lb.ms_ssim / n;
                e.est_bpp += lb.est_bpp / n;
            }
            backward(mul_const(batch_sum, 1.0 / static_cast<double>(stop - start)));
            for (auto& [name, t] : params) {
                double lr = scheduled_lr(component_lr(m.settings, component_of(name)),
                                         m.settings.lr_milestones, epoch);
                adam_step(*t, states[name], lr);
                t->zero_grad();
            }
        }
        log.push_back(e);
    }
    return log;
}

std::vector<InfluenceRow> channel_influence_experiment(Model& m,
                                                       const std::vector<Tensor>& images) {
    if (images.empty()) throw std::invalid_argument("channel influence: no evaluation images");
    ChannelImportance imp = compute_importance(m, images);
    int channels = m.settings.latent_channels;
    std::vector<InfluenceRow> rows(static_cast<size_t>(channels));
    for (int c = 0; c < channels; ++c) rows[static_cast<size_t>(c)].channel = c;
    double n = static_cast<double>(images.size());
    for (const Tensor& image : images) {
        Tensor z_plain = detach(encode(image, m.encoder));
        Tensor baseline = reconstruct_from_latent(z_plain, m, imp);
        double base_psnr = psnr(image, baseline);
        double base_db = ms_ssim_db(ms_ssim_value(image, baseline));
        for (int c = 0; c < channels; ++c) {
            Tensor pruned = reconstruct_from_latent(z_plain, m, imp, -1, c);
            rows[static_cast<size_t>(c)].psnr_loss_db += (base_psnr - psnr(image, pruned)) / n;
            rows[static_cast<size_t>(c)].msssim_loss_db +=
                (base_db - ms_ssim_db(ms_ssim_value(image, pruned))) / n;
        }
    }
    return rows;
}

std::string influence_csv(const std::vector<InfluenceRow>& rows) {
    std::string out = "channel,psnr_loss_db,msssim_loss_db\n";
    for (const InfluenceRow& r : rows)
        out += std::to_string(r.channel) + "," + fmt(r.psnr_loss_db) + "," +
               fmt(r.msssim_loss_db) + "\n";
    return out;
}

}  // namespace cvq
