#include "cvq/pipeline.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "cvq/arithmetic_coder.hpp"
#include "cvq/metrics.hpp"

namespace cvq {

namespace {

Tensor detach(const Tensor& t) { return Tensor::from_vector(t.shape(), t.values()); }

Tensor zero_channel(const Tensor& t, int channel) {
    if (channel < 0 || channel >= t.dim(0))
        throw std::invalid_argument("zero_channel: channel out of range");
    std::vector<double> v = t.values();
    size_t plane = static_cast<size_t>(t.dim(1)) * static_cast<size_t>(t.dim(2));
    std::fill(v.begin() + static_cast<ptrdiff_t>(channel * plane),
              v.begin() + static_cast<ptrdiff_t>((channel + 1) * plane), 0.0);
    return Tensor::from_vector(t.shape(), std::move(v));
}

// Hard symbols and center values for one group latent.
void hard_quantize(const Tensor& group, const GmmSnapshot& snap, std::vector<int>& symbols,
                   std::vector<double>& values) {
    const std::vector<double>& v = group.values();
    symbols.resize(v.size());
    values.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        auto [center, sym] = quantize_hard(v[i], snap);
        symbols[i] = sym;
        values[i] = center;
    }
}

}  // namespace

ChannelImportance compute_importance(Model& m, const std::vector<Tensor>& images) {
    ImportanceMode mode = importance_mode_from_string(m.settings.importance_mode);
    if (mode == ImportanceMode::Predefined) return importance_predefined(m.settings.latent_channels);
    if (images.empty()) throw std::invalid_argument("compute_importance: no calibration images");
    if (mode == ImportanceMode::Re)
        return importance_re(images, m, m.settings.re_importance_delta);
    // squeeze-excite: average the per-image scores (images may differ in size)
    std::vector<double> w(static_cast<size_t>(m.settings.latent_channels), 0.0);
    for (const Tensor& image : images) {
        Tensor z = encode(image, m.encoder);
        std::vector<double> s = se_scores(z, m.se).values();
        for (size_t c = 0; c < w.size(); ++c) w[c] += s[c] / static_cast<double>(images.size());
    }
    return importance_from_weights(std::move(w), ImportanceMode::Se);
}

ChannelImportance importance_re(const std::vector<Tensor>& images, Model& m, bool delta) {
    if (images.empty()) throw std::invalid_argument("importance_re: no validation images");
    int channels = m.settings.latent_channels;
    ChannelImportance base = importance_predefined(channels);
    std::vector<double> w(static_cast<size_t>(channels), 0.0);
    double n = static_cast<double>(images.size());
    for (const Tensor& image : images) {
        Tensor z_plain = detach(encode(image, m.encoder));
        double baseline = 0.0;
        if (delta)
            baseline = 1.0 - ms_ssim_value(image, reconstruct_from_latent(z_plain, m, base));
        for (int c = 0; c < channels; ++c) {
            Tensor recon = reconstruct_from_latent(z_plain, m, base, /*zero_before=*/c);
            double err = 1.0 - ms_ssim_value(image, recon);
            w[static_cast<size_t>(c)] += (err - baseline) / n;
        }
    }
    return importance_from_weights(std::move(w), ImportanceMode::Re);
}

Reconstruction reconstruct(const Tensor& image, Model& m, const ChannelImportance* imp) {
    Reconstruction r;
    r.z = encode(image, m.encoder);
    ChannelImportance local;
    if (!imp) {
        ImportanceMode mode = importance_mode_from_string(m.settings.importance_mode);
        if (mode == ImportanceMode::Predefined) {
            local = importance_predefined(m.settings.latent_channels);
        } else if (mode == ImportanceMode::Se) {
            local = importance_from_weights(se_scores(r.z, m.se).values(), ImportanceMode::Se);
        } else {
            throw std::invalid_argument(
                "reconstruct: pruned-reconstruction importance must be precomputed");
        }
        imp = &local;
    }
    r.split = split_channels(r.z, *imp, group_spec(m.settings));
    std::vector<Tensor> hard;
    for (size_t g = 0; g < m.gmm.size(); ++g) {
        r.quant.push_back(quantize_ste(r.split.groups[g], m.gmm[g],
                                       m.settings.quantizer_soft_forward));
        hard.push_back(r.quant.back().values);
    }
    r.z_hat = merge_channels(hard, r.split.permutation);
    r.recon = decode(r.z_hat, m.decoder);
    return r;
}

Tensor reconstruct_from_latent(const Tensor& z_plain, Model& m, const ChannelImportance& imp,
                               int zero_before, int zero_after) {
    Tensor z = zero_before >= 0 ? zero_channel(z_plain, zero_before) : z_plain;
    SplitResult split = split_channels(z, imp, group_spec(m.settings));
    std::vector<Tensor> hard;
    for (size_t g = 0; g < m.gmm.size(); ++g) {
        GmmSnapshot snap = gmm_snapshot(m.gmm[g]);
        std::vector<int> symbols;
        std::vector<double> values;
        hard_quantize(split.groups[g], snap, symbols, values);
        hard.push_back(Tensor::from_vector(split.groups[g].shape(), std::move(values)));
    }
    Tensor z_hat = merge_channels(hard, split.permutation);
    if (zero_after >= 0) z_hat = zero_channel(z_hat, zero_after);
    return decode(z_hat, m.decoder);
}

CompressResult compress_image(const Tensor& image, Model& m) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("compress: expected a [3,H,W] image");
    int height = image.dim(1), width = image.dim(2);
    if (height > 65535 || width > 65535)
        throw std::invalid_argument("compress: image too large for the container");
    if (m.settings.latent_channels > 255)
        throw std::invalid_argument("compress: latent channel count too large for the container");

    ChannelImportance imp = compute_importance(m, {image});
    Tensor z = detach(encode(image, m.encoder));
    SplitResult split = split_channels(z, imp, group_spec(m.settings));
    int h = z.dim(1), w = z.dim(2);

    CompressResult out;
    out.stream.height = height;
    out.stream.width = width;
    out.stream.permutation = split.permutation;
    for (size_t g = 0; g < m.gmm.size(); ++g) {
        GmmSnapshot snap = gmm_snapshot(m.gmm[g]);
        std::vector<int> symbols;
        std::vector<double> values;
        hard_quantize(split.groups[g], snap, symbols, values);
        int cg = split.groups[g].dim(0);
        PmfProvider provider = context_pmf_provider(m.ctx[g], cg, h, w);
        std::vector<uint8_t> payload = encode_symbols(symbols, provider);
        out.stream.group_levels.push_back(m.gmm[g].levels);
        out.stream.group_sizes.push_back(cg);
        std::vector<float> table;
        for (double mu : snap.mu) table.push_back(static_cast<float>(mu));
        out.stream.mu_tables.push_back(std::move(table));
        out.group_bits.push_back(payload.size() * 8);
        out.stream.payloads.push_back(std::move(payload));
    }
    out.bytes = serialize_bitstream(out.stream);
    out.bits_per_pixel = bpp(out.bytes.size(), height, width);
    return out;
}

Tensor decompress_stream(const Bitstream& bs, Model& m) {
    validate_bitstream(bs);
    const Settings& s = m.settings;
    if (static_cast<int>(bs.permutation.size()) != s.latent_channels)
        throw std::runtime_error("decompress: channel count does not match the checkpoint");
    if (static_cast<int>(bs.group_levels.size()) != s.groups)
        throw std::runtime_error("decompress: group count does not match the checkpoint");
    int divisor = spatial_divisor(codec_config(s));
    if (bs.height % divisor != 0 || bs.width % divisor != 0)
        throw std::runtime_error("decompress: image size inconsistent with the checkpoint");
    int h = bs.height / divisor, w = bs.width / divisor;

    std::vector<Tensor> groups;
    for (size_t g = 0; g < m.gmm.size(); ++g) {
        if (bs.group_levels[g] != s.group_levels[g] || bs.group_sizes[g] != m.sizes[g])
            throw std::runtime_error("decompress: group layout does not match the checkpoint");
        GmmSnapshot snap = gmm_snapshot(m.gmm[g]);
        for (int q = 0; q < bs.group_levels[g]; ++q)
            if (static_cast<float>(snap.mu[static_cast<size_t>(q)]) != bs.mu_tables[g][static_cast<size_t>(q)])
                throw std::runtime_error("decompress: center table does not match the checkpoint");
        int cg = bs.group_sizes[g];
        size_t count = static_cast<size_t>(cg) * h * w;
        PmfProvider provider = context_pmf_provider(m.ctx[g], cg, h, w);
        std::vector<int> symbols = decode_symbols(bs.payloads[g], count, provider);
        std::vector<double> values(count);
        for (size_t i = 0; i < count; ++i) values[i] = snap.mu[static_cast<size_t>(symbols[i])];
        groups.push_back(Tensor::from_vector({cg, h, w}, std::move(values)));
    }
    return decode(merge_channels(groups, bs.permutation), m.decoder);
}

}  // namespace cvq
