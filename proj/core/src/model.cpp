#include "cvq/model.hpp"

#include <stdexcept>

namespace cvq {

Model make_model(const Settings& s, Rng& rng) {
    validate_settings(s);
    Model m;
    m.settings = s;
    m.encoder = make_encoder(codec_config(s), rng);
    m.decoder = make_decoder(codec_config(s), rng);
    m.se = make_se_scorer(s.latent_channels, s.se_reduction, rng);
    m.sizes = group_sizes(group_spec(s), s.latent_channels);
    for (int g = 0; g < s.groups; ++g) {
        m.gmm.push_back(make_gmm(s.group_levels[static_cast<size_t>(g)]));
        m.ctx.push_back(make_context_model(context_config(s, s.group_levels[static_cast<size_t>(g)]), rng));
    }
    return m;
}

std::vector<std::pair<std::string, Tensor*>> model_params(Model& m) {
    std::vector<std::pair<std::string, Tensor*>> out = encoder_params(m.encoder, "enc");
    for (auto& p : decoder_params(m.decoder, "dec")) out.push_back(std::move(p));
    out.push_back({"se.w1", &m.se.reduce_w});
    out.push_back({"se.b1", &m.se.reduce_b});
    out.push_back({"se.w2", &m.se.expand_w});
    out.push_back({"se.b2", &m.se.expand_b});
    for (size_t g = 0; g < m.gmm.size(); ++g) {
        std::string p = "g" + std::to_string(g);
        out.push_back({p + ".pi", &m.gmm[g].pi_logits});
        out.push_back({p + ".mu", &m.gmm[g].mu});
        out.push_back({p + ".sigma", &m.gmm[g].sigma_raw});
    }
    for (size_t g = 0; g < m.ctx.size(); ++g)
        for (auto& p : context_model_params(m.ctx[g], "ctx" + std::to_string(g)))
            out.push_back(std::move(p));
    return out;
}

Component component_of(const std::string& name) {
    if (name.rfind("enc.", 0) == 0 || name.rfind("se.", 0) == 0) return Component::Encoder;
    if (name.rfind("dec.", 0) == 0) return Component::Decoder;
    if (name.rfind("ctx", 0) == 0) return Component::Entropy;
    if (name.rfind("g", 0) == 0) return Component::Quantizer;
    throw std::invalid_argument("component_of: unrecognized parameter name " + name);
}

double component_lr(const Settings& s, Component c) {
    switch (c) {
        case Component::Encoder: return s.lr_encoder;
        case Component::Quantizer: return s.lr_quantizer;
        case Component::Entropy: return s.lr_entropy;
        case Component::Decoder: return s.lr_decoder;
    }
    throw std::logic_error("component_lr: bad component");
}

}  // namespace cvq
