#pragma once

// The full trainable system: codec network, per-group mixture quantizers,
// per-group context entropy models, and the squeeze-excite importance scorer.
// Parameters are reachable through one flat name->tensor registry whose order
// and names are fixed (checkpoints and the optimizer key off them).

#include <string>
#include <utility>
#include <vector>

#include "cvq/codec_network.hpp"
#include "cvq/config.hpp"
#include "cvq/controller.hpp"
#include "cvq/entropy_model.hpp"
#include "cvq/gmm_quantizer.hpp"
#include "cvq/rng.hpp"

namespace cvq {

struct Model {
    Settings settings;
    Encoder encoder;
    Decoder decoder;
    SeScorer se;
    std::vector<int> sizes;          // channels per group
    std::vector<GmmParams> gmm;      // one per group
    std::vector<ContextModel> ctx;   // one per group
};

Model make_model(const Settings& s, Rng& rng);

std::vector<std::pair<std::string, Tensor*>> model_params(Model& m);

// Learning-rate component a parameter belongs to, by registry name.
enum class Component { Encoder, Quantizer, Entropy, Decoder };
Component component_of(const std::string& name);
double component_lr(const Settings& s, Component c);

}  // namespace cvq
