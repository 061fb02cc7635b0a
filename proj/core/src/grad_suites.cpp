#include "cvq/grad_suites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "cvq/codec_network.hpp"
#include "cvq/entropy_model.hpp"
#include "cvq/gmm_quantizer.hpp"
#include "cvq/grad_check.hpp"
#include "cvq/metrics.hpp"
#include "cvq/model.hpp"
#include "cvq/pipeline.hpp"
#include "cvq/pixel_shuffle.hpp"
#include "cvq/training.hpp"

namespace cvq {

namespace {

constexpr double kTolPrimitive = 1e-4;
constexpr double kTolComposite = 1e-3;
constexpr long long kMinCases = 100;

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Tensor rand_tensor(Rng& rng, const Shape& shape, double lo, double hi, bool grad = true) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_vector(shape, std::move(v), grad);
}

// Uniform in +/-[margin, hi] so kinked ops (relu, clamp) are probed away
// from their corners.
Tensor rand_offzero(Rng& rng, const Shape& shape, double margin, double hi, bool grad = true) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::vector<double> v(n);
    for (double& x : v) {
        double m = rng.uniform(margin, hi);
        x = rng.uniform() < 0.5 ? -m : m;
    }
    return Tensor::from_vector(shape, std::move(v), grad);
}

// One leaf paired with the scalar function to differentiate through it.
struct Probe {
    Tensor leaf;
    std::function<Tensor()> f;
};

// Builds a batch of probes from fresh random data; called repeatedly until
// the op has accumulated enough finite-difference cases.
using ProbeBuilder = std::function<std::vector<Probe>(Rng&)>;

class SuiteRunner {
public:
    SuiteRunner(std::string suite, unsigned long long seed)
        : suite_(std::move(suite)), seed_(seed) {}

    // `budget` caps the coordinates sampled per probe (-1 checks them all).
    void op(const std::string& name, double tol, const ProbeBuilder& build,
            long long budget = -1, long long min_cases = kMinCases) {
        GradSuiteRow row;
        row.suite = suite_;
        row.op = name;
        row.pass = true;
        row.tolerance = tol;
        Rng data_rng(seed_ ^ fnv1a(suite_ + "/" + name));
        Rng pick_rng(seed_ ^ fnv1a(name + "#pick"));
        while (row.cases < min_cases) {
            for (Probe& p : build(data_rng)) {
                GradCheckReport rep =
                    finite_difference_check(p.f, p.leaf, 1e-5, tol, budget, &pick_rng);
                row.cases += rep.elements_checked;
                row.max_err = std::max(row.max_err, rep.max_err);
                if (!rep.pass && row.note.empty()) {
                    row.pass = false;
                    row.note = rep.note.empty() ? "finite-difference mismatch" : rep.note;
                }
            }
        }
        rows_.push_back(std::move(row));
    }

    // Negative control: the op passes only if the checker flags it.
    void expect_failure(const std::string& name, const ProbeBuilder& build) {
        GradSuiteRow row;
        row.suite = suite_;
        row.op = name;
        row.tolerance = kTolPrimitive;
        Rng data_rng(seed_ ^ fnv1a(suite_ + "/" + name));
        for (Probe& p : build(data_rng)) {
            GradCheckReport rep = finite_difference_check(p.f, p.leaf, 1e-5, kTolPrimitive);
            row.cases += rep.elements_checked;
            row.max_err = std::max(row.max_err, rep.max_err);
            row.pass = !rep.pass;
            if (!row.pass) row.note = "checker accepted a deliberately wrong gradient";
        }
        rows_.push_back(std::move(row));
    }

    std::vector<GradSuiteRow> take() { return std::move(rows_); }

private:
    std::string suite_;
    unsigned long long seed_;
    std::vector<GradSuiteRow> rows_;
};

std::vector<Probe> single(Tensor leaf, std::function<Tensor()> f) {
    std::vector<Probe> v;
    v.push_back({std::move(leaf), std::move(f)});
    return v;
}

// ---- tensor primitives ---------------------------------------------------

std::vector<GradSuiteRow> suite_tensor(unsigned long long seed) {
    SuiteRunner s("tensor", seed);
    const Shape box{3, 4, 5};  // 60 elements

    auto binary = [&](const char* name, Tensor (*op)(const Tensor&, const Tensor&), double blo,
                      double bhi) {
        s.op(name, kTolPrimitive, [=](Rng& rng) {
            Tensor a = rand_tensor(rng, box, -1.0, 1.0);
            Tensor b = rand_tensor(rng, box, blo, bhi);
            std::vector<Probe> probes;
            probes.push_back({a, [=]() { return sum_all(square(op(a, b))); }});
            probes.push_back({b, [=]() { return sum_all(square(op(a, b))); }});
            return probes;
        });
    };
    binary("add", add, -1.0, 1.0);
    binary("sub", sub, -1.0, 1.0);
    binary("mul", mul, -1.0, 1.0);
    binary("div", div, 0.5, 2.0);  // denominator bounded away from zero

    s.op("broadcast_add", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        Tensor c = rand_tensor(rng, {1}, -1.0, 1.0);
        std::vector<Probe> probes;
        probes.push_back({x, [=]() { return sum_all(square(broadcast_add(x, c))); }});
        probes.push_back({c, [=]() { return sum_all(square(broadcast_add(x, c))); }});
        return probes;
    });
    s.op("broadcast_mul", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        Tensor c = rand_tensor(rng, {1}, -1.0, 1.0);
        std::vector<Probe> probes;
        probes.push_back({x, [=]() { return sum_all(square(broadcast_mul(x, c))); }});
        probes.push_back({c, [=]() { return sum_all(square(broadcast_mul(x, c))); }});
        return probes;
    });

    auto unary = [&](const char* name, const std::function<Tensor(const Tensor&)>& op, double lo,
                     double hi, bool offzero = false) {
        s.op(name, kTolPrimitive, [=](Rng& rng) {
            Tensor x = offzero ? rand_offzero(rng, box, 0.05, hi)
                               : rand_tensor(rng, box, lo, hi);
            return single(x, [=]() { return sum_all(square(op(x))); });
        });
    };
    unary("add_const", [](const Tensor& x) { return add_const(x, 0.7); }, -1.0, 1.0);
    unary("mul_const", [](const Tensor& x) { return mul_const(x, -1.3); }, -1.0, 1.0);
    unary("pow_const", [](const Tensor& x) { return pow_const(x, 1.7); }, 0.3, 2.0);
    unary("clamp_min", [](const Tensor& x) { return clamp_min(x, 0.0); }, 0.0, 1.5, true);
    unary("exp", [](const Tensor& x) { return cvq::exp(x); }, -1.0, 1.0);
    unary("log", [](const Tensor& x) { return cvq::log(x); }, 0.3, 2.0);
    unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, -2.0, 2.0);
    unary("relu", [](const Tensor& x) { return relu(x); }, 0.0, 1.5, true);
    unary("softplus", [](const Tensor& x) { return softplus(x); }, -2.0, 2.0);
    unary("neg", [](const Tensor& x) { return neg(x); }, -1.0, 1.0);
    unary("square", [](const Tensor& x) { return square(x); }, -1.0, 1.0);

    auto reduction = [&](const char* name, const std::function<Tensor(const Tensor&)>& op) {
        s.op(name, kTolPrimitive, [=](Rng& rng) {
            Tensor x = rand_tensor(rng, box, -1.0, 1.0);
            return single(x, [=]() { return square(sum_all(op(x))); });
        });
    };
    reduction("sum_all", [](const Tensor& x) { return sum_all(x); });
    reduction("mean_all", [](const Tensor& x) { return mean_all(x); });
    reduction("sum_axis", [](const Tensor& x) { return square(sum_axis(x, 1)); });
    reduction("mean_axis", [](const Tensor& x) { return square(mean_axis(x, 2)); });

    s.op("softmax", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {5, 3, 4}, -2.0, 2.0);
        return single(x, [=]() { return sum_all(square(softmax(x, 0))); });
    });
    s.op("logsumexp", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {5, 3, 4}, -2.0, 2.0);
        return single(x, [=]() { return sum_all(square(logsumexp(x, 0))); });
    });

    s.op("reshape", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        return single(x, [=]() { return sum_all(square(reshape(x, {5, 12}))); });
    });
    s.op("permute", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        return single(x, [=]() { return sum_all(square(permute(x, {2, 0, 1}))); });
    });
    s.op("concat", kTolPrimitive, [&](Rng& rng) {
        Tensor a = rand_tensor(rng, {2, 4, 5}, -1.0, 1.0);
        Tensor b = rand_tensor(rng, {3, 4, 5}, -1.0, 1.0);
        std::vector<Probe> probes;
        auto f = [=]() { return sum_all(square(concat({a, b}, 0))); };
        probes.push_back({a, f});
        probes.push_back({b, f});
        return probes;
    });
    s.op("split", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {5, 4, 3}, -1.0, 1.0);
        return single(x, [=]() {
            auto parts = cvq::split(x, 0, {2, 3});
            return sum_all(square(sub(sum_all(parts[0]), sum_all(square(parts[1])))));
        });
    });
    s.op("apply_index_map", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {4, 3}, -1.0, 1.0);
        std::vector<int64_t> map;  // duplicate some sources, drop others
        for (int64_t i = 0; i < 10; ++i) map.push_back((i * 5) % 12);
        return single(x, [=]() {
            return sum_all(square(apply_index_map(x, {10}, map, "shuffle-view")));
        });
    });

    s.op("conv2d", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {3, 6, 6}, -1.0, 1.0);
        Tensor w = rand_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5);
        Tensor b = rand_tensor(rng, {4}, -0.5, 0.5);
        auto f = [=]() { return sum_all(square(conv2d(x, w, b, 1))); };
        std::vector<Probe> probes;
        probes.push_back({x, f});
        probes.push_back({w, f});
        probes.push_back({b, f});
        return probes;
    }, /*budget=*/24);

    for (MaskType mask : {MaskType::A, MaskType::B}) {
        const char* name = mask == MaskType::A ? "masked_conv3d(A)" : "masked_conv3d(B)";
        s.op(name, kTolPrimitive, [&, mask](Rng& rng) {
            Tensor x = rand_tensor(rng, {2, 3, 4, 4}, -1.0, 1.0);
            Tensor w = rand_tensor(rng, {2, 2, 3, 3, 3}, -0.5, 0.5);
            Tensor b = rand_tensor(rng, {2}, -0.5, 0.5);
            auto f = [=]() { return sum_all(square(masked_conv3d(x, w, b, mask))); };
            std::vector<Probe> probes;
            probes.push_back({x, f});
            probes.push_back({w, f});
            probes.push_back({b, f});
            return probes;
        }, /*budget=*/24);
    }

    s.op("global_avg_pool2d", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        return single(x, [=]() { return sum_all(square(global_avg_pool2d(x))); });
    });
    s.op("scale_channels", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, box, -1.0, 1.0);
        Tensor g = rand_tensor(rng, {3, 1, 1}, -1.0, 1.0);
        std::vector<Probe> probes;
        auto f = [=]() { return sum_all(square(scale_channels(x, g))); };
        probes.push_back({x, f});
        probes.push_back({g, f});
        return probes;
    });
    s.op("avg_pool2", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {2, 5, 6}, -1.0, 1.0);  // odd height exercises the drop
        return single(x, [=]() { return sum_all(square(avg_pool2(x))); });
    });

    s.op("gather_symbols", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {4, 3, 2, 2}, 0.1, 1.0);
        std::vector<int> syms;
        for (int i = 0; i < 12; ++i) syms.push_back(rng.uniform_int(4));
        return single(x, [=]() { return sum_all(square(gather_symbols(x, syms))); });
    });

    s.op("pixel_shuffle", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {8, 3, 4}, -1.0, 1.0);
        return single(x, [=]() { return sum_all(square(pixel_shuffle(x, 2))); });
    });
    s.op("inverse_pixel_shuffle", kTolPrimitive, [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {2, 6, 4}, -1.0, 1.0);
        return single(x, [=]() { return sum_all(square(inverse_pixel_shuffle(x, 2))); });
    });

    return s.take();
}

// ---- network building blocks ----------------------------------------------

std::vector<GradSuiteRow> suite_network(unsigned long long seed) {
    SuiteRunner s("network", seed);
    s.op("rcab", kTolPrimitive, [&](Rng& rng) {
        RcabBlock blk = make_rcab(4, 2, 3, rng);
        Tensor x = rand_tensor(rng, {4, 6, 6}, -1.0, 1.0);
        // tensor handles share storage, so the copied block sees the
        // checker's perturbations
        auto f = [blk, x]() { return mean_all(square(rcab_forward(x, blk))); };
        std::vector<Probe> probes;
        probes.push_back({x, f});
        for (Tensor* t : {&blk.conv1_w, &blk.conv1_b, &blk.conv2_w, &blk.conv2_b, &blk.reduce_w,
                          &blk.reduce_b, &blk.expand_w, &blk.expand_b})
            probes.push_back({*t, f});
        return probes;
    }, /*budget=*/6);
    return s.take();
}

// ---- quantizer -------------------------------------------------------------

std::vector<GradSuiteRow> suite_quantizer(unsigned long long seed) {
    SuiteRunner s("quantizer", seed);
    s.op("quantize_soft", kTolPrimitive, [&](Rng& rng) {
        GmmParams g = make_gmm(5, 0.4);
        Tensor z = rand_tensor(rng, {2, 3, 3}, -1.2, 1.2);
        auto f = [=]() { return sum_all(square(quantize_soft(z, g))); };
        std::vector<Probe> probes;
        probes.push_back({z, f});
        probes.push_back({g.pi_logits, f});
        probes.push_back({g.mu, f});
        probes.push_back({g.sigma_raw, f});
        return probes;
    });
    s.op("gmm_nll", kTolPrimitive, [&](Rng& rng) {
        GmmParams g = make_gmm(4, 0.5);
        Tensor z = rand_tensor(rng, {2, 3, 3}, -1.2, 1.2);
        auto f = [=]() { return square(gmm_nll(z, g)); };
        std::vector<Probe> probes;
        probes.push_back({z, f});
        probes.push_back({g.pi_logits, f});
        probes.push_back({g.mu, f});
        probes.push_back({g.sigma_raw, f});
        return probes;
    });
    return s.take();
}

// ---- context entropy model --------------------------------------------------

std::vector<GradSuiteRow> suite_entropy(unsigned long long seed) {
    SuiteRunner s("entropy", seed);
    for (bool one_hot : {false, true}) {
        ContextModelConfig cfg;
        cfg.filter_size = 3;
        cfg.hidden_channels = 4;
        cfg.residual_layers = 1;
        cfg.levels = 3;
        cfg.one_hot = one_hot;
        const char* name = one_hot ? "context_bits(one-hot)" : "context_bits";
        s.op(name, kTolPrimitive, [&, cfg](Rng& rng) {
            ContextModel m = make_context_model(cfg, rng);
            // push every parameter off its zero/identity init so gradients
            // reach all layers
            auto params = context_model_params(m, "ctx");
            for (auto& [pname, t] : params)
                for (double& v : t->mutable_values()) v += rng.uniform(-0.3, 0.3);
            std::vector<int> syms;
            for (int i = 0; i < 2 * 3 * 3; ++i) syms.push_back(rng.uniform_int(cfg.levels));
            Tensor embedded = cfg.one_hot
                                  ? embed_symbols(syms, 2, 3, 3, cfg)
                                  : rand_tensor(rng, {2, 3, 3}, -0.6, 0.6);
            auto f = [embedded, syms, m]() {
                return entropy_loss_bits(context_forward(embedded, m), syms);
            };
            std::vector<Probe> probes;
            if (!cfg.one_hot) probes.push_back({embedded, f});
            for (auto& [pname, t] : params) probes.push_back({*t, f});
            return probes;
        }, /*budget=*/8);
    }
    return s.take();
}

// ---- metrics ----------------------------------------------------------------

std::vector<GradSuiteRow> suite_metrics(unsigned long long seed) {
    SuiteRunner s("metrics", seed);
    s.op("ms_ssim", kTolPrimitive, [&](Rng& rng) {
        Tensor a = rand_tensor(rng, {3, 16, 16}, 0.05, 0.95);
        Tensor b = rand_tensor(rng, {3, 16, 16}, 0.05, 0.95);
        auto f = [=]() { return ms_ssim(a, b); };
        std::vector<Probe> probes;
        probes.push_back({a, f});
        probes.push_back({b, f});
        return probes;
    }, /*budget=*/30);
    s.op("ms_ssim(two-scale)", kTolPrimitive, [&](Rng& rng) {
        Tensor a = rand_tensor(rng, {1, 32, 32}, 0.05, 0.95);
        Tensor b = rand_tensor(rng, {1, 32, 32}, 0.05, 0.95);
        auto f = [=]() { return ms_ssim(a, b); };
        std::vector<Probe> probes;
        probes.push_back({a, f});
        probes.push_back({b, f});
        return probes;
    }, /*budget=*/25, /*min_cases=*/100);
    return s.take();
}

// ---- end-to-end training loss -----------------------------------------------

std::vector<GradSuiteRow> suite_loss(unsigned long long seed) {
    SuiteRunner s("loss", seed);
    // Soft quantizer forward keeps the whole objective differentiable; the
    // rate term reads detached symbol planes so the only symbol-dependent
    // path is the (fixed-index) PMF gather.
    Settings cfg = parse_settings(
        "stage_channels_enc=2,2,2,2\n"
        "stage_channels_dec=2,2,2,2\n"
        "blocks_per_stage=1\n"
        "latent_channels=4\n"
        "se_reduction=2\n"
        "groups=2\n"
        "group_ratios=0.5,0.5\n"
        "group_levels=3,5\n"
        "context_hidden=2\n"
        "quantizer_soft_forward=true\n"
        "rate_grad_to_encoder=false\n"
        "seed=5\n");
    s.op("total_loss", kTolComposite, [&](Rng& rng) {
        Rng init(rng.uniform_int(1 << 30) + 1);
        Model m = make_model(cfg, init);
        Tensor image = rand_tensor(rng, {3, 16, 16}, 0.05, 0.95, /*grad=*/false);
        auto f = [m, image]() mutable {
            Reconstruction r = reconstruct(image, m);
            return total_loss(image, m, r).total;
        };
        std::vector<Probe> probes;
        probes.push_back({m.encoder.head_w, f});
        probes.push_back({m.encoder.tail_w, f});
        probes.push_back({m.encoder.stages[0].blocks[0].conv1_w, f});
        probes.push_back({m.decoder.head_w, f});
        probes.push_back({m.decoder.tail_w, f});
        probes.push_back({m.decoder.tail_b, f});
        probes.push_back({m.gmm[0].mu, f});
        probes.push_back({m.gmm[0].pi_logits, f});
        probes.push_back({m.gmm[1].sigma_raw, f});
        probes.push_back({m.ctx[0].out_w, f});
        return probes;
    }, /*budget=*/4, /*min_cases=*/100);
    return s.take();
}

// ---- negative control ---------------------------------------------------------

std::vector<GradSuiteRow> suite_negative(unsigned long long seed) {
    SuiteRunner s("negative-control", seed);
    s.expect_failure("corrupted-backward", [&](Rng& rng) {
        Tensor x = rand_tensor(rng, {6}, -1.0, 1.0);
        // forward recomputes 3x from the leaf, backward claims d/dx = 2
        auto f = [=]() {
            std::vector<double> forged;
            for (double v : x.values()) forged.push_back(3.0 * v);
            return sum_all(ste_override(mul_const(x, 2.0), std::move(forged)));
        };
        return single(x, f);
    });
    return s.take();
}

}  // namespace

std::vector<std::string> grad_suite_names() {
    return {"tensor", "network", "quantizer", "entropy", "metrics", "loss", "negative-control"};
}

std::vector<GradSuiteRow> run_grad_suite(const std::string& name, unsigned long long seed) {
    if (name == "tensor") return suite_tensor(seed);
    if (name == "network") return suite_network(seed);
    if (name == "quantizer") return suite_quantizer(seed);
    if (name == "entropy") return suite_entropy(seed);
    if (name == "metrics") return suite_metrics(seed);
    if (name == "loss") return suite_loss(seed);
    if (name == "negative-control") return suite_negative(seed);
    throw std::invalid_argument("unknown gradient suite: " + name);
}

std::vector<GradSuiteRow> run_all_grad_suites(unsigned long long seed) {
    std::vector<GradSuiteRow> rows;
    for (const std::string& name : grad_suite_names()) {
        std::vector<GradSuiteRow> part = run_grad_suite(name, seed);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

bool grad_suites_pass(const std::vector<GradSuiteRow>& rows) {
    for (const GradSuiteRow& r : rows)
        if (!r.pass) return false;
    return !rows.empty();
}

std::string grad_suite_report(const std::vector<GradSuiteRow>& rows) {
    std::string out;
    int failed = 0;
    for (const GradSuiteRow& r : rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "[%s] %s/%s: %lld cases, max rel err %.2e (tol %g)%s%s\n",
                      r.pass ? "PASS" : "FAIL", r.suite.c_str(), r.op.c_str(), r.cases, r.max_err,
                      r.tolerance, r.note.empty() ? "" : " — ", r.note.c_str());
        out += line;
        if (!r.pass) ++failed;
    }
    out += failed == 0 ? "all gradient suites passed\n"
                       : std::to_string(failed) + " gradient op(s) failed\n";
    return out;
}

}  // namespace cvq
