#include "cvq/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cvq {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
}

unsigned long long parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad unsigned integer for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config: bad flag for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const std::string& t : split_commas(v)) out.push_back(parse_int(key, t));
    if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const std::string& t : split_commas(v)) out.push_back(parse_double(key, t));
    if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
    return out;
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string fmt_double_list(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(v[i]);
    }
    return out;
}

}  // namespace

Settings parse_settings(const std::string& text) {
    Settings s;
    std::set<std::string> seen;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!seen.insert(key).second)
            throw std::invalid_argument("config: duplicate key " + key);

        if (key == "stage_channels_enc") s.stage_channels_enc = parse_int_list(key, val);
        else if (key == "stage_channels_dec") s.stage_channels_dec = parse_int_list(key, val);
        else if (key == "blocks_per_stage") s.blocks_per_stage = parse_int(key, val);
        else if (key == "latent_channels") s.latent_channels = parse_int(key, val);
        else if (key == "downsample_factor") s.downsample_factor = parse_int(key, val);
        else if (key == "se_reduction") s.se_reduction = parse_int(key, val);
        else if (key == "kernel_size") s.kernel_size = parse_int(key, val);
        else if (key == "groups") s.groups = parse_int(key, val);
        else if (key == "group_ratios") s.group_ratios = parse_double_list(key, val);
        else if (key == "group_levels") s.group_levels = parse_int_list(key, val);
        else if (key == "importance_mode") s.importance_mode = val;
        else if (key == "re_validation_images") s.re_validation_images = parse_int(key, val);
        else if (key == "context_filter_size") s.context_filter_size = parse_int(key, val);
        else if (key == "context_hidden") s.context_hidden = parse_int(key, val);
        else if (key == "context_residual_layers") s.context_residual_layers = parse_int(key, val);
        else if (key == "alpha") s.alpha = parse_double(key, val);
        else if (key == "beta") s.beta = parse_double(key, val);
        else if (key == "lr_encoder") s.lr_encoder = parse_double(key, val);
        else if (key == "lr_quantizer") s.lr_quantizer = parse_double(key, val);
        else if (key == "lr_entropy") s.lr_entropy = parse_double(key, val);
        else if (key == "lr_decoder") s.lr_decoder = parse_double(key, val);
        else if (key == "epochs") s.epochs = parse_int(key, val);
        else if (key == "batch_size") s.batch_size = parse_int(key, val);
        else if (key == "lr_milestones") s.lr_milestones = parse_int_list(key, val);
        else if (key == "seed") s.seed = parse_u64(key, val);
        else if (key == "quantizer_soft_forward") s.quantizer_soft_forward = parse_bool(key, val);
        else if (key == "re_importance_delta") s.re_importance_delta = parse_bool(key, val);
        else if (key == "rate_grad_to_encoder") s.rate_grad_to_encoder = parse_bool(key, val);
        else if (key == "context_onehot") s.context_onehot = parse_bool(key, val);
        else throw std::invalid_argument("config: unknown key " + key);
    }
    validate_settings(s);
    return s;
}

std::string serialize_settings(const Settings& s) {
    std::string out;
    auto line = [&out](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
    line("stage_channels_enc", fmt_int_list(s.stage_channels_enc));
    line("stage_channels_dec", fmt_int_list(s.stage_channels_dec));
    line("blocks_per_stage", std::to_string(s.blocks_per_stage));
    line("latent_channels", std::to_string(s.latent_channels));
    line("downsample_factor", std::to_string(s.downsample_factor));
    line("se_reduction", std::to_string(s.se_reduction));
    line("kernel_size", std::to_string(s.kernel_size));
    line("groups", std::to_string(s.groups));
    line("group_ratios", fmt_double_list(s.group_ratios));
    line("group_levels", fmt_int_list(s.group_levels));
    line("importance_mode", s.importance_mode);
    line("re_validation_images", std::to_string(s.re_validation_images));
    line("context_filter_size", std::to_string(s.context_filter_size));
    line("context_hidden", std::to_string(s.context_hidden));
    line("context_residual_layers", std::to_string(s.context_residual_layers));
    line("alpha", fmt_double(s.alpha));
    line("beta", fmt_double(s.beta));
    line("lr_encoder", fmt_double(s.lr_encoder));
    line("lr_quantizer", fmt_double(s.lr_quantizer));
    line("lr_entropy", fmt_double(s.lr_entropy));
    line("lr_decoder", fmt_double(s.lr_decoder));
    line("epochs", std::to_string(s.epochs));
    line("batch_size", std::to_string(s.batch_size));
    line("lr_milestones", fmt_int_list(s.lr_milestones));
    line("seed", std::to_string(s.seed));
    line("quantizer_soft_forward", s.quantizer_soft_forward ? "1" : "0");
    line("re_importance_delta", s.re_importance_delta ? "1" : "0");
    line("rate_grad_to_encoder", s.rate_grad_to_encoder ? "1" : "0");
    line("context_onehot", s.context_onehot ? "1" : "0");
    return out;
}

Settings load_settings_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_settings(buf.str());
}

void validate_settings(const Settings& s) {
    validate_codec_config(codec_config(s));
    if (s.groups < 1) throw std::invalid_argument("config: groups must be positive");
    if (static_cast<int>(s.group_ratios.size()) != s.groups ||
        static_cast<int>(s.group_levels.size()) != s.groups)
        throw std::invalid_argument("config: group_ratios and group_levels must have `groups` entries");
    validate_group_spec(group_spec(s));
    // group sizes must be realizable for the configured latent width
    group_sizes(group_spec(s), s.latent_channels);
    importance_mode_from_string(s.importance_mode);
    if (s.re_validation_images < 1)
        throw std::invalid_argument("config: re_validation_images must be positive");
    for (int q : s.group_levels) validate_context_config(context_config(s, q));
    if (!(s.alpha > 0.0) || !(s.beta > 0.0))
        throw std::invalid_argument("config: alpha and beta must be positive");
    if (!(s.lr_encoder > 0.0) || !(s.lr_quantizer > 0.0) || !(s.lr_entropy > 0.0) ||
        !(s.lr_decoder > 0.0))
        throw std::invalid_argument("config: learning rates must be positive");
    if (s.epochs < 1) throw std::invalid_argument("config: epochs must be positive");
    if (s.batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
    int prev = 0;
    for (int m : s.lr_milestones) {
        if (m <= prev) throw std::invalid_argument("config: lr_milestones must be increasing and positive");
        prev = m;
    }
}

CodecConfig codec_config(const Settings& s) {
    CodecConfig c;
    c.stage_channels_enc = s.stage_channels_enc;
    c.stage_channels_dec = s.stage_channels_dec;
    c.blocks_per_group = s.blocks_per_stage;
    c.latent_channels = s.latent_channels;
    c.downsample_factor = s.downsample_factor;
    c.se_reduction = s.se_reduction;
    c.kernel_size = s.kernel_size;
    return c;
}

GroupSpec group_spec(const Settings& s) {
    GroupSpec g;
    g.ratios = s.group_ratios;
    g.levels = s.group_levels;
    return g;
}

ContextModelConfig context_config(const Settings& s, int group_levels) {
    ContextModelConfig c;
    c.filter_size = s.context_filter_size;
    c.hidden_channels = s.context_hidden;
    c.residual_layers = s.context_residual_layers;
    c.levels = group_levels;
    c.one_hot = s.context_onehot;
    return c;
}

}  // namespace cvq
