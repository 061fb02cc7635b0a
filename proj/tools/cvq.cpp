#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cvq/checkpoint.hpp"
#include "cvq/controller.hpp"
#include "cvq/grad_suites.hpp"
#include "cvq/image_io.hpp"
#include "cvq/pipeline.hpp"
#include "cvq/training.hpp"

namespace {

std::vector<std::string> list_ppm_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm")
            paths.push_back(entry.path().string());
    if (paths.empty()) throw std::runtime_error("no .ppm images in " + dir);
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<cvq::Tensor> load_images(const std::string& dir) {
    std::vector<cvq::Tensor> images;
    for (const std::string& p : list_ppm_files(dir)) images.push_back(cvq::read_ppm(p));
    return images;
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out) {
    cvq::Settings s = cvq::load_settings_file(config);
    std::vector<cvq::Tensor> images = load_images(data);
    cvq::Rng rng(s.seed);
    cvq::Model m = cvq::make_model(s, rng);
    std::vector<cvq::EpochLog> log = cvq::train(m, images, rng);
    cvq::save_checkpoint(out, m, s.epochs, rng);
    std::fputs(cvq::train_log_csv(log).c_str(), stdout);
    std::fprintf(stderr, "trained %d epochs on %zu images -> %s\n", s.epochs, images.size(),
                 out.c_str());
    return 0;
}

int cmd_compress(const std::string& ckpt, const std::string& in, const std::string& out) {
    cvq::CheckpointData cp = cvq::load_checkpoint(ckpt);
    cvq::Tensor image = cvq::read_ppm(in);
    cvq::CompressResult cr = cvq::compress_image(image, cp.model);
    write_bytes(out, cr.bytes);
    std::fprintf(stderr, "%s: %zu bytes, %.4f bpp\n", out.c_str(), cr.bytes.size(),
                 cr.bits_per_pixel);
    return 0;
}

int cmd_decompress(const std::string& ckpt, const std::string& in, const std::string& out) {
    cvq::CheckpointData cp = cvq::load_checkpoint(ckpt);
    cvq::Bitstream bs = cvq::parse_bitstream(read_bytes(in));
    cvq::Tensor image = cvq::decompress_stream(bs, cp.model);
    cvq::write_ppm(out, image);
    std::fprintf(stderr, "%s: %dx%d\n", out.c_str(), bs.width, bs.height);
    return 0;
}

int cmd_analyze(const std::string& ckpt, const std::string& data, const std::string& out) {
    cvq::CheckpointData cp = cvq::load_checkpoint(ckpt);
    std::vector<cvq::Tensor> images = load_images(data);
    std::vector<cvq::InfluenceRow> rows = cvq::channel_influence_experiment(cp.model, images);
    write_text(out, cvq::influence_csv(rows));
    std::fprintf(stderr, "analyzed %zu channels over %zu images -> %s\n", rows.size(),
                 images.size(), out.c_str());
    return 0;
}

int cmd_check_bound(const std::vector<double>& r, const std::vector<int>& q, int single_levels) {
    cvq::GroupSpec spec{r, q};
    int channels = std::max<int>(8, static_cast<int>(r.size()));
    cvq::EntropyBound b = cvq::entropy_upper_bound(spec, channels, 1, 1, single_levels);
    if (b.satisfied) {
        std::printf("%.4f < %.4f: satisfied\n", b.grouped_per_symbol, b.single_per_symbol);
        return 0;
    }
    if (std::abs(b.grouped_per_symbol - b.single_per_symbol) < 1e-12)
        std::printf("equal: not satisfied\n");
    else
        std::printf("%.4f >= %.4f: not satisfied\n", b.grouped_per_symbol, b.single_per_symbol);
    return 0;
}

int cmd_grad_check(const std::string& module, unsigned long long seed) {
    std::vector<cvq::GradSuiteRow> rows = module == "all"
                                              ? cvq::run_all_grad_suites(seed)
                                              : cvq::run_grad_suite(module, seed);
    std::fputs(cvq::grad_suite_report(rows).c_str(), stdout);
    return cvq::grad_suites_pass(rows) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"channel-grouped variable-rate image codec"};
    app.require_subcommand(1);

    std::string config, data, out, ckpt, in;
    std::vector<double> ratios;
    std::vector<int> levels;
    int single_levels = 0;
    std::string module = "all";
    unsigned long long seed = 1;

    CLI::App* train = app.add_subcommand("train", "train a model on a directory of PPM images");
    train->add_option("--config", config, "settings file")->required();
    train->add_option("--data", data, "directory of .ppm training images")->required();
    train->add_option("--out", out, "checkpoint file to write")->required();

    CLI::App* compress = app.add_subcommand("compress", "compress one PPM image");
    compress->add_option("--ckpt", ckpt, "checkpoint file")->required();
    compress->add_option("--in", in, "input .ppm")->required();
    compress->add_option("--out", out, "output container file")->required();

    CLI::App* decompress = app.add_subcommand("decompress", "decompress a container to PPM");
    decompress->add_option("--ckpt", ckpt, "checkpoint file")->required();
    decompress->add_option("--in", in, "input container file")->required();
    decompress->add_option("--out", out, "output .ppm")->required();

    CLI::App* analyze =
        app.add_subcommand("analyze-channels", "per-channel pruning damage as CSV");
    analyze->add_option("--ckpt", ckpt, "checkpoint file")->required();
    analyze->add_option("--data", data, "directory of .ppm evaluation images")->required();
    analyze->add_option("--out", out, "CSV file to write")->required();

    CLI::App* bound = app.add_subcommand(
        "check-bound", "compare grouped vs single-level entropy upper bounds");
    bound->add_option("--r", ratios, "group channel ratios (sum to 1)")
        ->required()
        ->expected(-1);
    bound->add_option("--q", levels, "per-group quantization levels")->required()->expected(-1);
    bound->add_option("--Q", single_levels, "single-group level count to compare against")
        ->required();

    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
    grad->add_option("--module", module, "suite name or 'all'")
        ->check(CLI::IsMember([] {
            std::vector<std::string> names = cvq::grad_suite_names();
            names.push_back("all");
            return names;
        }()));
    grad->add_option("--seed", seed, "probe seed");

    try {
        app.parse(argc, argv);
        if (*train) return cmd_train(config, data, out);
        if (*compress) return cmd_compress(ckpt, in, out);
        if (*decompress) return cmd_decompress(ckpt, in, out);
        if (*analyze) return cmd_analyze(ckpt, data, out);
        if (*bound) return cmd_check_bound(ratios, levels, single_levels);
        if (*grad) return cmd_grad_check(module, seed);
        throw std::logic_error("no subcommand dispatched");
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cvq: %s\n", e.what());
        return 1;
    }
}
