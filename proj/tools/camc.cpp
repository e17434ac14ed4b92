// Command-line front end: train, encode, decode, eval, bdrate, erf, masks,
// selftest, plus synth for generating procedural test images.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "camc/checkpoint.hpp"
#include "camc/codec.hpp"
#include "camc/diagnostics.hpp"
#include "camc/errors.hpp"
#include "camc/image_io.hpp"
#include "camc/metrics.hpp"
#include "camc/range_coder.hpp"
#include "camc/synthetic.hpp"
#include "camc/training.hpp"
#include "json.hpp"

using namespace camc;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
    std::string config = "desk";
    std::string checkpoint;
    std::uint64_t seed = 0;
    std::string out;
};

ModelConfig resolve_config(const std::string& name_or_path) {
    if (name_or_path == "desk" || name_or_path == "paper") return ModelConfig::preset(name_or_path);
    std::ifstream f(name_or_path);
    if (!f) throw InputError("cannot read config file " + name_or_path);
    std::ostringstream text;
    text << f.rdbuf();
    return ModelConfig::parse(text.str());
}

// The checkpoint if one is given, otherwise freshly initialized weights.
Model load_model(const Common& c) {
    if (!c.checkpoint.empty()) return load_checkpoint(c.checkpoint);
    return Model::create(resolve_config(c.config), c.seed);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!(f << text)) throw InputError("cannot write " + path);
}

void require_out(const Common& c) {
    if (c.out.empty()) throw ConfigError("--out is required");
}

int run_train(const Common& c, const std::string& dir, std::size_t synthetic, const TrainOptions& base,
              const std::string& log_path) {
    require_out(c);
    std::vector<Tensor> images;
    if (!dir.empty()) {
        for (auto& [name, t] : load_image_dir(dir)) images.push_back(std::move(t));
    } else if (synthetic > 0) {
        images = synthetic_set(synthetic, base.crop, base.crop, c.seed + 1000);
    } else {
        throw ConfigError("train needs an image directory or --synthetic N");
    }
    Model model = load_model(c);
    TrainOptions opt = base;
    opt.seed = c.seed;
    const TrainResult r = train(model, images, opt, [&](const StepLog& s) {
        if (s.step % 100 == 0 || s.step == opt.steps)
            std::fprintf(stderr, "step %zu  loss %.4f  bpp %.4f  mse %.2f\n", s.step, s.loss, s.bpp, s.mse);
    });
    save_checkpoint(model, c.out);
    write_text(log_path.empty() ? c.out + ".log.csv" : log_path, loss_log_csv(r.log));
    if (r.diverged) {
        std::fprintf(stderr, "error: training diverged: %s (last good parameters saved)\n",
                     r.divergence_message.c_str());
        return 1;
    }
    return 0;
}

int run_encode(const Common& c, const std::string& input) {
    require_out(c);
    Model model = load_model(c);
    const EncodeStats s = encode_file(input, model, c.out);
    json j;
    j["height"] = s.height;
    j["width"] = s.width;
    j["file_bytes"] = s.file_bytes;
    j["bpp"] = s.bpp;
    j["rate_estimate_bits"] = s.rate_estimate_bits;
    j["z_bits"] = s.z_rate_bits;
    j["y_bits"] = s.y_rate_bits;
    j["saturated"] = s.saturated;
    std::cout << j.dump() << "\n";
    return 0;
}

int run_decode(const Common& c, const std::string& input) {
    require_out(c);
    Model model = load_model(c);
    decode_file(input, model, c.out);
    return 0;
}

int run_eval(const Common& c, const std::string& dir) {
    Model model = load_model(c);
    const std::string csv = eval_csv(evaluate_images(load_image_dir(dir), model));
    if (c.out.empty())
        std::cout << csv;
    else
        write_text(c.out, csv);
    return 0;
}

int run_bdrate(const std::string& anchor, const std::string& test) {
    std::printf("%.4f\n", bd_rate(read_rd_csv(anchor), read_rd_csv(test)));
    return 0;
}

int run_erf(const Common& c, const std::string& input) {
    require_out(c);
    Model model = load_model(c);
    write_pnm(c.out, erf_image(erf_map(model, image_to_tensor(read_pnm(input)))));
    return 0;
}

int run_masks(const Common& c, const std::string& input, int stage) {
    require_out(c);
    Model model = load_model(c);
    const ClusterMaskResult r = cluster_masks(model, image_to_tensor(read_pnm(input)), stage);
    fs::create_directories(c.out);
    for (std::size_t k = 0; k < r.masks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "cluster_%03zu.pgm", k);
        write_pnm((fs::path(c.out) / name).string(), r.masks[k]);
    }
    std::printf("%zu masks at %zux%zu\n", r.masks.size(), r.height, r.width);
    return 0;
}

int run_synth(const Common& c, std::size_t count, std::size_t size) {
    require_out(c);
    fs::create_directories(c.out);
    const auto images = synthetic_set(count, size, size, c.seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.ppm", i);
        write_pnm((fs::path(c.out) / name).string(), tensor_to_image(images[i]));
    }
    return 0;
}

int run_selftest(const Common& c) {
    int failures = 0;
    auto report = [&](const char* what, bool ok) {
        std::printf("%s %s\n", ok ? "PASS" : "FAIL", what);
        failures += !ok;
    };

    std::mt19937_64 rng(c.seed);
    bool coder_ok = true;
    for (int trial = 0; trial < 200 && coder_ok; ++trial) {
        std::vector<double> p(1 + rng() % 64);
        double s = 0;
        for (auto& v : p) s += (v = double(rng() % 1000 + 1));
        for (auto& v : p) v /= s;
        const std::vector<CdfTable> tables(rng() % 300, build_cdf(p));
        std::vector<std::size_t> sym(tables.size());
        for (auto& v : sym) v = rng() % p.size();
        const auto bytes = rc_encode(sym, tables);
        coder_ok = rc_decode(bytes, tables) == sym && bytes.size() <= ideal_codelength_bits(sym, tables) / 8 + 32;
    }
    report("range coder round trip", coder_ok);

    Model model = load_model(c);
    const Tensor img = synthetic_image(SyntheticKind::mixed, 48, 40, c.seed);
    const EncodeResult r = encode_image(img, model);
    report("codec round trip", decode_image(r.file, model).identical(r.reconstruction));
    report("rate estimate tracks file size",
           r.file.size() * 8.0 <= r.stats.rate_estimate_bits * 1.01 + 64 * 8);
    const auto ck = serialize_checkpoint(model);
    report("checkpoint round trip", serialize_checkpoint(deserialize_checkpoint(ck)) == ck);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned image codec with content-adaptive state-space blocks"};
    app.require_subcommand(1);
    Common c;
    auto common = [&](CLI::App* s, bool needs_out) {
        s->add_option("--config", c.config, "Preset name (desk, paper) or key=value config file");
        s->add_option("--checkpoint", c.checkpoint, "Checkpoint to load (default: fresh weights from --config/--seed)");
        s->add_option("--seed", c.seed, "Random seed");
        auto* o = s->add_option("--out", c.out, "Output path");
        if (needs_out) o->required();
    };

    TrainOptions topt;
    topt.steps = 1000;
    std::string dir, log_path, input, anchor, test;
    std::size_t synthetic = 0, count = 8, size = 64;
    int stage = 3;

    auto* train = app.add_subcommand("train", "Rate-distortion training on random crops");
    common(train, true);
    train->add_option("images", dir, "Directory of .ppm training images");
    train->add_option("--synthetic", synthetic, "Train on N procedural images instead of a directory");
    train->add_option("--steps", topt.steps, "Optimisation steps")->capture_default_str();
    train->add_option("--lambda", topt.rd_lambda, "Rate-distortion multiplier")->capture_default_str();
    train->add_option("--lr", topt.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--crop", topt.crop, "Crop size (multiple of 16)")->capture_default_str();
    train->add_option("--log", log_path, "Loss log CSV (default: <out>.log.csv)");

    auto* encode = app.add_subcommand("encode", "Compress a PPM image");
    common(encode, true);
    encode->add_option("input", input, "Input .ppm")->required();

    auto* decode = app.add_subcommand("decode", "Decompress to a PPM image");
    common(decode, true);
    decode->add_option("input", input, "Coded file")->required();

    auto* eval = app.add_subcommand("eval", "Per-image and mean bpp/PSNR over a directory");
    common(eval, false);
    eval->add_option("images", dir, "Directory of .ppm images")->required();

    auto* bd = app.add_subcommand("bdrate", "BD-rate of a test curve against an anchor, in percent");
    bd->add_option("anchor", anchor, "Anchor RD CSV")->required();
    bd->add_option("test", test, "Test RD CSV")->required();

    auto* erf = app.add_subcommand("erf", "Effective receptive field of the central latent as PGM");
    common(erf, true);
    erf->add_option("input", input, "Input .ppm")->required();

    auto* masks = app.add_subcommand("masks", "Cluster assignment masks of a CAM stage as PGMs");
    common(masks, true);
    masks->add_option("input", input, "Input .ppm")->required();
    masks->add_option("--stage", stage, "Stage number (3, 4 or 5)")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Write procedural test images");
    common(synth, true);
    synth->add_option("--count", count, "Number of images")->capture_default_str();
    synth->add_option("--size", size, "Image side length")->capture_default_str();

    auto* self = app.add_subcommand("selftest", "Quick end-to-end consistency checks");
    common(self, false);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return run_train(c, dir, synthetic, topt, log_path);
        if (*encode) return run_encode(c, input);
        if (*decode) return run_decode(c, input);
        if (*eval) return run_eval(c, dir);
        if (*bd) return run_bdrate(anchor, test);
        if (*erf) return run_erf(c, input);
        if (*masks) return run_masks(c, input, stage);
        if (*synth) return run_synth(c, count, size);
        if (*self) return run_selftest(c);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
