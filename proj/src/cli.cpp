#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rwf/network.hpp"
#include "rwf/toolkit.hpp"
#include "rwf/trainer.hpp"
#include "rwf/verify.hpp"

namespace rwf {

namespace {

ModelConfig preset_config(const std::string& name) {
    if (name == "desk") return ModelConfig::desk();
    if (name == "rwf_t") return ModelConfig::rwf_t();
    if (name == "rwf_s") return ModelConfig::rwf_s();
    if (name == "rwf_b") return ModelConfig::rwf_b();
    throw ConfigError("unknown preset '" + name + "'");
}

void load_model_params(Model& model, const std::string& ckpt_path) {
    auto loaded = load_checkpoint(ckpt_path);
    auto& params = model.params();
    if (loaded.size() != params.size())
        throw FormatError("checkpoint " + ckpt_path + " holds " + std::to_string(loaded.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    for (auto& [key, p] : params) {
        auto it = loaded.find(key);
        if (it == loaded.end()) throw FormatError("checkpoint missing parameter " + key);
        if (it->second.shape() != p.shape())
            throw FormatError("checkpoint parameter " + key + " has shape " +
                              shape_str(it->second.shape()) + ", model expects " +
                              shape_str(p.shape()));
        p.vec() = it->second.vec();
    }
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    RunConfig rc = parse_run_config(config_path);
    DatasetIndex idx = index_dataset(data_dir);
    if (idx.pairs.empty()) throw DataError("train: dataset " + data_dir + " is empty");
    std::vector<std::pair<Tensor, Tensor>> data;
    for (const auto& [in, tg] : idx.pairs) data.emplace_back(load_image(in), load_image(tg));

    std::filesystem::create_directories(out_dir);
    std::printf("train: preset=%s steps=%d batch=%d patch=%d lr=[%g,%g] alpha=%g lambda=%g "
                "msr=%d augment=%d clip=%g seed=%llu pairs=%zu\n",
                rc.preset.c_str(), rc.steps, rc.batch, rc.patch, rc.lr_start, rc.lr_end, rc.alpha,
                rc.lambda, rc.msr_enabled ? 1 : 0, rc.augment ? 1 : 0, rc.clip_norm,
                static_cast<unsigned long long>(rc.seed), data.size());

    Model model(preset_config(rc.preset), rc.seed);
    TrainConfig tc;
    tc.steps = rc.steps;
    tc.batch = rc.batch;
    tc.patch = rc.patch;
    tc.sched = {rc.lr_start, rc.lr_end, rc.steps};
    tc.weights.alpha = rc.alpha;
    tc.weights.lambda = rc.lambda;
    tc.msr_enabled = rc.msr_enabled;
    tc.augment = rc.augment;
    tc.clip_norm = rc.clip_norm;
    tc.ckpt_every = rc.ckpt_every;
    tc.seed = rc.seed;
    tc.out_dir = out_dir;
    auto log = train_loop(model, data, tc);
    for (std::size_t i = 0; i < log.size(); ++i)
        if (i == 0 || (i + 1) % 10 == 0 || i + 1 == log.size())
            std::printf("step %zu lr %.6g total %.6g l1 %.6g fft %.6g\n", i + 1, log[i].lr,
                        log[i].report.total, log[i].report.l1, log[i].report.fft);
    std::printf("checkpoint: %s/final.rwfc\n", out_dir.c_str());
    return 0;
}

void infer_one(Model& model, const std::string& in_path, const std::string& out_path) {
    Tensor img = load_image(in_path);
    NoGrad ng;
    ModelOutput out = model.forward(img);
    save_image(out.restored, out_path);
    std::printf("%s -> %s (psnr vs input %.2f dB)\n", in_path.c_str(), out_path.c_str(),
                psnr(out.restored, img));
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& output,
              const std::string& preset) {
    Model model(preset_config(preset), 0);
    load_model_params(model, ckpt);
    namespace fs = std::filesystem;
    if (fs::is_directory(input)) {
        fs::create_directories(output);
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file()) names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        for (const auto& n : names)
            infer_one(model, (fs::path(input) / n).string(), (fs::path(output) / n).string());
    } else {
        infer_one(model, input, output);
    }
    return 0;
}

int cmd_analyze(const std::string& ckpt, const std::string& input, const std::string& out_csv,
                const std::string& preset) {
    Model model(preset_config(preset), 0);
    load_model_params(model, ckpt);
    Tensor img = load_image(input);
    NoGrad ng;
    ModelOutput out = model.forward(img, true);
    write_attn_csv(out.record, img.dim(1), img.dim(2), out_csv);
    std::printf("aggregate distance %.17g\n",
                attn_distance(out.record, img.dim(1), img.dim(2)));
    std::printf("wrote %s\n", out_csv.c_str());
    return 0;
}

int cmd_count(const std::string& config_path, const std::string& hw, bool itemize) {
    RunConfig rc = config_path.empty() ? RunConfig{} : parse_run_config(config_path);
    auto comma = hw.find(',');
    if (comma == std::string::npos) throw ConfigError("count: --hw expects H,W");
    int h = std::stoi(hw.substr(0, comma));
    int w = std::stoi(hw.substr(comma + 1));
    CostReport rep = count_params_flops(preset_config(rc.preset), h, w);
    std::printf("preset %s at %dx%d\n", rc.preset.c_str(), h, w);
    if (itemize)
        for (const auto& l : rep.layers)
            std::printf("  %-28s params %12llu  macs %16llu\n", l.name.c_str(),
                        static_cast<unsigned long long>(l.params),
                        static_cast<unsigned long long>(l.flops));
    std::printf("total params %llu (%.2f M)\n", static_cast<unsigned long long>(rep.params),
                static_cast<double>(rep.params) / 1e6);
    std::printf("total macs %llu (%.2f G)\n", static_cast<unsigned long long>(rep.flops),
                static_cast<double>(rep.flops) / 1e9);
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"routed-window image restoration toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir;
    auto* train = app.add_subcommand("train", "train a model on a paired dataset");
    train->add_option("--config", config_path, "run config file")->required();
    train->add_option("--data", data_dir, "dataset root with input/ and target/")->required();
    train->add_option("--out", out_dir, "output directory for checkpoints")->required();

    std::string ckpt, in_path, out_path, preset = "desk";
    auto* infer = app.add_subcommand("infer", "restore an image or a directory of images");
    infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer->add_option("--input", in_path, "input PNG or directory")->required();
    infer->add_option("--output", out_path, "output PNG or directory")->required();
    infer->add_option("--preset", preset, "model preset (desk|rwf_t|rwf_s|rwf_b)");

    std::string a_ckpt, a_input, a_csv, a_preset = "desk";
    auto* analyze = app.add_subcommand("analyze-attn", "attention-distance analyzer");
    analyze->add_option("--ckpt", a_ckpt, "checkpoint file")->required();
    analyze->add_option("--input", a_input, "input PNG")->required();
    analyze->add_option("--out", a_csv, "output CSV")->required();
    analyze->add_option("--preset", a_preset, "model preset");

    std::string c_config, c_hw = "256,256";
    bool c_item = false;
    auto* count = app.add_subcommand("count", "parameter and MAC report");
    count->add_option("--config", c_config, "run config (for the preset)");
    count->add_option("--hw", c_hw, "input size H,W");
    count->add_flag("--itemize", c_item, "print the per-layer breakdown");

    std::string filter;
    auto* verify = app.add_subcommand("verify", "run the oracle and invariant suite");
    verify->add_option("--filter", filter, "only checks whose name contains this");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(config_path, data_dir, out_dir);
        if (*infer) return cmd_infer(ckpt, in_path, out_path, preset);
        if (*analyze) return cmd_analyze(a_ckpt, a_input, a_csv, a_preset);
        if (*count) return cmd_count(c_config, c_hw, c_item);
        if (*verify) return run_verify(filter) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

} // namespace rwf
