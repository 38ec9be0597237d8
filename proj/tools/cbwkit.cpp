#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cbw/dataset.hpp"
#include "cbw/image_io.hpp"
#include "cbw/losses.hpp"
#include "cbw/metrics.hpp"
#include "cbw/networks.hpp"
#include "cbw/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

cbw::TrainConfig resolve_config(const CommonArgs& args) {
    cbw::TrainConfig cfg;
    if (!args.config_path.empty()) cfg = cbw::load_train_config(args.config_path);
    // CLI flags override file values.
    if (!args.preset.empty()) cfg.set("preset", args.preset);
    if (args.has_seed) cfg.seed = args.seed;
    return cfg;
}

void load_networks(const std::string& ckpt, const cbw::NetworkConfig& net,
                   cbw::DepthNetParams& depth, cbw::CameraNetParams& camera) {
    auto fresh = cbw::init_params(net, 0);
    depth = std::move(fresh.first);
    camera = std::move(fresh.second);
    cbw::load_checkpoint(ckpt, depth, camera);
}

void print_eval(const cbw::EvalSummary& s) {
    std::cout << cbw::format_metrics_table(s.depth_mean);
    std::cout << cbw::format_metrics(s.depth_mean);
    std::printf("ate_mean=%.9g\nate_std=%.9g\nate_rms=%.9g\nate_identity_mean=%.9g\n",
                s.ate_mean, s.ate_std, s.ate_rms, s.ate_identity_mean);
    std::printf("snippets=%d\nframes=%ld\n", s.snippet_count, s.frames_evaluated);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised depth and ego-motion toolkit"};
    app.require_subcommand(1);

    CommonArgs common;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset");
    std::string gen_out = "data";
    cbw::DataGenSpec gen_spec;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--scenes", gen_spec.scene_count, "Number of scenes");
    gen->add_option("--frames", gen_spec.frames_per_scene, "Frames per scene (odd)");
    gen->add_option("--height", gen_spec.height, "Image height");
    gen->add_option("--width", gen_spec.width, "Image width");
    gen->add_option("--moving-fraction", gen_spec.moving_fraction,
                    "Fraction of scenes with a moving object");
    gen->add_option("--planes", gen_spec.plane_count, "Planes per scene");
    bool gen_no_patches = false;
    gen->add_flag("--no-textureless", gen_no_patches, "Disable textureless patches");
    std::uint64_t gen_seed = 1;
    gen->add_option("--seed", gen_seed, "Generator seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train DepthNet and CameraNet");
    std::string train_data = "data";
    std::string train_out = "model.ckpt";
    std::string loss_log_path;
    long train_iterations = -1;
    bool train_deterministic = false;
    train_cmd->add_option("--data", train_data, "Dataset directory");
    train_cmd->add_option("--out", train_out, "Checkpoint output path");
    train_cmd->add_option("--config", common.config_path, "Flat key=value config file");
    train_cmd->add_option("--preset", common.preset,
                          "Lambda preset (baseline|bi|bi-occ|bi-occ-dsc|bi-occ-dsc-aw|full)");
    train_cmd->add_option("--seed", common.seed, "Training seed")
        ->each([&common](const std::string&) { common.has_seed = true; });
    train_cmd->add_option("--iterations", train_iterations, "Iteration count override");
    train_cmd->add_option("--loss-log", loss_log_path, "Loss log output path");
    train_cmd->add_flag("--deterministic", train_deterministic,
                        "Force fully serial execution");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_data = "data";
    std::string eval_ckpt = "model.ckpt";
    std::string eval_image_dir;
    double eval_cap = 80.0;
    eval_cmd->add_option("--data", eval_data, "Dataset directory");
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint path");
    eval_cmd->add_option("--cap", eval_cap, "Depth cap");
    eval_cmd->add_option("--out", eval_image_dir, "Optional directory for depth/error images");
    eval_cmd->add_option("--config", common.config_path, "Flat key=value config file");

    // render-depth
    auto* render_cmd = app.add_subcommand("render-depth", "Emit depth/error images");
    std::string render_data = "data";
    std::string render_ckpt = "model.ckpt";
    std::string render_out = "renders";
    double render_cap = 80.0;
    render_cmd->add_option("--data", render_data, "Dataset directory");
    render_cmd->add_option("--ckpt", render_ckpt, "Checkpoint path");
    render_cmd->add_option("--out", render_out, "Output directory");
    render_cmd->add_option("--cap", render_cap, "Depth cap");
    render_cmd->add_option("--config", common.config_path, "Flat key=value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (gen->parsed()) {
            gen_spec.seed = gen_seed;
            gen_spec.textureless_patches = !gen_no_patches;
            cbw::generate_dataset(gen_out, gen_spec);
            std::cout << "dataset written to " << gen_out << "\n";
            return kExitOk;
        }
        if (train_cmd->parsed()) {
            cbw::TrainConfig cfg = resolve_config(common);
            if (train_iterations >= 0) cfg.iterations = train_iterations;
            if (train_deterministic) cfg.deterministic = true;
            const cbw::Dataset data = cbw::Dataset::open(train_data);
            std::ofstream log;
            if (!loss_log_path.empty()) {
                log.open(loss_log_path);
                if (!log) throw std::runtime_error("cannot open loss log " + loss_log_path);
            }
            const cbw::TrainResult result =
                cbw::train(cfg, data, train_out, loss_log_path.empty() ? nullptr : &log);
            if (result.aborted_non_finite) {
                std::cerr << "training aborted: non-finite loss; last-good checkpoint kept\n";
                return kExitNumeric;
            }
            std::cout << "trained " << result.iterations_run << " iterations, checkpoint "
                      << result.checkpoint_path << "\n";
            return kExitOk;
        }
        if (eval_cmd->parsed() || render_cmd->parsed()) {
            const bool render = render_cmd->parsed();
            cbw::TrainConfig cfg = resolve_config(common);
            const std::string data_dir = render ? render_data : eval_data;
            const std::string ckpt = render ? render_ckpt : eval_ckpt;
            const cbw::Dataset data = cbw::Dataset::open(data_dir);
            cbw::DepthNetParams depth;
            cbw::CameraNetParams camera;
            load_networks(ckpt, cfg.net, depth, camera);
            cbw::EvalOptions opts;
            opts.cap = render ? render_cap : eval_cap;
            opts.emit_images = render || !eval_image_dir.empty();
            opts.image_dir = render ? render_out : eval_image_dir;
            const cbw::EvalSummary summary = cbw::evaluate(depth, camera, data, opts);
            print_eval(summary);
            return kExitOk;
        }
    } catch (const cbw::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}
