#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cbw/dataset.hpp"
#include "cbw/losses.hpp"
#include "cbw/metrics.hpp"
#include "cbw/networks.hpp"

namespace cbw {

struct TrainConfig {
    std::string preset = "full";
    LambdaConfig lambdas = LambdaConfig::preset("full");
    int batch_size = 2;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double adam_epsilon = 1e-8;
    long iterations = 2000;
    int snippet_length = 5;
    std::uint64_t seed = 1;
    bool flip_augment = false;
    bool scale_crop_augment = false;
    double grad_clip_norm = 10.0;
    long checkpoint_every = 500;
    bool deterministic = false;  // serial sample evaluation
    NetworkConfig net;
    LossConstants constants;

    void set(const std::string& key, const std::string& value);  // throws on unknown
};

// Flat `key = value` file; '#' starts a comment.
TrainConfig load_train_config(const std::string& path);

struct TrainResult {
    long iterations_run = 0;
    double early_loss = 0.0;  // mean total over iterations [50, 150)
    double late_loss = 0.0;   // mean total over the final 100 iterations
    bool aborted_non_finite = false;
    std::string checkpoint_path;
};

// Joint optimisation of DepthNet and CameraNet with the composed objective.
// The middle frame of every snippet is the target; each target-reference pair
// passes through CameraNet once and contributes both directions via the pose
// inverse. Writes a checkpoint at the end and every checkpoint_every steps.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::string& out_checkpoint, std::ostream* loss_log);

struct EvalOptions {
    double cap = 80.0;
    bool emit_images = false;
    std::string image_dir;
};

struct EvalSummary {
    DepthEvalResult depth_mean;
    double ate_mean = 0.0;
    double ate_std = 0.0;
    double ate_rms = 0.0;           // RMS over snippets
    double ate_identity_mean = 0.0;  // identity-motion baseline
    int snippet_count = 0;
    long frames_evaluated = 0;
};

EvalSummary evaluate(const DepthNetParams& depth_params, const CameraNetParams& camera_params,
                     const Dataset& dataset, const EvalOptions& options);

// Per-snippet network outputs used by the loss; exposed for tests.
struct SnippetForward {
    FrameOutputs target;
    std::vector<FrameOutputs> refs;
    std::vector<PoseSE3> poses_to_refs;
    std::vector<Tensor> ref_images;
    Tensor target_image;
};

SnippetForward forward_snippet(const DepthNetParams& depth_params,
                               const CameraNetParams& camera_params,
                               const std::vector<Tensor>& images, int target_index);

}  // namespace cbw
