#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cbw/tensor.hpp"

namespace cbw {

struct NetworkConfig {
    std::vector<int> encoder_widths{8, 16, 32, 64, 64};
    std::vector<int> decoder_widths{64, 32, 16, 16, 8};
    std::vector<int> camera_widths{8, 16, 32, 64, 64, 64, 64};
    int n_ref = 1;                 // references per CameraNet pass
    double depth_alpha = 10.0;     // depth = 1 / (alpha * sigmoid + beta)
    double depth_beta = 0.01;
    double depth_head_bias = -1.0; // initial bias of the depth heads
    double pose_scale = 0.05;      // scaling of raw pose regression output
};

struct ConvParams {
    Tensor weight;  // [F,C,kH,kW]
    Tensor bias;    // [F]
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

struct DepthNetParams {
    NetworkConfig config;
    std::vector<ConvParams> encoder;  // stride-2 stages
    std::vector<ConvParams> decoder;  // up stages
    std::vector<ConvParams> heads;    // depth heads, scales 0..2
    void for_each(const ParamVisitor& visit);
    DepthNetParams clone(bool requires_grad) const;
};

struct CameraNetParams {
    NetworkConfig config;
    std::vector<ConvParams> convs;  // 7 stride-2 stages
    ConvParams out;                 // 1x1 conv to 6*n_ref channels
    void for_each(const ParamVisitor& visit);
    CameraNetParams clone(bool requires_grad) const;
};

// Deterministic fan-in-scaled uniform initialization; the final CameraNet
// layer is zero-initialized so a fresh model predicts identity poses.
std::pair<DepthNetParams, CameraNetParams> init_params(const NetworkConfig& config,
                                                       std::uint64_t seed);

struct DepthNetOutputs {
    std::vector<Tensor> depths;  // [H,W], [H/2,W/2], [H/4,W/4]
    Tensor features;             // max-resolution encoder map, [C,H/2,W/2]
};

// image [3,H,W] with H, W divisible by 32.
DepthNetOutputs depthnet_forward(const DepthNetParams& params, const Tensor& image);

// stacked [3*(1+n_ref),H,W], target frame first. Returns n_ref 6-vectors
// (alpha, beta, gamma, tx, ty, tz), already scaled by pose_scale.
std::vector<Tensor> cameranet_forward(const CameraNetParams& params, const Tensor& stacked);

// Instrumentation: number of cameranet_forward invocations (thread-safe).
long cameranet_forward_count();
void reset_cameranet_forward_count();

// Checkpoint file: header "CBWKIT-CKPT v1\n", then per tensor a
// little-endian record: u32 name length, name bytes, u32 rank, u32 dims,
// f32 data. Tensors appear in for_each order, DepthNet first.
void save_checkpoint(const std::string& path, DepthNetParams& depth,
                     CameraNetParams& camera);
void load_checkpoint(const std::string& path, DepthNetParams& depth,
                     CameraNetParams& camera);

}  // namespace cbw
