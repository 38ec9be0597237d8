#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cbw/geometry.hpp"
#include "cbw/tensor.hpp"
#include "cbw/view_synthesis.hpp"

namespace cbw {

// Thrown when a loss term evaluates to a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Per-direction weights of every term. "tgt" entries weight the direction
// that reconstructs the target frame, "ref" entries the inverted direction.
struct LambdaConfig {
    double p_tgt = 1.0, p_ref = 1.0;
    double occ_tgt = 1.0, occ_ref = 1.0;
    double aw_tgt = 1.0, aw_ref = 1.0;
    double dsc_tgt = 0.5, dsc_ref = 0.5;
    double feat_tgt = 0.05, feat_ref = 0.05;
    double d_tgt = 0.01, d_ref = 0.01;
    double f_tgt = 0.001, f_ref = 0.001;

    static LambdaConfig preset(const std::string& name);
    static const std::vector<std::string>& preset_names();
    std::vector<double> as_vector() const;
};

struct LossConstants {
    double alpha = 0.85;        // SSIM/robust-error blend
    double epsilon = 0.01;      // robust error floor
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
    double alpha1 = 0.01;       // occlusion threshold, relative part
    double alpha2 = 0.5;        // occlusion threshold, absolute part
    int ssim_window = 3;
    double z_min = kDefaultZMin;
};

struct LossReport {
    double total = 0.0;
    double cbw = 0.0;
    double photo = 0.0;
    double feat = 0.0;
    double dsc = 0.0;
    double smooth = 0.0;
    Tensor total_tensor;  // rank-0, backward() entry point

    // Full-scale diagnostics from the first reference pair, all detached.
    Tensor occlusion_to_target, occlusion_to_reference;
    Tensor weight_to_target, weight_to_reference;
    Tensor depth_diff_to_target, depth_diff_to_reference;
    Tensor valid_to_target, valid_to_reference;

    std::vector<std::string> flags;  // e.g. empty-weight directions

    void append_log(std::ostream& os, long iter) const;
};

// ---- per-term operations ----------------------------------------------------

// Per-pixel SSIM over a local box window (reflection padded), per channel.
Tensor ssim(const Tensor& a, const Tensor& b, const LossConstants& c);

// sqrt((m-n)^2 + eps^2), smooth everywhere.
Tensor robust_error(const Tensor& m, const Tensor& n, double eps);

// Channel-averaged alpha*(1-SSIM)/2 + (1-alpha)*ERF, shape [H,W].
Tensor photometric_pair(const Tensor& image, const Tensor& synthesized,
                        const LossConstants& c);

// Replaces the zeros at invalid warp pixels with the destination image so the
// windowed similarity sees no synthetic edge; the loss weighting still
// excludes those pixels.
Tensor neutral_fill(const WarpResult& warp, const Tensor& destination_image);

// 1 where a < b else 0; detached.
Tensor indicator_less(const Tensor& a, const Tensor& b);

// Marks pixels whose forward/backward camera flows disagree:
// occluded = ||u + u_hat||^2 >= alpha1 (||u||^2 + ||u_hat||^2) + alpha2.
// Flows are [2,H,W]; the result is detached.
Tensor camera_flow_occlusion(const Tensor& flow, const Tensor& sampled_opposite_flow,
                             const LossConstants& c);

// ERF(z_transformed, d_interp) / (z_transformed + d_interp) where valid, else 0.
Tensor depth_structure_diff(const Tensor& z_transformed, const Tensor& d_interp,
                            const Tensor& valid, const LossConstants& c);

struct DscResult {
    Tensor value;  // rank-0
    bool empty_to_target = false;
    bool empty_to_reference = false;
};

// lambda_dsc-weighted mean of each direction's diff map over its valid pixels.
DscResult dsc_loss(const Tensor& diff_to_target, const Tensor& valid_to_target,
                   const Tensor& diff_to_reference, const Tensor& valid_to_reference,
                   const LambdaConfig& lambdas);

// W = clamp(1 - lambda_aw * diff, 0, 1), detached.
Tensor adaptive_weights(const Tensor& diff, double lambda_aw);

struct WeightedPhotometricResult {
    Tensor value;  // rank-0
    bool empty_to_target = false;
    bool empty_to_reference = false;
};

// Bidirectional weighted photometric loss over a synthesis bundle.
WeightedPhotometricResult biw_photometric(const Tensor& image_target,
                                          const Tensor& image_ref, const BidirBundle& bundle,
                                          const LambdaConfig& lambdas,
                                          const LossConstants& c);

// Elementwise-L1 mean over valid positions, both directions.
Tensor feature_perception_loss(const Tensor& f_target, const Tensor& f_target_synth,
                               const Tensor& valid_target, const Tensor& f_ref,
                               const Tensor& f_ref_synth, const Tensor& valid_ref,
                               const LambdaConfig& lambdas);

// mean(|dmap| * exp(-|dimage|)) with channel-averaged gradients. When
// normalize_by_mean is set the map is divided by its mean first (depth maps).
Tensor edge_aware_smoothness(const Tensor& map, const Tensor& image,
                             bool normalize_by_mean);

// ---- composition --------------------------------------------------------------

struct FrameOutputs {
    std::vector<Tensor> depths;  // scale k: [H/2^k, W/2^k], k = 0..2
    Tensor features;             // [C, H/2, W/2]
};

struct CbwInputs {
    Tensor target_image;  // [3,H,W], values in [0,1]
    std::vector<Tensor> ref_images;
    FrameOutputs target;
    std::vector<FrameOutputs> refs;
    std::vector<PoseSE3> poses_to_refs;  // target->ref, one per reference
    Intrinsics k;                        // full resolution
};

// Full objective: scale-averaged photometric/depth-consistency terms, feature
// perception at the encoder's native scale, edge-aware smoothness, averaged
// over reference frames. Throws NumericError on a non-finite term.
LossReport cbw_total(const CbwInputs& in, const LambdaConfig& lambdas,
                     const LossConstants& c);

}  // namespace cbw
