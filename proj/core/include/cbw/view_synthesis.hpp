#pragma once

#include "cbw/geometry.hpp"
#include "cbw/tensor.hpp"

namespace cbw {

struct WarpResult {
    Tensor warped;  // same channel count as the source, zero where invalid
    Tensor valid;   // [H,W] detached {0,1}
};

// Bilinear warp of `source` [C,H,W] at per-pixel coordinates produced by
// transform_and_project on the destination grid. valid = in_bounds AND
// validity_in (pass an undefined tensor to skip the extra mask).
WarpResult warp_map(const Tensor& source, const Tensor& coord_x, const Tensor& coord_y,
                    const Tensor& validity_in);

// Spec-shaped overload with packed coords [H,W,2].
WarpResult warp_map(const Tensor& source, const Tensor& coords_packed,
                    const Tensor& validity_in);

// Convenience for single-channel maps ([H,W] in, [H,W] out).
WarpResult warp_scalar_map(const Tensor& source, const Tensor& coord_x,
                           const Tensor& coord_y, const Tensor& validity_in);

// All maps of one warp direction, living on the destination frame's grid.
struct DirectionSynthesis {
    ProjectionResult projection;  // coords, flow u, transformed depth, z-valid
    WarpResult image;             // synthesized destination image
    WarpResult sampled_flow;      // opposite-direction flow resampled here, [2,H,W]
    WarpResult interp_depth;      // opposite frame's predicted depth resampled, [H,W]
    Tensor valid;                 // in_bounds AND z-valid, detached
};

struct BidirBundle {
    DirectionSynthesis to_target;     // reconstructs the target frame (target grid)
    DirectionSynthesis to_reference;  // reconstructs the reference frame (ref grid)
    PoseSE3 pose_target_to_ref;
    PoseSE3 pose_ref_to_target;  // exact inverse, never a second network pass
};

BidirBundle synthesize_bidirectional(const Tensor& image_target, const Tensor& image_ref,
                                     const Tensor& depth_target, const Tensor& depth_ref,
                                     const Intrinsics& k, const PoseSE3& pose_target_to_ref,
                                     double z_min = kDefaultZMin);

// Packs flow components into a [2,H,W] channel map.
Tensor pack_flow(const Tensor& flow_x, const Tensor& flow_y);

}  // namespace cbw
