#pragma once

#include <array>

#include "cbw/tensor.hpp"

namespace cbw {

// Pinhole parameters in pixels.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    Intrinsics scaled(double s) const { return {fx * s, fy * s, cx * s, cy * s}; }
};

// Plain-double rigid transform for non-differentiable paths (ray casting,
// trajectory bookkeeping). Maps x -> R x + t.
struct RigidTransform {
    std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<double, 3> t{0, 0, 0};

    static RigidTransform identity() { return {}; }
    RigidTransform inverse() const;
    RigidTransform compose(const RigidTransform& inner) const;  // this o inner
    std::array<double, 3> apply(const std::array<double, 3>& p) const;
    std::array<double, 3> rotate(const std::array<double, 3>& p) const;
};

// SE(3) pose backed by rank-0 tensors so that gradients reach the source
// parameters. Rotation entries are row-major.
struct PoseSE3 {
    std::array<Tensor, 9> rot;
    std::array<Tensor, 3> trans;

    static PoseSE3 identity();
    // v = (alpha, beta, gamma, tx, ty, tz); rotation = Rx(alpha) Ry(beta) Rz(gamma).
    static PoseSE3 from_vector(const Tensor& v6);
    static PoseSE3 from_numeric(const RigidTransform& m);

    PoseSE3 inverse() const;
    PoseSE3 compose(const PoseSE3& inner) const;  // this o inner

    double rot_value(int row, int col) const { return rot[row * 3 + col].item(); }
    double trans_value(int i) const { return trans[i].item(); }
    RigidTransform numeric() const;
};

// Constant pixel-coordinate grids (x right, y down), shape [H,W].
struct PixelGrid {
    Tensor x;
    Tensor y;
    static PixelGrid make(int h, int w);
};

// Back-projected camera-frame points, each component [H,W].
struct CameraPoints {
    Tensor x;
    Tensor y;
    Tensor z;
    Tensor packed() const;  // [H,W,3]
};

// x = d/fx (u - cx), y = d/fy (v - cy), z = d. d = 0 maps to the origin.
CameraPoints pixel_to_camera(const Intrinsics& k, const Tensor& depth,
                             const PixelGrid& grid);

struct ProjectionResult {
    Tensor coord_x;  // [H,W] projected pixel x
    Tensor coord_y;
    Tensor flow_x;   // coord - source grid
    Tensor flow_y;
    Tensor depth;    // [H,W] transformed z
    Tensor valid;    // [H,W] detached {0,1}: transformed z > z_min
    Tensor coords_packed() const;  // [H,W,2]
    Tensor flow_packed() const;    // [H,W,2]
};

constexpr double kDefaultZMin = 1e-3;

// Rigidly transforms `points` by `pose` and projects through `k`. Points with
// transformed depth <= z_min are flagged invalid instead of throwing.
ProjectionResult transform_and_project(const Intrinsics& k, const CameraPoints& points,
                                       const PoseSE3& pose, const PixelGrid& grid,
                                       double z_min = kDefaultZMin);

}  // namespace cbw
