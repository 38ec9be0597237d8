#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cbw/geometry.hpp"
#include "cbw/tensor.hpp"

namespace cbw {

// Smooth multi-frequency sinusoid texture over world position. Amplitudes
// fade with distance so far regions stay below the bilinear sampling noise.
struct SinTexture {
    std::array<double, 3> amp{0.20, 0.12, 0.06};
    std::array<std::array<double, 3>, 3> freq{};   // per component
    std::array<std::array<double, 3>, 3> phase{};  // [component][channel]
    double distance_falloff = 2.2;
};

struct TexturedPlane {
    std::array<double, 3> normal{0, 0, 1};  // n . X = offset, camera-0 frame
    double offset = 1.0;
    SinTexture texture;
};

struct MovingRect {
    std::array<double, 3> center0{0.05, -0.03, 0.42};
    double half_w = 0.052;
    double half_h = 0.085;
    std::array<double, 3> velocity{0, 0, 0};  // per frame, world units
    SinTexture texture;
};

struct SceneSpec {
    int plane_count = 2;             // ground + back wall (+ side wall at 3)
    double texture_frequency = 1.0;  // scales sinusoid frequencies
    double motion_translation = 0.012;  // per-frame camera step, scene units
    double motion_rotation_deg = 0.4;   // per-frame camera rotation
    bool moving_object = false;
    double object_speed = 0.13;      // per-frame object displacement
    bool textureless_patch = false;
    int frame_count = 5;             // odd
    int height = 64;
    int width = 128;
    Intrinsics k{64.0, 64.0, 64.0, 32.0};
    std::vector<TexturedPlane> custom_planes;  // overrides generated layout
};

struct Scene {
    SceneSpec spec;
    std::vector<TexturedPlane> planes;
    bool has_object = false;
    MovingRect object;
    bool has_patch = false;
    std::array<double, 3> patch_center{0, 0, 0};
    double patch_r1 = 0.12, patch_r2 = 0.24;
    std::vector<RigidTransform> trajectory;  // cam-to-world, frame 0 = identity
};

// Deterministic scene synthesis; validates ray coverage (a plane set that
// leaves rays without a positive intersection is rejected).
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

struct SurfaceHit {
    bool hit = false;
    double depth = 0.0;  // camera-frame z
    int surface = -1;    // plane index, or planes.size() for the object
    std::array<double, 3> world{0, 0, 0};
};

// Nearest surface along the ray of continuous pixel (px,py) of `frame`.
SurfaceHit raycast(const Scene& scene, int frame, double px, double py);

std::array<double, 3> scene_albedo(const Scene& scene, const SurfaceHit& hit, int frame);

struct SampleSnippet {
    std::vector<Tensor> frames;      // [3,H,W], values in [0,1]
    std::vector<Tensor> gt_depths;   // [H,W]
    std::vector<RigidTransform> gt_poses;  // cam-to-world, frame-0-relative
    // visibility[i][j]: 1 where pixel of frame i is safely visible from j
    // (projection in frame, same surface in the 4-neighbourhood, depth match).
    std::vector<std::vector<Tensor>> visibility;
    int target_index = 0;
    Intrinsics k;
};

SampleSnippet render_snippet(const Scene& scene, int h, int w);

}  // namespace cbw
