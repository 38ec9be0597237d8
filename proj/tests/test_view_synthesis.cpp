#include <doctest.h>

#include <cmath>

#include "cbw/synth.hpp"
#include "cbw/view_synthesis.hpp"
#include "test_support.hpp"

using namespace cbw;
using cbw::test::random_tensor;

namespace {

// Relative pose a->b from cam-to-world trajectory entries.
RigidTransform relative_pose(const RigidTransform& pose_a, const RigidTransform& pose_b) {
    return pose_b.inverse().compose(pose_a);
}

double masked_mean_abs_diff(const Tensor& a, const Tensor& b, const Tensor& mask) {
    const int c = a.dim(0);
    const std::size_t plane = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (mask.at(p) == 0.0) continue;
        for (int ci = 0; ci < c; ++ci)
            sum += std::fabs(a.at(static_cast<std::size_t>(ci) * plane + p) -
                             b.at(static_cast<std::size_t>(ci) * plane + p));
        n += static_cast<std::size_t>(c);
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

Tensor and_masks(const Tensor& a, const Tensor& b) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = (a.at(i) != 0.0 && b.at(i) != 0.0) ? 1.0 : 0.0;
    return Tensor::from_data(a.shape(), std::move(v));
}

}  // namespace

TEST_CASE("warp with identity grid returns the source") {
    Rng rng(51);
    const int h = 6, w = 8;
    Tensor src = random_tensor({3, h, w}, rng, 0.0, 1.0);
    const PixelGrid grid = PixelGrid::make(h, w);
    WarpResult r = warp_map(src, grid.x, grid.y, Tensor());
    for (std::size_t i = 0; i < src.numel(); ++i) CHECK(r.warped.at(i) == src.at(i));
    for (std::size_t i = 0; i < r.valid.numel(); ++i) CHECK(r.valid.at(i) == 1.0);
}

TEST_CASE("half-pixel shift averages neighbours on a ramp") {
    const int h = 4, w = 6;
    std::vector<double> ramp;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ramp.push_back(static_cast<double>(x));
    Tensor src = Tensor::from_data({1, h, w}, ramp);
    const PixelGrid grid = PixelGrid::make(h, w);
    Tensor shifted_x = add(grid.x, 0.5);
    WarpResult r = warp_map(src, shifted_x, grid.y, Tensor());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x)
            CHECK(r.warped.at(static_cast<std::size_t>(y) * w + x) ==
                  doctest::Approx(x + 0.5));
}

TEST_CASE("packed-coords overload matches the split one") {
    Rng rng(53);
    const int h = 5, w = 7;
    Tensor src = random_tensor({2, h, w}, rng);
    Tensor cx = random_tensor({h, w}, rng, 0.0, w - 1.0);
    Tensor cy = random_tensor({h, w}, rng, 0.0, h - 1.0);
    WarpResult split = warp_map(src, cx, cy, Tensor());
    WarpResult packed = warp_map(src, stack_last(cx, cy), Tensor());
    for (std::size_t i = 0; i < split.warped.numel(); ++i)
        CHECK(split.warped.at(i) == packed.warped.at(i));
}

TEST_CASE("static scene warp reproduces the target frame") {
    SceneSpec spec;
    spec.moving_object = false;
    const Scene scene = generate_scene(spec, 101);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;
    const int ref = tgt + 1;

    const PixelGrid grid = PixelGrid::make(spec.height, spec.width);
    const RigidTransform rel = relative_pose(snip.gt_poses[tgt], snip.gt_poses[ref]);
    const PoseSE3 pose = PoseSE3::from_numeric(rel);
    const CameraPoints pts = pixel_to_camera(snip.k, snip.gt_depths[tgt], grid);
    const ProjectionResult pr = transform_and_project(snip.k, pts, pose, grid);
    const WarpResult warped = warp_map(snip.frames[ref], pr.coord_x, pr.coord_y, pr.valid);

    const Tensor covisible = and_masks(warped.valid, snip.visibility[tgt][ref]);
    double coverage = 0.0;
    for (std::size_t i = 0; i < covisible.numel(); ++i) coverage += covisible.at(i);
    CHECK(coverage > 0.5 * static_cast<double>(covisible.numel()));

    const double err = masked_mean_abs_diff(warped.warped, snip.frames[tgt], covisible);
    CHECK(err < 1e-3);
}

TEST_CASE("bidirectional bundle with identity pose and equal depths") {
    Rng rng(55);
    const int h = 8, w = 12;
    const Intrinsics k{16, 16, 6, 4};
    Tensor img_t = random_tensor({3, h, w}, rng, 0.0, 1.0);
    Tensor img_r = random_tensor({3, h, w}, rng, 0.0, 1.0);
    Tensor depth = Tensor::full({h, w}, 3.0);

    BidirBundle b = synthesize_bidirectional(img_t, img_r, depth, depth, k,
                                             PoseSE3::identity());
    for (std::size_t i = 0; i < img_r.numel(); ++i)
        CHECK(b.to_target.image.warped.at(i) == doctest::Approx(img_r.at(i)));
    for (std::size_t i = 0; i < b.to_target.projection.flow_x.numel(); ++i) {
        CHECK(std::fabs(b.to_target.projection.flow_x.at(i)) < 1e-9);
        CHECK(std::fabs(b.to_reference.projection.flow_y.at(i)) < 1e-9);
    }
    // Transformed depth equals the input depth under the identity.
    for (std::size_t i = 0; i < depth.numel(); ++i)
        CHECK(b.to_target.projection.depth.at(i) == depth.at(i));
}

TEST_CASE("returned inverse pose composes to the identity") {
    Rng rng(57);
    Tensor v = Tensor::from_data({6}, {0.2, -0.1, 0.15, 0.4, -0.3, 0.7});
    PoseSE3 pose = PoseSE3::from_vector(v);
    Tensor img = random_tensor({3, 8, 8}, rng);
    Tensor depth = Tensor::full({8, 8}, 2.0);
    const Intrinsics k{8, 8, 4, 4};
    BidirBundle b = synthesize_bidirectional(img, img, depth, depth, k, pose);
    const RigidTransform round =
        b.pose_target_to_ref.compose(b.pose_ref_to_target).numeric();
    for (int i = 0; i < 9; ++i)
        CHECK(std::fabs(round.r[i] - (i % 4 == 0 ? 1.0 : 0.0)) < 1e-10);
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(round.t[i]) < 1e-10);
}

TEST_CASE("bundle maps live on the destination grid") {
    SceneSpec spec;
    const Scene scene = generate_scene(spec, 103);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;
    const PoseSE3 pose = PoseSE3::from_numeric(
        relative_pose(snip.gt_poses[tgt], snip.gt_poses[tgt + 1]));
    BidirBundle b = synthesize_bidirectional(snip.frames[tgt], snip.frames[tgt + 1],
                                             snip.gt_depths[tgt], snip.gt_depths[tgt + 1],
                                             snip.k, pose);
    const std::vector<int> hw{spec.height, spec.width};
    CHECK(b.to_target.projection.flow_x.shape() == hw);
    CHECK(b.to_target.valid.shape() == hw);
    CHECK(b.to_target.interp_depth.warped.shape() == hw);
    CHECK(b.to_target.image.warped.shape() == std::vector<int>{3, spec.height, spec.width});
    CHECK(b.to_target.sampled_flow.warped.shape() ==
          std::vector<int>{2, spec.height, spec.width});
    CHECK(b.to_reference.projection.flow_x.shape() == hw);
}

namespace {

double max_flow_sum(const SampleSnippet& snip, int tgt, int ref, int h, int w,
                    std::size_t* counted_out) {
    const PoseSE3 pose =
        PoseSE3::from_numeric(relative_pose(snip.gt_poses[tgt], snip.gt_poses[ref]));
    BidirBundle b = synthesize_bidirectional(snip.frames[tgt], snip.frames[ref],
                                             snip.gt_depths[tgt], snip.gt_depths[ref],
                                             snip.k, pose);
    const Tensor mask = and_masks(b.to_target.sampled_flow.valid,
                                  snip.visibility[tgt][ref]);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    double max_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        if (mask.at(p) == 0.0) continue;
        const double sx =
            b.to_target.projection.flow_x.at(p) + b.to_target.sampled_flow.warped.at(p);
        const double sy = b.to_target.projection.flow_y.at(p) +
                          b.to_target.sampled_flow.warped.at(plane + p);
        max_sum = std::max({max_sum, std::fabs(sx), std::fabs(sy)});
        ++counted;
    }
    if (counted_out) *counted_out = counted;
    return max_sum;
}

}  // namespace

TEST_CASE("flow antisymmetry on a static scene") {
    // The identity u_b + sampled(u_f) = 0 is exact when the flow field is
    // linear in pixel coordinates (bilinear resampling then introduces no
    // error): a fronto-parallel plane under pure translation.
    SceneSpec spec;
    spec.motion_rotation_deg = 0.0;
    TexturedPlane wall;
    wall.normal = {0.0, 0.0, 1.0};
    wall.offset = 10.0;
    spec.custom_planes = {wall};
    const Scene scene = generate_scene(spec, 107);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;

    std::size_t counted = 0;
    const double exact = max_flow_sum(snip, tgt, tgt - 1, spec.height, spec.width, &counted);
    CHECK(counted > static_cast<std::size_t>(spec.height) * spec.width / 2);
    CHECK(exact < 1e-6);

    // On a generic curved scene the identity holds up to the flow field's
    // interpolation error.
    SceneSpec generic;
    const Scene scene2 = generate_scene(generic, 113);
    const SampleSnippet snip2 = render_snippet(scene2, generic.height, generic.width);
    const double approx =
        max_flow_sum(snip2, snip2.target_index, snip2.target_index + 1, generic.height,
                     generic.width, nullptr);
    CHECK(approx < 5e-3);
}

TEST_CASE("exact pose beats perturbed poses by a wide margin") {
    SceneSpec spec;
    const Scene scene = generate_scene(spec, 109);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;
    const int ref = tgt + 1;
    const PixelGrid grid = PixelGrid::make(spec.height, spec.width);
    const RigidTransform rel = relative_pose(snip.gt_poses[tgt], snip.gt_poses[ref]);

    const auto residual = [&](const PoseSE3& pose) {
        const CameraPoints pts = pixel_to_camera(snip.k, snip.gt_depths[tgt], grid);
        const ProjectionResult pr = transform_and_project(snip.k, pts, pose, grid);
        const WarpResult warped = warp_map(snip.frames[ref], pr.coord_x, pr.coord_y, pr.valid);
        const Tensor mask = and_masks(warped.valid, snip.visibility[tgt][ref]);
        return masked_mean_abs_diff(warped.warped, snip.frames[tgt], mask);
    };

    const double exact = residual(PoseSE3::from_numeric(rel));
    Rng rng(61);
    for (int trial = 0; trial < 5; ++trial) {
        const double angle = 5.0 * 3.14159265358979323846 / 180.0;
        RigidTransform perturbed = RigidTransform::identity();
        {
            const double a = rng.uniform(-angle, angle);
            const double b2 = rng.uniform(-angle, angle);
            std::vector<double> v{a, b2, 0, 0.05 * rng.uniform(-1.0, 1.0),
                                  0.05 * rng.uniform(-1.0, 1.0), 0};
            perturbed = PoseSE3::from_vector(Tensor::from_data({6}, v)).numeric();
        }
        const double noisy = residual(PoseSE3::from_numeric(perturbed.compose(rel)));
        CHECK(noisy > 10.0 * exact);
    }
}

TEST_CASE("valid mask is monotone under border shrink") {
    Rng rng(63);
    const int h = 10, w = 14;
    Tensor src = random_tensor({1, h, w}, rng);
    const PixelGrid grid = PixelGrid::make(h, w);
    // Coordinates pushing outside by up to 3 pixels.
    Tensor cx = add(grid.x, 2.49);
    WarpResult base = warp_map(src, cx, grid.y, Tensor());
    // Pulling coordinates towards the interior can only grow the valid set.
    Tensor cx_shrunk = add(grid.x, 1.49);
    WarpResult shrunk = warp_map(src, cx_shrunk, grid.y, Tensor());
    for (std::size_t i = 0; i < base.valid.numel(); ++i)
        if (base.valid.at(i) == 1.0) CHECK(shrunk.valid.at(i) == 1.0);
}

TEST_CASE("warp zeroes rejected pixels") {
    Rng rng(65);
    const int h = 4, w = 4;
    Tensor src = random_tensor({2, h, w}, rng, 0.5, 1.0);
    const PixelGrid grid = PixelGrid::make(h, w);
    std::vector<double> vin(static_cast<std::size_t>(h) * w, 1.0);
    vin[5] = 0.0;
    Tensor validity = Tensor::from_data({h, w}, vin);
    WarpResult r = warp_map(src, grid.x, grid.y, validity);
    CHECK(r.valid.at(5) == 0.0);
    CHECK(r.warped.at(5) == 0.0);
    CHECK(r.warped.at(static_cast<std::size_t>(h) * w + 5) == 0.0);
    CHECK(r.warped.at(6) == src.at(6));
}
