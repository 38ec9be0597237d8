#include <doctest.h>

#include <cmath>

#include "cbw/geometry.hpp"
#include "test_support.hpp"

using namespace cbw;
using cbw::test::finite_difference_check;
using cbw::test::random_tensor;

namespace {

constexpr double kPi = 3.14159265358979323846;

PoseSE3 random_pose(Rng& rng, double angle_range = 0.5, double trans_range = 2.0) {
    std::vector<double> v(6);
    for (int i = 0; i < 3; ++i) v[static_cast<std::size_t>(i)] = rng.uniform(-angle_range, angle_range);
    for (int i = 3; i < 6; ++i) v[static_cast<std::size_t>(i)] = rng.uniform(-trans_range, trans_range);
    return PoseSE3::from_vector(Tensor::from_data({6}, v));
}

double max_abs(const RigidTransform& m, const RigidTransform& ref) {
    double e = 0.0;
    for (int i = 0; i < 9; ++i) e = std::max(e, std::fabs(m.r[i] - ref.r[i]));
    for (int i = 0; i < 3; ++i) e = std::max(e, std::fabs(m.t[i] - ref.t[i]));
    return e;
}

}  // namespace

TEST_CASE("pose from zero vector is the identity") {
    PoseSE3 p = PoseSE3::from_vector(Tensor::zeros({6}));
    CHECK(max_abs(p.numeric(), RigidTransform::identity()) < 1e-15);
}

TEST_CASE("single-axis rotation and pure translation") {
    PoseSE3 rz = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, kPi / 2, 0, 0, 0}));
    const RigidTransform m = rz.numeric();
    const double expect[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) CHECK(m.r[i] == doctest::Approx(expect[i]).epsilon(1e-12));

    PoseSE3 t = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, 0, 1, 2, 3}));
    CHECK(t.trans_value(0) == 1.0);
    CHECK(t.trans_value(1) == 2.0);
    CHECK(t.trans_value(2) == 3.0);
}

TEST_CASE("rotation block stays orthonormal") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const RigidTransform m = random_pose(rng, 2.0, 3.0).numeric();
        // R^T R == I
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m.r[k * 3 + i] * m.r[k * 3 + j];
                CHECK(std::fabs(s - (i == j ? 1.0 : 0.0)) < 1e-10);
            }
        // det(R) == 1
        const double det = m.r[0] * (m.r[4] * m.r[8] - m.r[5] * m.r[7]) -
                           m.r[1] * (m.r[3] * m.r[8] - m.r[5] * m.r[6]) +
                           m.r[2] * (m.r[3] * m.r[7] - m.r[4] * m.r[6]);
        CHECK(det == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("pose inverse examples and round trip") {
    PoseSE3 id = PoseSE3::identity();
    CHECK(max_abs(id.inverse().numeric(), RigidTransform::identity()) < 1e-15);

    PoseSE3 t = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, 0, 1.5, -2.0, 0.25}));
    const RigidTransform ti = t.inverse().numeric();
    CHECK(ti.t[0] == doctest::Approx(-1.5));
    CHECK(ti.t[1] == doctest::Approx(2.0));
    CHECK(ti.t[2] == doctest::Approx(-0.25));

    Rng rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        PoseSE3 p = random_pose(rng, 2.5, 4.0);
        const RigidTransform round = p.compose(p.inverse()).numeric();
        CHECK(max_abs(round, RigidTransform::identity()) < 1e-10);
    }
}

TEST_CASE("pixel_to_camera closed forms") {
    const Intrinsics k{100.0, 100.0, 50.0, 50.0};
    const PixelGrid grid = PixelGrid::make(101, 151);

    Tensor depth = Tensor::full({101, 151}, 5.0);
    CameraPoints pts = pixel_to_camera(k, depth, grid);
    // Principal point ray.
    const std::size_t pp = 50 * 151 + 50;
    CHECK(pts.x.at(pp) == doctest::Approx(0.0));
    CHECK(pts.y.at(pp) == doctest::Approx(0.0));
    CHECK(pts.z.at(pp) == doctest::Approx(5.0));

    // f=100, c=(50,50), pixel (150,50), d=2 -> (2,0,2).
    Tensor depth2 = Tensor::full({101, 151}, 2.0);
    CameraPoints pts2 = pixel_to_camera(k, depth2, grid);
    const std::size_t idx = 50 * 151 + 150;
    CHECK(pts2.x.at(idx) == doctest::Approx(2.0));
    CHECK(pts2.y.at(idx) == doctest::Approx(0.0));
    CHECK(pts2.z.at(idx) == doctest::Approx(2.0));

    // Zero depth maps to the origin.
    Tensor depth0 = Tensor::zeros({101, 151});
    CameraPoints pts0 = pixel_to_camera(k, depth0, grid);
    CHECK(pts0.x.at(idx) == 0.0);
    CHECK(pts0.y.at(idx) == 0.0);
    CHECK(pts0.z.at(idx) == 0.0);
}

TEST_CASE("transform_and_project identity and optical axis") {
    const Intrinsics k{64, 64, 16, 8};
    const int h = 16, w = 32;
    const PixelGrid grid = PixelGrid::make(h, w);
    Rng rng(35);
    Tensor depth = random_tensor({h, w}, rng, 2.0, 6.0);
    CameraPoints pts = pixel_to_camera(k, depth, grid);
    ProjectionResult pr = transform_and_project(k, pts, PoseSE3::identity(), grid);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            CHECK(std::fabs(pr.coord_x.at(i) - x) < 1e-9);
            CHECK(std::fabs(pr.coord_y.at(i) - y) < 1e-9);
            CHECK(std::fabs(pr.flow_x.at(i)) < 1e-9);
            CHECK(std::fabs(pr.flow_y.at(i)) < 1e-9);
            CHECK(pr.depth.at(i) == depth.at(i));  // exact under identity
            CHECK(pr.valid.at(i) == 1.0);
        }

    // A point on the optical axis lands on the principal point.
    Tensor d0 = Tensor::zeros({1, 1});
    const PixelGrid g1 = PixelGrid::make(1, 1);
    CameraPoints origin = pixel_to_camera(k, d0, g1);
    PoseSE3 push = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, 0, 0, 0, 3.0}));
    ProjectionResult axis = transform_and_project(k, origin, push, g1);
    CHECK(axis.coord_x.at(0) == doctest::Approx(k.cx));
    CHECK(axis.coord_y.at(0) == doctest::Approx(k.cy));
}

TEST_CASE("pure translation flow closed form") {
    const Intrinsics k{80, 80, 20, 10};
    const int h = 20, w = 40;
    const PixelGrid grid = PixelGrid::make(h, w);
    const double z = 4.0, tx = 0.5;
    Tensor depth = Tensor::full({h, w}, z);
    CameraPoints pts = pixel_to_camera(k, depth, grid);
    PoseSE3 pose = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, 0, tx, 0, 0}));
    ProjectionResult pr = transform_and_project(k, pts, pose, grid);
    const double expected_flow = k.fx * tx / z;
    for (std::size_t i = 0; i < pr.flow_x.numel(); ++i) {
        CHECK(pr.flow_x.at(i) == doctest::Approx(expected_flow).epsilon(1e-12));
        CHECK(std::fabs(pr.flow_y.at(i)) < 1e-12);
    }
}

TEST_CASE("near-zero transformed depth flagged invalid without exception") {
    const Intrinsics k{64, 64, 8, 8};
    const PixelGrid grid = PixelGrid::make(16, 16);
    Tensor depth = Tensor::full({16, 16}, 1.0);
    CameraPoints pts = pixel_to_camera(k, depth, grid);
    // Push every point behind the camera.
    PoseSE3 pose = PoseSE3::from_vector(Tensor::from_data({6}, {0, 0, 0, 0, 0, -2.0}));
    ProjectionResult pr = transform_and_project(k, pts, pose, grid);
    for (std::size_t i = 0; i < pr.valid.numel(); ++i) CHECK(pr.valid.at(i) == 0.0);
}

TEST_CASE("projection round trip reproduces the pixel grid") {
    const Intrinsics k{64, 48, 31.5, 15.5};
    const int h = 32, w = 64;
    const PixelGrid grid = PixelGrid::make(h, w);
    Rng rng(37);
    Tensor depth = random_tensor({h, w}, rng, 1.0, 9.0);
    ProjectionResult pr =
        transform_and_project(k, pixel_to_camera(k, depth, grid), PoseSE3::identity(), grid);
    double max_err = 0.0;
    for (std::size_t i = 0; i < depth.numel(); ++i) {
        max_err = std::max(max_err, std::fabs(pr.coord_x.at(i) - grid.x.at(i)));
        max_err = std::max(max_err, std::fabs(pr.coord_y.at(i) - grid.y.at(i)));
    }
    CHECK(max_err < 1e-9);
}

TEST_CASE("pose chain is differentiable to the source parameters") {
    Rng rng(39);
    Tensor v = Tensor::from_data(
        {6}, {0.21, -0.17, 0.33, 0.8, -0.4, 0.6}, true);
    const Intrinsics k{32, 32, 8, 8};
    const PixelGrid grid = PixelGrid::make(8, 16);
    Tensor depth = random_tensor({8, 16}, rng, 2.0, 5.0, true);

    const auto loss = [&] {
        PoseSE3 pose = PoseSE3::from_vector(v);
        CameraPoints pts = pixel_to_camera(k, depth, grid);
        ProjectionResult pr = transform_and_project(k, pts, pose, grid);
        return reduce_mean(add(add(square(pr.flow_x), square(pr.flow_y)), square(pr.depth)));
    };
    CHECK(finite_difference_check(v, loss).max_rel_error < 1e-4);
    CHECK(finite_difference_check(depth, loss).max_rel_error < 1e-4);

    // Through the inverse as well.
    const auto inv_loss = [&] {
        PoseSE3 pose = PoseSE3::from_vector(v).inverse();
        CameraPoints pts = pixel_to_camera(k, depth, grid);
        ProjectionResult pr = transform_and_project(k, pts, pose, grid);
        return reduce_mean(add(square(pr.flow_x), square(pr.flow_y)));
    };
    CHECK(finite_difference_check(v, inv_loss).max_rel_error < 1e-4);
}

TEST_CASE("numeric rigid transform helpers agree with tensor poses") {
    Rng rng(41);
    PoseSE3 a = random_pose(rng);
    PoseSE3 b = random_pose(rng);
    const RigidTransform composed = a.compose(b).numeric();
    const RigidTransform composed_numeric = a.numeric().compose(b.numeric());
    CHECK(max_abs(composed, composed_numeric) < 1e-12);

    const RigidTransform inv = a.inverse().numeric();
    const RigidTransform inv_numeric = a.numeric().inverse();
    CHECK(max_abs(inv, inv_numeric) < 1e-12);
}
