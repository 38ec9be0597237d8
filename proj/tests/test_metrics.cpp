#include <doctest.h>

#include <cmath>

#include "cbw/metrics.hpp"
#include "test_support.hpp"

using namespace cbw;
using cbw::test::random_tensor;

namespace {

RigidTransform translation(double x, double y, double z) {
    RigidTransform m;
    m.t = {x, y, z};
    return m;
}

}  // namespace

TEST_CASE("median scale") {
    Tensor gt = Tensor::from_data({2, 2}, {2, 4, 6, 8});
    Tensor mask = Tensor::full({2, 2}, 1.0);
    CHECK(median_scale(gt, gt, mask) == doctest::Approx(1.0));

    Tensor half = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(median_scale(half, gt, mask) == doctest::Approx(2.0));

    Tensor pred = Tensor::from_data({3, 1}, {3, 4, 5});  // median 4
    Tensor gt2 = Tensor::from_data({3, 1}, {9, 10, 11});  // median 10
    CHECK(median_scale(pred, gt2, Tensor::full({3, 1}, 1.0)) == doctest::Approx(2.5));

    CHECK_THROWS(median_scale(gt, gt, Tensor::zeros({2, 2})));
}

TEST_CASE("depth metrics closed forms") {
    Tensor mask1 = Tensor::full({1, 2}, 1.0);

    // Perfect prediction.
    Tensor gt = Tensor::from_data({1, 2}, {2, 4});
    DepthEvalResult perfect = depth_metrics(gt, gt, mask1, 80.0);
    CHECK(perfect.abs_rel == 0.0);
    CHECK(perfect.rmse == 0.0);
    CHECK(perfect.d1 == 1.0);

    // Hand-computed two-pixel case.
    Tensor pred = Tensor::from_data({1, 2}, {1, 4});
    DepthEvalResult two = depth_metrics(pred, gt, mask1, 80.0);
    CHECK(two.abs_rel == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(two.rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(two.sq_rel == doctest::Approx(0.25).epsilon(1e-12));  // (1/2 + 0)/2

    // Uniform 1.3x over-prediction: outside delta1, inside delta2.
    Rng rng(83);
    Tensor gt_rand = random_tensor({4, 4}, rng, 1.0, 10.0);
    std::vector<double> scaled = gt_rand.values();
    for (double& v : scaled) v *= 1.3;
    DepthEvalResult uniform = depth_metrics(Tensor::from_data({4, 4}, scaled), gt_rand,
                                            Tensor::full({4, 4}, 1.0), 80.0);
    CHECK(uniform.d1 == 0.0);
    CHECK(uniform.d2 == 1.0);
    CHECK(uniform.d3 == 1.0);

    // Monotone accuracy thresholds.
    CHECK(uniform.d1 <= uniform.d2);
    CHECK(uniform.d2 <= uniform.d3);

    // Cap excludes deep ground truth, clamp handles tiny predictions.
    Tensor gt_deep = Tensor::from_data({1, 3}, {2.0, 90.0, 4.0});
    Tensor pred_deep = Tensor::from_data({1, 3}, {2.0, 90.0, 1e-9});
    DepthEvalResult capped =
        depth_metrics(pred_deep, gt_deep, Tensor::full({1, 3}, 1.0), 80.0);
    CHECK(capped.valid_count == 2);
    CHECK(capped.abs_rel == doctest::Approx((0.0 + (4.0 - 1e-3) / 4.0) / 2.0).epsilon(1e-9));

    CHECK_THROWS(depth_metrics(gt, gt, Tensor::zeros({1, 2}), 80.0));
}

TEST_CASE("metrics invariant to global prediction scale after alignment") {
    Rng rng(85);
    Tensor gt = random_tensor({8, 8}, rng, 1.0, 20.0);
    Tensor pred = random_tensor({8, 8}, rng, 1.0, 20.0);
    Tensor mask = Tensor::full({8, 8}, 1.0);

    const auto aligned_metrics = [&](double s) {
        std::vector<double> v = pred.values();
        for (double& x : v) x *= s;
        Tensor scaled_pred = Tensor::from_data({8, 8}, v);
        const double scale = median_scale(scaled_pred, gt, mask);
        std::vector<double> a = scaled_pred.values();
        for (double& x : a) x *= scale;
        return depth_metrics(Tensor::from_data({8, 8}, a), gt, mask, 80.0);
    };
    const DepthEvalResult base = aligned_metrics(1.0);
    for (const double s : {0.1, 10.0}) {
        const DepthEvalResult r = aligned_metrics(s);
        CHECK(std::fabs(r.abs_rel - base.abs_rel) < 1e-12);
        CHECK(std::fabs(r.sq_rel - base.sq_rel) < 1e-12);
        CHECK(std::fabs(r.rmse - base.rmse) < 1e-12);
        CHECK(std::fabs(r.rmse_log - base.rmse_log) < 1e-12);
        CHECK(r.d1 == base.d1);
        CHECK(r.d2 == base.d2);
        CHECK(r.d3 == base.d3);
    }
}

TEST_CASE("ate closed forms") {
    std::vector<RigidTransform> gt;
    for (int i = 0; i < 5; ++i) gt.push_back(translation(0, 0, i));

    // Identical trajectories.
    CHECK(ate_snippet(gt, gt).rms == doctest::Approx(0.0));

    // Doubled translations are absorbed by the scale.
    std::vector<RigidTransform> twice;
    for (int i = 0; i < 5; ++i) twice.push_back(translation(0, 0, 2.0 * i));
    const AteResult doubled = ate_snippet(twice, gt);
    CHECK(doubled.rms == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(doubled.scale == doctest::Approx(0.5));

    // Fixed offset on frames 1..4, against an independently derived optimum.
    std::vector<RigidTransform> offset;
    offset.push_back(translation(0, 0, 0));
    for (int i = 1; i < 5; ++i) offset.push_back(translation(0.1, 0, i));
    const AteResult r = ate_snippet(offset, gt);
    // Closed form: s* = sum<t_p, t_g> / sum ||t_p||^2, then RMS residual.
    double dot = 0.0, norm = 0.0;
    for (int i = 1; i < 5; ++i) {
        dot += static_cast<double>(i) * i;           // z terms
        norm += 0.1 * 0.1 + static_cast<double>(i) * i;
    }
    const double s = dot / norm;
    double sq = 0.0;
    for (int i = 1; i < 5; ++i) {
        const double ex = s * 0.1;
        const double ez = s * i - i;
        sq += ex * ex + ez * ez;
    }
    const double expect = std::sqrt(sq / 5.0);
    CHECK(r.scale == doctest::Approx(s).epsilon(1e-12));
    CHECK(r.rms == doctest::Approx(expect).epsilon(1e-12));

    // Degenerate all-zero prediction falls back to scale 1 and is flagged.
    std::vector<RigidTransform> zeros(5);
    const AteResult z = ate_snippet(zeros, gt);
    CHECK(z.scale_fallback);
    CHECK(z.scale == 1.0);
    double rms_gt = 0.0;
    for (int i = 0; i < 5; ++i) rms_gt += static_cast<double>(i) * i;
    CHECK(z.rms == doctest::Approx(std::sqrt(rms_gt / 5.0)).epsilon(1e-12));
}

TEST_CASE("ate invariant to global prediction scaling") {
    Rng rng(87);
    std::vector<RigidTransform> gt, pred;
    gt.push_back(RigidTransform::identity());
    pred.push_back(RigidTransform::identity());
    for (int i = 1; i < 5; ++i) {
        gt.push_back(translation(rng.uniform(-1, 1), rng.uniform(-1, 1), i));
        pred.push_back(translation(rng.uniform(-1, 1), rng.uniform(-1, 1), i * 1.1));
    }
    const double base = ate_snippet(pred, gt).rms;
    for (const double s : {0.1, 10.0}) {
        std::vector<RigidTransform> scaled = pred;
        for (RigidTransform& p : scaled)
            for (double& t : p.t) t *= s;
        CHECK(std::fabs(ate_snippet(scaled, gt).rms - base) < 1e-12);
    }
}

TEST_CASE("metrics table formatting") {
    DepthEvalResult r;
    r.abs_rel = 0.1234;
    r.d1 = 0.9;
    const std::string table = format_metrics_table(r);
    CHECK(table.find("AbsRel") != std::string::npos);
    CHECK(table.find("0.1234") != std::string::npos);
    const std::string kv = format_metrics(r);
    CHECK(kv.find("abs_rel=0.1234") != std::string::npos);
    CHECK(kv.find("delta1=0.9") != std::string::npos);
}
