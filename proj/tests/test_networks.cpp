#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "cbw/losses.hpp"
#include "cbw/networks.hpp"
#include "cbw/synth.hpp"
#include "cbw/trainer.hpp"
#include "test_support.hpp"

using namespace cbw;
using cbw::test::finite_difference_check;
using cbw::test::random_tensor;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    return random_tensor({3, h, w}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("depth constraint range") {
    const NetworkConfig cfg;
    // 1/(alpha*s + beta) endpoints.
    CHECK(1.0 / (cfg.depth_alpha * 0.0 + cfg.depth_beta) == doctest::Approx(100.0));
    CHECK(1.0 / (cfg.depth_alpha * 1.0 + cfg.depth_beta) ==
          doctest::Approx(1.0 / 10.01).epsilon(1e-12));

    auto [depth, camera] = init_params(cfg, 12);
    (void)camera;
    const DepthNetOutputs out = depthnet_forward(depth, random_image(64, 128, 5));
    for (const Tensor& d : out.depths)
        for (std::size_t i = 0; i < d.numel(); ++i) {
            CHECK(d.at(i) > 1.0 / 10.01 - 1e-12);
            CHECK(d.at(i) < 100.0 + 1e-12);
        }
}

TEST_CASE("depthnet output shapes per scale") {
    auto [depth, camera] = init_params(NetworkConfig{}, 3);
    (void)camera;
    const int h = 64, w = 128;
    const DepthNetOutputs out = depthnet_forward(depth, random_image(h, w, 7));
    REQUIRE(out.depths.size() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(out.depths[static_cast<std::size_t>(k)].dim(0) == h >> k);
        CHECK(out.depths[static_cast<std::size_t>(k)].dim(1) == w >> k);
    }
    CHECK(out.features.dim(0) == 8);
    CHECK(out.features.dim(1) == h / 2);
    CHECK(out.features.dim(2) == w / 2);

    CHECK_THROWS(depthnet_forward(depth, random_image(48, 128, 9)));
}

TEST_CASE("initialization is deterministic and camera head starts at identity") {
    const NetworkConfig cfg;
    auto [d1, c1] = init_params(cfg, 42);
    auto [d2, c2] = init_params(cfg, 42);
    bool equal = true;
    d1.for_each([&](const std::string& name, Tensor& t) {
        DepthNetParams& other = d2;
        other.for_each([&](const std::string& name2, Tensor& t2) {
            if (name == name2 && t.values() != t2.values()) equal = false;
        });
    });
    CHECK(equal);

    auto [d3, c3] = init_params(cfg, 43);
    bool different = false;
    if (d1.encoder[0].weight.values() != d3.encoder[0].weight.values()) different = true;
    CHECK(different);

    // Zero-initialized final layer -> identity poses.
    const Tensor stacked = concat(random_image(64, 128, 11), random_image(64, 128, 13), 0);
    const std::vector<Tensor> poses = cameranet_forward(c1, stacked);
    REQUIRE(poses.size() == 1);
    CHECK(poses[0].numel() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(poses[0].at(i) == 0.0);
    const RigidTransform m = PoseSE3::from_vector(poses[0]).numeric();
    for (int i = 0; i < 9; ++i) CHECK(m.r[i] == (i % 4 == 0 ? 1.0 : 0.0));
}

TEST_CASE("cameranet output channel count follows n_ref") {
    NetworkConfig cfg;
    cfg.n_ref = 2;
    auto [depth, camera] = init_params(cfg, 5);
    (void)depth;
    Rng rng(15);
    const Tensor stacked = random_tensor({9, 64, 128}, rng, 0.0, 1.0);
    const std::vector<Tensor> poses = cameranet_forward(camera, stacked);
    CHECK(poses.size() == 2);
    for (const Tensor& p : poses) CHECK(p.numel() == 6);

    CHECK_THROWS(cameranet_forward(camera, random_tensor({6, 64, 128}, rng)));
}

TEST_CASE("forward results are bitwise deterministic") {
    auto [d1, c1] = init_params(NetworkConfig{}, 77);
    const Tensor img = random_image(64, 128, 21);
    const DepthNetOutputs a = depthnet_forward(d1, img);
    const DepthNetOutputs b = depthnet_forward(d1, img);
    CHECK(a.depths[0].values() == b.depths[0].values());
    CHECK(a.features.values() == b.features.values());
}

TEST_CASE("depthnet parameter gradients match finite differences") {
    NetworkConfig cfg;
    auto [depth, camera] = init_params(cfg, 99);
    (void)camera;
    const Tensor img = random_image(32, 32, 23);

    const auto loss = [&] { return reduce_mean(depthnet_forward(depth, img).depths[0]); };

    // Leaves small enough for an exhaustive check.
    depth.encoder[0].bias.set_requires_grad(true);
    CHECK(finite_difference_check(depth.encoder[0].bias, loss).max_rel_error < 1e-4);
    depth.encoder[0].bias.set_requires_grad(false);

    depth.heads[0].weight.set_requires_grad(true);
    CHECK(finite_difference_check(depth.heads[0].weight, loss).max_rel_error < 1e-4);
    depth.heads[0].weight.set_requires_grad(false);

    depth.decoder[4].bias.set_requires_grad(true);
    CHECK(finite_difference_check(depth.decoder[4].bias, loss).max_rel_error < 1e-4);
    depth.decoder[4].bias.set_requires_grad(false);
}

TEST_CASE("every parameter receives gradient from the total loss") {
    SceneSpec spec;
    spec.moving_object = false;
    const Scene scene = generate_scene(spec, 301);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;

    auto [depth, camera] = init_params(NetworkConfig{}, 7);
    // The pose head starts at exact zero, which blocks gradient to the trunk
    // until the first optimizer step; probe connectivity at generic weights.
    {
        Rng rng(17);
        for (double& v : camera.out.weight.mutable_values()) v = rng.uniform(-0.05, 0.05);
        for (double& v : camera.out.bias.mutable_values()) v = rng.uniform(-0.01, 0.01);
    }
    DepthNetParams depth_train = depth.clone(true);
    CameraNetParams camera_train = camera.clone(true);

    Tape tape;
    Tape::Scope scope(tape);
    const std::vector<Tensor> images{snip.frames[tgt - 1], snip.frames[tgt],
                                     snip.frames[tgt + 1]};
    const SnippetForward fwd = forward_snippet(depth_train, camera_train, images, 1);
    CbwInputs inputs;
    inputs.target_image = fwd.target_image;
    inputs.ref_images = fwd.ref_images;
    inputs.target = fwd.target;
    inputs.refs = fwd.refs;
    inputs.poses_to_refs = fwd.poses_to_refs;
    inputs.k = snip.k;
    const LossReport rep = cbw_total(inputs, LambdaConfig::preset("full"), LossConstants{});
    backward(rep.total_tensor);

    const auto check_nonzero = [](const std::string& name, Tensor& t) {
        double peak = 0.0;
        for (double g : t.grad()) peak = std::max(peak, std::fabs(g));
        CAPTURE(name);
        CHECK(peak > 0.0);
    };
    depth_train.for_each(check_nonzero);
    camera_train.for_each(check_nonzero);
}

TEST_CASE("checkpoint round trip") {
    const std::string path = std::filesystem::temp_directory_path() /
                             "cbw_test_checkpoint.ckpt";
    NetworkConfig cfg;
    auto [depth, camera] = init_params(cfg, 1234);
    save_checkpoint(path, depth, camera);

    auto [depth2, camera2] = init_params(cfg, 999);
    load_checkpoint(path, depth2, camera2);

    // Values agree to f32 resolution, and a second save is byte-stable.
    bool close = true;
    depth.for_each([&](const std::string& name, Tensor& t) {
        depth2.for_each([&](const std::string& name2, Tensor& t2) {
            if (name != name2) return;
            for (std::size_t i = 0; i < t.numel(); ++i)
                if (std::fabs(t.at(i) - t2.at(i)) > 1e-6) close = false;
        });
    });
    CHECK(close);

    const std::string path2 = std::filesystem::temp_directory_path() /
                              "cbw_test_checkpoint2.ckpt";
    save_checkpoint(path2, depth2, camera2);
    // Reload of a reload is exact: values already lie on the f32 grid.
    auto [depth3, camera3] = init_params(cfg, 555);
    load_checkpoint(path2, depth3, camera3);
    bool exact = true;
    depth2.for_each([&](const std::string& name, Tensor& t) {
        depth3.for_each([&](const std::string& name2, Tensor& t2) {
            if (name == name2 && t.values() != t2.values()) exact = false;
        });
    });
    CHECK(exact);

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("cameranet forward counter") {
    auto [depth, camera] = init_params(NetworkConfig{}, 10);
    (void)depth;
    reset_cameranet_forward_count();
    const Tensor stacked = concat(random_image(64, 128, 31), random_image(64, 128, 33), 0);
    cameranet_forward(camera, stacked);
    cameranet_forward(camera, stacked);
    CHECK(cameranet_forward_count() == 2);
    reset_cameranet_forward_count();
    CHECK(cameranet_forward_count() == 0);
}
