#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cbw/dataset.hpp"
#include "cbw/image_io.hpp"
#include "cbw/synth.hpp"
#include "cbw/view_synthesis.hpp"
#include "test_support.hpp"

using namespace cbw;

namespace {

std::string temp_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("fronto-parallel plane renders constant depth") {
    SceneSpec spec;
    spec.motion_translation = 0.0;
    spec.motion_rotation_deg = 0.0;
    TexturedPlane wall;
    wall.normal = {0, 0, 1};
    wall.offset = 10.0;
    spec.custom_planes = {wall};
    const Scene scene = generate_scene(spec, 401);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    for (std::size_t i = 0; i < snip.gt_depths[0].numel(); ++i)
        CHECK(snip.gt_depths[0].at(i) == doctest::Approx(10.0).epsilon(1e-12));
    // Static single plane: co-viewing frames see everything.
    for (std::size_t i = 0; i < snip.visibility[0][1].numel(); ++i)
        CHECK(snip.visibility[0][1].at(i) == 1.0);
}

TEST_CASE("same seed reproduces the scene exactly") {
    SceneSpec spec;
    spec.moving_object = true;
    const Scene a = generate_scene(spec, 403);
    const Scene b = generate_scene(spec, 403);
    const SampleSnippet sa = render_snippet(a, spec.height, spec.width);
    const SampleSnippet sb = render_snippet(b, spec.height, spec.width);
    for (int f = 0; f < spec.frame_count; ++f) {
        CHECK(sa.frames[f].values() == sb.frames[f].values());
        CHECK(sa.gt_depths[f].values() == sb.gt_depths[f].values());
    }
}

TEST_CASE("slanted plane depth is a ray-plane closed form") {
    SceneSpec spec;
    spec.motion_translation = 0.0;
    spec.motion_rotation_deg = 0.0;
    TexturedPlane slanted;
    // n . X = offset with a slant in x.
    slanted.normal = {0.2, 0.0, 1.0};
    slanted.offset = 8.0;
    spec.custom_planes = {slanted};
    const Scene scene = generate_scene(spec, 405);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);

    const Intrinsics& k = spec.k;
    for (int y = 0; y < spec.height; y += 7)
        for (int x = 0; x < spec.width; x += 11) {
            const double rx = (x - k.cx) / k.fx;
            const double expect = 8.0 / (0.2 * rx + 1.0);
            CHECK(snip.gt_depths[0].at(static_cast<std::size_t>(y) * spec.width + x) ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("degenerate plane set is rejected") {
    SceneSpec spec;
    TexturedPlane side_only;
    side_only.normal = {1.0, 0.0, 0.0};  // parallel to the optical axis
    side_only.offset = 5.0;
    spec.custom_planes = {side_only};
    CHECK_THROWS_WITH_AS(generate_scene(spec, 407),
                         doctest::Contains("degenerate"), std::runtime_error);

    TexturedPlane zero;
    zero.normal = {0.0, 0.0, 0.0};
    spec.custom_planes = {zero};
    CHECK_THROWS(generate_scene(spec, 409));
}

TEST_CASE("moving rectangle occludes background pixels") {
    SceneSpec spec;
    spec.moving_object = true;
    const Scene scene = generate_scene(spec, 411);
    REQUIRE(scene.has_object);
    const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
    const int tgt = snip.target_index;

    // The object is visible in the target frame.
    const int object_id = static_cast<int>(scene.planes.size());
    std::size_t object_pixels = 0;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (raycast(scene, tgt, x, y).surface == object_id) ++object_pixels;
    CHECK(object_pixels > 100);

    // Pixels on or revealed by the moving object are flagged not-visible.
    const Tensor vis = snip.visibility[tgt][tgt + 1];
    std::size_t occluded = 0;
    for (std::size_t i = 0; i < vis.numel(); ++i)
        if (vis.at(i) == 0.0) ++occluded;
    CHECK(occluded >= object_pixels / 2);

    // Same planes, textures, and trajectory, object removed: less occlusion.
    Scene static_scene = scene;
    static_scene.has_object = false;
    const SampleSnippet static_snip = render_snippet(static_scene, spec.height, spec.width);
    std::size_t static_occluded = 0;
    const Tensor svis = static_snip.visibility[tgt][tgt + 1];
    for (std::size_t i = 0; i < svis.numel(); ++i)
        if (svis.at(i) == 0.0) ++static_occluded;
    CHECK(static_occluded < occluded);
}

TEST_CASE("gt warp consistency invariant over several seeds") {
    for (const std::uint64_t seed : {501u, 502u, 503u}) {
        SceneSpec spec;
        const Scene scene = generate_scene(spec, seed);
        const SampleSnippet snip = render_snippet(scene, spec.height, spec.width);
        const int tgt = snip.target_index;
        const int ref = tgt + 1;

        const PixelGrid grid = PixelGrid::make(spec.height, spec.width);
        const RigidTransform rel =
            snip.gt_poses[ref].inverse().compose(snip.gt_poses[tgt]);
        const CameraPoints pts = pixel_to_camera(snip.k, snip.gt_depths[tgt], grid);
        const ProjectionResult pr =
            transform_and_project(snip.k, pts, PoseSE3::from_numeric(rel), grid);
        const WarpResult warped =
            warp_map(snip.frames[ref], pr.coord_x, pr.coord_y, pr.valid);

        double err_sum = 0.0;
        std::size_t n = 0;
        const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
        for (std::size_t p = 0; p < plane; ++p) {
            if (warped.valid.at(p) == 0.0 || snip.visibility[tgt][ref].at(p) == 0.0)
                continue;
            for (int c = 0; c < 3; ++c)
                err_sum += std::fabs(warped.warped.at(static_cast<std::size_t>(c) * plane + p) -
                                     snip.frames[tgt].at(static_cast<std::size_t>(c) * plane + p));
            n += 3;
        }
        CAPTURE(seed);
        REQUIRE(n > 0);
        CHECK(err_sum / static_cast<double>(n) < 1e-3);
    }
}

TEST_CASE("dataset round trip preserves content") {
    const std::string dir = temp_dir("cbw_dataset_test");
    DataGenSpec spec;
    spec.scene_count = 2;
    spec.frames_per_scene = 5;
    spec.seed = 11;
    generate_dataset(dir, spec);

    const Dataset data = Dataset::open(dir);
    CHECK(data.snippet_count() == 2);
    CHECK(data.height() == 64);
    CHECK(data.width() == 128);

    const LoadedSnippet snip = data.load(0);
    CHECK(snip.images.size() == 5);
    CHECK(snip.target_index == 2);
    CHECK(snip.images[0].shape() == std::vector<int>{3, 64, 128});
    CHECK(snip.gt_depths[0].shape() == std::vector<int>{64, 128});

    // Frame 0 pose is the identity after rebasing.
    const RigidTransform& p0 = snip.gt_poses[0];
    for (int i = 0; i < 9; ++i) CHECK(p0.r[i] == doctest::Approx(i % 4 == 0 ? 1.0 : 0.0));
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(p0.t[i]) < 1e-15);

    // Depth survives the 16-bit quantisation to 1/256.
    SceneSpec sspec;
    sspec.plane_count = spec.plane_count;
    sspec.frame_count = spec.frames_per_scene;
    sspec.k = data.intrinsics();
    const Tensor vis = data.load_visibility(0, 2, 3);
    CHECK(vis.shape() == std::vector<int>{64, 128});
    for (std::size_t i = 0; i < vis.numel(); ++i)
        CHECK((vis.at(i) == 0.0 || vis.at(i) == 1.0));

    std::filesystem::remove_all(dir);
}

TEST_CASE("dataset generation is byte-deterministic") {
    const std::string dir_a = temp_dir("cbw_dataset_det_a");
    const std::string dir_b = temp_dir("cbw_dataset_det_b");
    DataGenSpec spec;
    spec.scene_count = 2;
    spec.seed = 7;
    generate_dataset(dir_a, spec);
    generate_dataset(dir_b, spec);

    const auto slurp = [](const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        REQUIRE(is);
        return std::string(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
    };
    for (const char* rel :
         {"/manifest.txt", "/scene_000/frame_0.ppm", "/scene_000/frame_0.depth.pgm16",
          "/scene_000/poses.txt", "/scene_001/visibility_0_4.pgm"}) {
        CAPTURE(rel);
        CHECK(slurp(dir_a + rel) == slurp(dir_b + rel));
    }
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("image io formats") {
    const std::string dir = temp_dir("cbw_imageio_test");
    std::filesystem::create_directories(dir);
    Rng rng(91);
    Tensor img = cbw::test::random_tensor({3, 6, 9}, rng, 0.0, 1.0);
    write_ppm(dir + "/t.ppm", img);
    Tensor back = read_ppm(dir + "/t.ppm");
    CHECK(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::fabs(back.at(i) - img.at(i)) <= 0.5 / 255.0 + 1e-12);

    Tensor depth = cbw::test::random_tensor({6, 9}, rng, 0.5, 40.0);
    write_depth_pgm16(dir + "/d.pgm16", depth);
    Tensor depth_back = read_depth_pgm16(dir + "/d.pgm16");
    for (std::size_t i = 0; i < depth.numel(); ++i)
        CHECK(std::fabs(depth_back.at(i) - depth.at(i)) <= 0.5 / 256.0 + 1e-12);

    std::vector<double> mv{0, 1, 1, 0, 1, 0};
    Tensor mask = Tensor::from_data({2, 3}, mv);
    write_mask_pgm(dir + "/m.pgm", mask);
    Tensor mask_back = read_mask_pgm(dir + "/m.pgm");
    for (std::size_t i = 0; i < mask.numel(); ++i) CHECK(mask_back.at(i) == mask.at(i));

    std::filesystem::remove_all(dir);
}
