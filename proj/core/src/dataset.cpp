#include "cbw/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbw/image_io.hpp"
#include "cbw/rng.hpp"

namespace cbw {

namespace fs = std::filesystem;

namespace {

std::string scene_dir_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03d", k);
    return buf;
}

void write_poses(const std::string& path, const std::vector<RigidTransform>& poses) {
    std::ofstream os(path);
    if (!os) fail("dataset: cannot write " + path);
    os.precision(17);
    for (const RigidTransform& p : poses) {
        for (int row = 0; row < 3; ++row) {
            for (int col = 0; col < 3; ++col) os << p.r[row * 3 + col] << " ";
            os << p.t[row];
            os << (row == 2 ? "\n" : " ");
        }
    }
}

std::vector<RigidTransform> read_poses(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("dataset: cannot open " + path);
    std::vector<RigidTransform> out;
    while (true) {
        RigidTransform p;
        bool ok = true;
        for (int row = 0; row < 3 && ok; ++row) {
            for (int col = 0; col < 3 && ok; ++col) ok = bool(is >> p.r[row * 3 + col]);
            if (ok) ok = bool(is >> p.t[row]);
        }
        if (!ok) break;
        out.push_back(p);
    }
    if (out.empty()) fail("dataset: no poses in " + path);
    return out;
}

}  // namespace

void generate_dataset(const std::string& out_dir, const DataGenSpec& spec) {
    if (spec.frames_per_scene < 1 || spec.frames_per_scene % 2 == 0)
        fail("generate_dataset: frames per scene must be odd");
    fs::create_directories(out_dir);

    std::ofstream manifest(out_dir + "/manifest.txt");
    if (!manifest) fail("generate_dataset: cannot write manifest");
    manifest << "CBWKIT-DATA v1\n";
    manifest << "height " << spec.height << "\n";
    manifest << "width " << spec.width << "\n";

    const int snippet_len = 5;
    int moving_emitted = 0;
    for (int k = 0; k < spec.scene_count; ++k) {
        SceneSpec sspec;
        sspec.plane_count = spec.plane_count;
        sspec.frame_count = spec.frames_per_scene;
        sspec.height = spec.height;
        sspec.width = spec.width;
        sspec.motion_translation = spec.motion_translation;
        sspec.motion_rotation_deg = spec.motion_rotation_deg;
        sspec.k = Intrinsics{static_cast<double>(spec.height), static_cast<double>(spec.height),
                             spec.width / 2.0, spec.height / 2.0};
        const int target_moving =
            static_cast<int>((k + 1) * spec.moving_fraction + 1e-9);
        sspec.moving_object = target_moving > moving_emitted;
        if (sspec.moving_object) ++moving_emitted;
        sspec.textureless_patch = spec.textureless_patches && (k % 3 == 2);

        const std::uint64_t scene_seed = spec.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(k);
        const Scene scene = generate_scene(sspec, scene_seed);
        const SampleSnippet snippet = render_snippet(scene, spec.height, spec.width);

        const std::string dir = out_dir + "/" + scene_dir_name(k);
        fs::create_directories(dir);
        for (int f = 0; f < spec.frames_per_scene; ++f) {
            write_ppm(dir + "/frame_" + std::to_string(f) + ".ppm", snippet.frames[f]);
            write_depth_pgm16(dir + "/frame_" + std::to_string(f) + ".depth.pgm16",
                              snippet.gt_depths[f]);
        }
        write_poses(dir + "/poses.txt", snippet.gt_poses);
        {
            std::ofstream os(dir + "/intrinsics.txt");
            os.precision(17);
            os << sspec.k.fx << " " << sspec.k.fy << " " << sspec.k.cx << " " << sspec.k.cy
               << "\n";
        }
        for (int i = 0; i < spec.frames_per_scene; ++i)
            for (int j = 0; j < spec.frames_per_scene; ++j) {
                if (i == j) continue;
                write_mask_pgm(dir + "/visibility_" + std::to_string(i) + "_" +
                                   std::to_string(j) + ".pgm",
                               snippet.visibility[i][j]);
            }
        for (int first = 0; first + snippet_len <= spec.frames_per_scene; ++first)
            manifest << "snippet " << scene_dir_name(k) << " " << first << " " << snippet_len
                     << "\n";
    }
    if (!manifest) fail("generate_dataset: manifest write failed");
}

Dataset Dataset::open(const std::string& root) {
    Dataset d;
    d.root_ = root;
    std::ifstream is(root + "/manifest.txt");
    if (!is) fail("dataset: cannot open manifest in " + root);
    std::string header;
    std::getline(is, header);
    if (header != "CBWKIT-DATA v1") fail("dataset: bad manifest header");

    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "height") {
            ls >> d.height_;
        } else if (key == "width") {
            ls >> d.width_;
        } else if (key == "snippet") {
            SnippetRef ref;
            std::string scene_dir;
            ls >> scene_dir >> ref.first_frame >> ref.length;
            if (!ls) fail("dataset: bad snippet line: " + line);
            int scene_index = -1;
            for (std::size_t i = 0; i < d.scene_dirs_.size(); ++i)
                if (d.scene_dirs_[i] == scene_dir) scene_index = static_cast<int>(i);
            if (scene_index < 0) {
                scene_index = static_cast<int>(d.scene_dirs_.size());
                d.scene_dirs_.push_back(scene_dir);
            }
            ref.scene = scene_index;
            d.snippets_.push_back(ref);
        } else {
            fail("dataset: unknown manifest key: " + key);
        }
    }
    if (d.snippets_.empty()) fail("dataset: manifest lists no snippets");

    std::ifstream ks(root + "/" + d.scene_dirs_[0] + "/intrinsics.txt");
    if (!ks) fail("dataset: missing intrinsics");
    ks >> d.k_.fx >> d.k_.fy >> d.k_.cx >> d.k_.cy;
    if (!ks) fail("dataset: bad intrinsics file");
    return d;
}

int Dataset::snippet_scene(int snippet_index) const {
    return snippets_[static_cast<std::size_t>(snippet_index)].scene;
}

LoadedSnippet Dataset::load(int snippet_index) const {
    const SnippetRef& ref = snippets_[static_cast<std::size_t>(snippet_index)];
    const std::string dir = root_ + "/" + scene_dirs_[static_cast<std::size_t>(ref.scene)];
    const std::vector<RigidTransform> scene_poses = read_poses(dir + "/poses.txt");
    if (static_cast<int>(scene_poses.size()) < ref.first_frame + ref.length)
        fail("dataset: poses shorter than snippet");

    LoadedSnippet out;
    out.target_index = ref.length / 2;
    const RigidTransform to_first =
        scene_poses[static_cast<std::size_t>(ref.first_frame)].inverse();
    for (int f = 0; f < ref.length; ++f) {
        const int scene_frame = ref.first_frame + f;
        out.images.push_back(read_ppm(dir + "/frame_" + std::to_string(scene_frame) + ".ppm"));
        out.gt_depths.push_back(
            read_depth_pgm16(dir + "/frame_" + std::to_string(scene_frame) + ".depth.pgm16"));
        out.gt_poses.push_back(
            to_first.compose(scene_poses[static_cast<std::size_t>(scene_frame)]));
    }
    return out;
}

Tensor Dataset::load_visibility(int scene, int frame_i, int frame_j) const {
    const std::string dir = root_ + "/" + scene_dirs_[static_cast<std::size_t>(scene)];
    Tensor m = read_mask_pgm(dir + "/visibility_" + std::to_string(frame_i) + "_" +
                             std::to_string(frame_j) + ".pgm");
    // Stored as 0/255; restore a crisp {0,1} mask.
    std::vector<double> v = m.values();
    for (double& x : v) x = x > 0.5 ? 1.0 : 0.0;
    return Tensor::from_data(m.shape(), std::move(v));
}

}  // namespace cbw
