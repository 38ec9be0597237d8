#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbw/geometry.hpp"
#include "cbw/synth.hpp"
#include "cbw/tensor.hpp"

namespace cbw {

struct DataGenSpec {
    int scene_count = 8;
    int frames_per_scene = 5;
    int height = 64;
    int width = 128;
    double moving_fraction = 0.5;  // fraction of scenes with a moving object
    bool textureless_patches = true;
    int plane_count = 2;
    double motion_translation = 0.012;
    double motion_rotation_deg = 0.4;
    std::uint64_t seed = 1;
};

// Writes scenes in the on-disk layout:
//   <out>/manifest.txt
//   <out>/scene_<k>/frame_<i>.ppm
//   <out>/scene_<k>/frame_<i>.depth.pgm16
//   <out>/scene_<k>/poses.txt           (row-major 3x4 cam-to-world per frame)
//   <out>/scene_<k>/intrinsics.txt      (fx fy cx cy)
//   <out>/scene_<k>/visibility_<i>_<j>.pgm
void generate_dataset(const std::string& out_dir, const DataGenSpec& spec);

struct LoadedSnippet {
    std::vector<Tensor> images;            // [3,H,W]
    std::vector<Tensor> gt_depths;         // [H,W]
    std::vector<RigidTransform> gt_poses;  // cam-to-world, snippet frame 0
    int target_index = 0;
};

class Dataset {
public:
    static Dataset open(const std::string& root);

    int snippet_count() const { return static_cast<int>(snippets_.size()); }
    int scene_count() const { return static_cast<int>(scene_dirs_.size()); }
    int height() const { return height_; }
    int width() const { return width_; }
    const Intrinsics& intrinsics() const { return k_; }
    const std::string& root() const { return root_; }

    LoadedSnippet load(int snippet_index) const;
    int snippet_scene(int snippet_index) const;
    Tensor load_visibility(int scene, int frame_i, int frame_j) const;

private:
    struct SnippetRef {
        int scene = 0;
        int first_frame = 0;
        int length = 0;
    };
    std::string root_;
    Intrinsics k_;
    int height_ = 0;
    int width_ = 0;
    std::vector<std::string> scene_dirs_;
    std::vector<SnippetRef> snippets_;
};

}  // namespace cbw
