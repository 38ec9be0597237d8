#include "cbw/synth.hpp"

#include <cmath>

#include "cbw/rng.hpp"

namespace cbw {

namespace {

constexpr double kNearClip = 0.005;
constexpr double kPi = 3.14159265358979323846;

RigidTransform euler_pose(double a, double b, double g, double tx, double ty, double tz) {
    const double sa = std::sin(a), ca = std::cos(a);
    const double sb = std::sin(b), cb = std::cos(b);
    const double sg = std::sin(g), cg = std::cos(g);
    RigidTransform m;
    m.r = {cb * cg,           -cb * sg,          sb,
           ca * sg + sa * sb * cg, ca * cg - sa * sb * sg, -sa * cb,
           sa * sg - ca * sb * cg, sa * cg + ca * sb * sg, ca * cb};
    m.t = {tx, ty, tz};
    return m;
}

SinTexture random_texture(Rng& rng, double frequency_scale) {
    SinTexture t;
    const double wavelengths[3] = {0.80, 0.45, 0.30};
    for (int c = 0; c < 3; ++c) {
        // Random direction, fixed magnitude per component.
        double dx = rng.uniform(-1.0, 1.0);
        double dy = rng.uniform(-1.0, 1.0);
        double dz = rng.uniform(-1.0, 1.0);
        const double n = std::sqrt(dx * dx + dy * dy + dz * dz) + 1e-9;
        const double mag = 2.0 * kPi / wavelengths[c] * frequency_scale;
        t.freq[c] = {dx / n * mag, dy / n * mag, dz / n * mag};
        for (int ch = 0; ch < 3; ++ch) t.phase[c][ch] = rng.uniform(0.0, 2.0 * kPi);
    }
    return t;
}

double texture_value(const SinTexture& t, const std::array<double, 3>& p, int channel,
                     double amp_scale) {
    const double r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    const double falloff = 1.0 / (1.0 + r2 / (t.distance_falloff * t.distance_falloff));
    double v = 0.5;
    for (int c = 0; c < 3; ++c) {
        const double arg = t.freq[c][0] * p[0] + t.freq[c][1] * p[1] + t.freq[c][2] * p[2] +
                           t.phase[c][channel];
        v += amp_scale * falloff * t.amp[c] * std::sin(arg);
    }
    return v;
}

double patch_amp_scale(const Scene& scene, const std::array<double, 3>& p) {
    if (!scene.has_patch) return 1.0;
    const double dx = p[0] - scene.patch_center[0];
    const double dy = p[1] - scene.patch_center[1];
    const double dz = p[2] - scene.patch_center[2];
    const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (d <= scene.patch_r1) return 0.0;
    if (d >= scene.patch_r2) return 1.0;
    const double s = (d - scene.patch_r1) / (scene.patch_r2 - scene.patch_r1);
    return s * s * (3.0 - 2.0 * s);
}

std::array<double, 3> object_center(const Scene& scene, int frame) {
    return {scene.object.center0[0] + frame * scene.object.velocity[0],
            scene.object.center0[1] + frame * scene.object.velocity[1],
            scene.object.center0[2] + frame * scene.object.velocity[2]};
}

}  // namespace

SurfaceHit raycast(const Scene& scene, int frame, double px, double py) {
    const Intrinsics& k = scene.spec.k;
    const std::array<double, 3> dir_cam = {(px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0};
    const RigidTransform& pose = scene.trajectory[static_cast<std::size_t>(frame)];
    const std::array<double, 3> o = pose.t;
    const std::array<double, 3> d = pose.rotate(dir_cam);

    SurfaceHit best;
    for (std::size_t i = 0; i < scene.planes.size(); ++i) {
        const TexturedPlane& pl = scene.planes[i];
        const double denom = pl.normal[0] * d[0] + pl.normal[1] * d[1] + pl.normal[2] * d[2];
        if (std::fabs(denom) < 1e-12) continue;
        const double num =
            pl.offset - (pl.normal[0] * o[0] + pl.normal[1] * o[1] + pl.normal[2] * o[2]);
        const double s = num / denom;
        if (s < kNearClip) continue;
        if (!best.hit || s < best.depth) {
            best.hit = true;
            best.depth = s;
            best.surface = static_cast<int>(i);
            best.world = {o[0] + s * d[0], o[1] + s * d[1], o[2] + s * d[2]};
        }
    }
    if (scene.has_object) {
        const std::array<double, 3> c = object_center(scene, frame);
        if (std::fabs(d[2]) > 1e-12) {
            const double s = (c[2] - o[2]) / d[2];
            if (s >= kNearClip && (!best.hit || s < best.depth)) {
                const double hx = o[0] + s * d[0];
                const double hy = o[1] + s * d[1];
                if (std::fabs(hx - c[0]) <= scene.object.half_w &&
                    std::fabs(hy - c[1]) <= scene.object.half_h) {
                    best.hit = true;
                    best.depth = s;
                    best.surface = static_cast<int>(scene.planes.size());
                    best.world = {hx, hy, c[2]};
                }
            }
        }
    }
    return best;
}

std::array<double, 3> scene_albedo(const Scene& scene, const SurfaceHit& hit, int frame) {
    std::array<double, 3> rgb{0.5, 0.5, 0.5};
    if (!hit.hit) return rgb;
    if (hit.surface == static_cast<int>(scene.planes.size())) {
        // Object texture rides with the object.
        const std::array<double, 3> c = object_center(scene, frame);
        const std::array<double, 3> local = {hit.world[0] - c[0], hit.world[1] - c[1],
                                             hit.world[2] - c[2]};
        for (int ch = 0; ch < 3; ++ch)
            rgb[static_cast<std::size_t>(ch)] =
                texture_value(scene.object.texture, local, ch, 1.0);
        return rgb;
    }
    const TexturedPlane& pl = scene.planes[static_cast<std::size_t>(hit.surface)];
    const double amp = patch_amp_scale(scene, hit.world);
    for (int ch = 0; ch < 3; ++ch)
        rgb[static_cast<std::size_t>(ch)] = texture_value(pl.texture, hit.world, ch, amp);
    return rgb;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.frame_count < 1 || spec.frame_count % 2 == 0)
        fail("generate_scene: frame count must be odd");
    Rng rng(seed);
    Scene scene;
    scene.spec = spec;

    if (!spec.custom_planes.empty()) {
        scene.planes = spec.custom_planes;
    } else {
        // Back wall, mildly slanted, centre depth 8..12.
        TexturedPlane wall;
        const double nx = rng.uniform(-0.12, 0.12);
        const double ny = rng.uniform(-0.10, 0.10);
        const double nn = std::sqrt(nx * nx + ny * ny + 1.0);
        wall.normal = {nx / nn, ny / nn, 1.0 / nn};
        wall.offset = rng.uniform(0.8, 1.2) * wall.normal[2];
        wall.texture = random_texture(rng, spec.texture_frequency);
        scene.planes.push_back(wall);

        if (spec.plane_count >= 2) {
            // Ground below the camera; tilt keeps its visible depth bounded.
            TexturedPlane ground;
            const double gz = rng.uniform(0.10, 0.16);
            const double gn = std::sqrt(1.0 + gz * gz);
            ground.normal = {0.0, 1.0 / gn, gz / gn};
            ground.offset = rng.uniform(0.30, 0.36) / gn;
            ground.texture = random_texture(rng, spec.texture_frequency);
            scene.planes.push_back(ground);
        }
        if (spec.plane_count >= 3) {
            TexturedPlane side;
            const double sz = rng.uniform(0.30, 0.40);
            const double sn = std::sqrt(1.0 + sz * sz);
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            side.normal = {sign / sn, 0.0, sz / sn};
            side.offset = rng.uniform(0.55, 0.70) / sn;
            side.texture = random_texture(rng, spec.texture_frequency);
            scene.planes.push_back(side);
        }
    }
    for (const TexturedPlane& pl : scene.planes) {
        const double n = std::sqrt(pl.normal[0] * pl.normal[0] + pl.normal[1] * pl.normal[1] +
                                   pl.normal[2] * pl.normal[2]);
        if (n < 1e-9) fail("generate_scene: degenerate plane (zero normal)");
    }

    if (spec.moving_object) {
        scene.has_object = true;
        // A near rectangle sweeping across the view. Each step clears its own
        // footprint and the depth gap to the background is large, so the
        // camera-flow consistency check has something to detect.
        const double sx = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double z0 = rng.uniform(0.38, 0.44);
        scene.object.center0 = {-sx * 0.24 + rng.uniform(-0.02, 0.02),
                                rng.uniform(-0.035, 0.025), z0};
        scene.object.half_w = rng.uniform(0.048, 0.056);
        scene.object.half_h = rng.uniform(0.078, 0.095);
        scene.object.velocity = {sx * 0.95 * spec.object_speed,
                                 rng.uniform(-0.06, 0.06) * spec.object_speed,
                                 0.08 * spec.object_speed};
        scene.object.texture = random_texture(rng, 1.6 * spec.texture_frequency);
        scene.object.texture.distance_falloff = 1e6;  // local coords, no falloff
    }
    if (spec.textureless_patch) {
        scene.has_patch = true;
        // A flat disc on the back wall near the image centre.
        const TexturedPlane& wall = scene.planes[0];
        const double z0 = wall.offset / wall.normal[2];
        scene.patch_center = {rng.uniform(-0.2, 0.2), rng.uniform(-0.1, 0.1), z0};
        scene.patch_r1 = 0.12;
        scene.patch_r2 = 0.24;
    }

    // Camera trajectory: smooth per-frame step with a small rotation. The
    // lateral component is kept substantial so every scene carries parallax.
    const double lat_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double dx = lat_sign * rng.uniform(0.6, 1.0);
    double dy = rng.uniform(-0.2, 0.2);
    double dz = rng.uniform(-0.5, 0.8);
    const double dn = std::sqrt(dx * dx + dy * dy + dz * dz) + 1e-9;
    dx /= dn;
    dy /= dn;
    dz /= dn;
    const double rot_step = spec.motion_rotation_deg * kPi / 180.0;
    const double ra = rng.uniform(-rot_step, rot_step);
    const double rb = rng.uniform(-rot_step, rot_step);
    const double rg = rng.uniform(-rot_step, rot_step) * 0.5;
    for (int i = 0; i < spec.frame_count; ++i) {
        const double t = spec.motion_translation * i;
        scene.trajectory.push_back(
            euler_pose(ra * i, rb * i, rg * i, dx * t, dy * t, dz * t));
    }

    // Coverage validation: every sampled ray of every frame must hit a surface.
    for (int f = 0; f < spec.frame_count; ++f)
        for (int iy = 0; iy <= 8; ++iy)
            for (int ix = 0; ix <= 8; ++ix) {
                const double px = (spec.width - 1) * ix / 8.0;
                const double py = (spec.height - 1) * iy / 8.0;
                if (!raycast(scene, f, px, py).hit)
                    fail("generate_scene: degenerate plane set, ray misses all surfaces");
            }
    return scene;
}

SampleSnippet render_snippet(const Scene& scene, int h, int w) {
    if (h != scene.spec.height || w != scene.spec.width)
        fail("render_snippet: resolution must match the scene spec");
    const int frames = scene.spec.frame_count;
    const Intrinsics& k = scene.spec.k;

    SampleSnippet out;
    out.k = k;
    out.target_index = frames / 2;
    out.gt_poses = scene.trajectory;

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::vector<SurfaceHit>> hits(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        std::vector<double> img(plane * 3);
        std::vector<double> depth(plane);
        hits[static_cast<std::size_t>(f)].resize(plane);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const SurfaceHit hit = raycast(scene, f, x, y);
                hits[static_cast<std::size_t>(f)][y * w + x] = hit;
                depth[y * w + x] = hit.hit ? hit.depth : 0.0;
                const std::array<double, 3> rgb = scene_albedo(scene, hit, f);
                for (int c = 0; c < 3; ++c)
                    img[static_cast<std::size_t>(c) * plane + y * w + x] = rgb[c];
            }
        out.frames.push_back(Tensor::from_data({3, h, w}, std::move(img)));
        out.gt_depths.push_back(Tensor::from_data({h, w}, std::move(depth)));
    }

    out.visibility.resize(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i) {
        out.visibility[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(frames));
        for (int j = 0; j < frames; ++j) {
            if (j == i) continue;
            const RigidTransform world_to_j =
                scene.trajectory[static_cast<std::size_t>(j)].inverse();
            std::vector<double> vis(plane, 0.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const SurfaceHit& hit = hits[static_cast<std::size_t>(i)][y * w + x];
                    if (!hit.hit) continue;
                    const std::array<double, 3> pj = world_to_j.apply(hit.world);
                    if (pj[2] <= kNearClip) continue;
                    const double u = k.fx * pj[0] / pj[2] + k.cx;
                    const double v = k.fy * pj[1] / pj[2] + k.cy;
                    if (u < 0.0 || u > w - 1.0 || v < 0.0 || v > h - 1.0) continue;
                    const SurfaceHit hj = raycast(scene, j, u, v);
                    if (!hj.hit || hj.surface != hit.surface) continue;
                    if (std::fabs(hj.depth - pj[2]) > 1e-6 * pj[2] + 1e-9) continue;
                    // Bilinear safety: the four integer neighbours must see the
                    // same surface, so resampling never blends across an edge.
                    const int x0 = static_cast<int>(std::floor(u));
                    const int y0 = static_cast<int>(std::floor(v));
                    bool safe = true;
                    for (int ny = y0; ny <= std::min(y0 + 1, h - 1) && safe; ++ny)
                        for (int nx = x0; nx <= std::min(x0 + 1, w - 1) && safe; ++nx) {
                            const SurfaceHit hn = raycast(scene, j, nx, ny);
                            if (!hn.hit || hn.surface != hit.surface) safe = false;
                        }
                    if (safe) vis[y * w + x] = 1.0;
                }
            out.visibility[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                Tensor::from_data({h, w}, std::move(vis));
        }
    }
    return out;
}

}  // namespace cbw
