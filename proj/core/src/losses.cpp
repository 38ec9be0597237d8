#include "cbw/losses.hpp"

#include <cmath>
#include <map>
#include <ostream>

namespace cbw {

namespace {

LambdaConfig make_lambda(std::initializer_list<double> v) {
    LambdaConfig out;
    auto it = v.begin();
    out.p_tgt = *it++;
    out.p_ref = *it++;
    out.occ_tgt = *it++;
    out.occ_ref = *it++;
    out.aw_tgt = *it++;
    out.aw_ref = *it++;
    out.dsc_tgt = *it++;
    out.dsc_ref = *it++;
    out.feat_tgt = *it++;
    out.feat_ref = *it++;
    out.d_tgt = *it++;
    out.d_ref = *it++;
    out.f_tgt = *it++;
    out.f_ref = *it++;
    return out;
}

const std::vector<std::pair<std::string, LambdaConfig>>& preset_table() {
    static const std::vector<std::pair<std::string, LambdaConfig>> table = {
        {"baseline",
         make_lambda({1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0.01, 0, 0, 0})},
        {"bi", make_lambda({1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0.01, 0.01, 0, 0})},
        {"occ", make_lambda({1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0.01, 0, 0, 0})},
        {"bi-occ", make_lambda({1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0.01, 0.01, 0, 0})},
        {"occ-dsc", make_lambda({1, 0, 1, 0, 0, 0, 0.5, 0, 0, 0, 0.01, 0, 0, 0})},
        {"bi-occ-dsc",
         make_lambda({1, 1, 1, 1, 0, 0, 0.5, 0.5, 0, 0, 0.01, 0.01, 0, 0})},
        {"occ-dsc-aw",
         make_lambda({1, 0, 1, 0, 1, 0, 0.5, 0, 0, 0, 0.01, 0.01, 0, 0})},
        {"bi-occ-dsc-aw",
         make_lambda({1, 1, 1, 1, 1, 1, 0.5, 0.5, 0, 0, 0.01, 0.01, 0, 0})},
        {"occ-dsc-aw-feat",
         make_lambda({1, 0, 1, 0, 1, 0, 0.5, 0, 0.05, 0, 0.01, 0, 0.001, 0})},
        {"full",
         make_lambda({1, 1, 1, 1, 1, 1, 0.5, 0.5, 0.05, 0.05, 0.01, 0.01, 0.001, 0.001})},
    };
    return table;
}

Tensor detached_from(const std::vector<int>& shape, std::vector<double> data) {
    NoGrad guard;
    return Tensor::from_data(shape, std::move(data));
}

std::size_t count_positive(const Tensor& t) {
    std::size_t n = 0;
    for (double v : t.values())
        if (v > 0.0) ++n;
    return n;
}

void accumulate_term(Tensor& acc, const Tensor& value) {
    acc = acc.defined() ? add(acc, value) : value;
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw NumericError(std::string("loss term '") + term + "' is non-finite");
}

}  // namespace

LambdaConfig LambdaConfig::preset(const std::string& name) {
    for (const auto& [key, cfg] : preset_table())
        if (key == name) return cfg;
    fail("unknown lambda preset: " + name);
}

const std::vector<std::string>& LambdaConfig::preset_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [key, cfg] : preset_table()) out.push_back(key);
        return out;
    }();
    return names;
}

std::vector<double> LambdaConfig::as_vector() const {
    return {p_tgt,   p_ref,   occ_tgt, occ_ref, aw_tgt, aw_ref, dsc_tgt,
            dsc_ref, feat_tgt, feat_ref, d_tgt,  d_ref,  f_tgt,  f_ref};
}

void LossReport::append_log(std::ostream& os, long iter) const {
    const std::pair<const char*, double> terms[] = {
        {"photo", photo}, {"feat", feat},     {"dsc", dsc},
        {"smooth", smooth}, {"cbw", cbw},     {"total", total}};
    for (const auto& [name, value] : terms)
        os << "iter=" << iter << " term=" << name << " value=" << value << "\n";
}

// ---- per-term ops -------------------------------------------------------------

Tensor ssim(const Tensor& a, const Tensor& b, const LossConstants& c) {
    if (a.shape() != b.shape()) fail("ssim: shape mismatch");
    const int win = c.ssim_window;
    const Tensor mu_a = box_mean(a, win);
    const Tensor mu_b = box_mean(b, win);
    const Tensor e_aa = box_mean(mul(a, a), win);
    const Tensor e_bb = box_mean(mul(b, b), win);
    const Tensor e_ab = box_mean(mul(a, b), win);
    const Tensor var_a = sub(e_aa, mul(mu_a, mu_a));
    const Tensor var_b = sub(e_bb, mul(mu_b, mu_b));
    const Tensor cov = sub(e_ab, mul(mu_a, mu_b));
    const Tensor num = mul(add(mul(mul(mu_a, mu_b), 2.0), c.c1), add(mul(cov, 2.0), c.c2));
    const Tensor den = mul(add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c.c1),
                           add(add(var_a, var_b), c.c2));
    return div(num, den);
}

Tensor robust_error(const Tensor& m, const Tensor& n, double eps) {
    if (m.shape() != n.shape()) fail("robust_error: shape mismatch");
    const Tensor d = sub(m, n);
    return sqrt(add(mul(d, d), eps * eps));
}

Tensor photometric_pair(const Tensor& image, const Tensor& synthesized,
                        const LossConstants& c) {
    if (image.rank() != 3) fail("photometric_pair: expected [C,H,W]");
    const Tensor s = ssim(image, synthesized, c);
    const Tensor structural = mul(sub(1.0, s), c.alpha * 0.5);
    const Tensor robust = mul(robust_error(image, synthesized, c.epsilon), 1.0 - c.alpha);
    return reduce_mean(add(structural, robust), {0});
}

Tensor neutral_fill(const WarpResult& warp, const Tensor& destination_image) {
    if (warp.warped.shape() != destination_image.shape())
        fail("neutral_fill: shape mismatch");
    Tensor inverse_mask;
    {
        NoGrad guard;
        std::vector<double> v = warp.valid.values();
        for (double& x : v) x = 1.0 - x;
        inverse_mask = Tensor::from_data(warp.valid.shape(), std::move(v));
    }
    return add(warp.warped, mul_trailing(destination_image, inverse_mask));
}

Tensor indicator_less(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) fail("indicator: shape mismatch");
    std::vector<double> out(a.numel());
    const std::vector<double>& av = a.values();
    const std::vector<double>& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] < bv[i] ? 1.0 : 0.0;
    return detached_from(a.shape(), std::move(out));
}

Tensor camera_flow_occlusion(const Tensor& flow, const Tensor& sampled_opposite_flow,
                             const LossConstants& c) {
    if (flow.rank() != 3 || flow.dim(0) != 2) fail("camera_flow_occlusion: flow must be [2,H,W]");
    if (flow.shape() != sampled_opposite_flow.shape())
        fail("camera_flow_occlusion: flow shape mismatch");
    const int h = flow.dim(1), w = flow.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double* u = flow.values().data();
    const double* s = sampled_opposite_flow.values().data();
    std::vector<double> occ(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        const double sx = u[i] + s[i];
        const double sy = u[plane + i] + s[plane + i];
        const double mismatch = sx * sx + sy * sy;
        const double magnitude = u[i] * u[i] + u[plane + i] * u[plane + i] +
                                 s[i] * s[i] + s[plane + i] * s[plane + i];
        occ[i] = mismatch >= c.alpha1 * magnitude + c.alpha2 ? 1.0 : 0.0;
    }
    return detached_from({h, w}, std::move(occ));
}

Tensor depth_structure_diff(const Tensor& z_transformed, const Tensor& d_interp,
                            const Tensor& valid, const LossConstants& c) {
    if (z_transformed.shape() != d_interp.shape())
        fail("depth_structure_diff: shape mismatch");
    const Tensor erf = robust_error(z_transformed, d_interp, c.epsilon);
    const Tensor denom = max_with(add(z_transformed, d_interp), 1e-6);
    return mul(valid, div(erf, denom));
}

DscResult dsc_loss(const Tensor& diff_to_target, const Tensor& valid_to_target,
                   const Tensor& diff_to_reference, const Tensor& valid_to_reference,
                   const LambdaConfig& lambdas) {
    DscResult out;
    if (lambdas.dsc_tgt != 0.0) {
        const std::size_t n = count_positive(valid_to_target);
        if (n == 0) {
            out.empty_to_target = true;
        } else {
            accumulate_term(out.value,
                            mul(div(reduce_sum(diff_to_target), static_cast<double>(n)),
                                lambdas.dsc_tgt));
        }
    }
    if (lambdas.dsc_ref != 0.0) {
        const std::size_t n = count_positive(valid_to_reference);
        if (n == 0) {
            out.empty_to_reference = true;
        } else {
            accumulate_term(out.value,
                            mul(div(reduce_sum(diff_to_reference), static_cast<double>(n)),
                                lambdas.dsc_ref));
        }
    }
    if (!out.value.defined()) out.value = Tensor::scalar(0.0);
    return out;
}

Tensor adaptive_weights(const Tensor& diff, double lambda_aw) {
    std::vector<double> w(diff.numel());
    const std::vector<double>& dv = diff.values();
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::min(1.0, std::max(0.0, 1.0 - lambda_aw * dv[i]));
    return detached_from(diff.shape(), std::move(w));
}

namespace {

// Combined detached weight: valid * (1 - lambda_occ*occ) * W_aw.
Tensor combine_weights(const Tensor& valid, const Tensor* occ, double lambda_occ,
                       const Tensor* aw) {
    std::vector<double> w = valid.values();
    if (occ) {
        const std::vector<double>& m = occ->values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 1.0 - lambda_occ * m[i];
    }
    if (aw) {
        const std::vector<double>& m = aw->values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= m[i];
    }
    return detached_from(valid.shape(), std::move(w));
}

struct DirectionTermResult {
    Tensor value;
    bool empty = false;
};

DirectionTermResult weighted_photometric_direction(const Tensor& per_pixel,
                                                   const Tensor& weight, double lambda_p) {
    DirectionTermResult out;
    const std::size_t n = count_positive(weight);
    if (n == 0) {
        out.empty = true;
        return out;
    }
    out.value = mul(div(reduce_sum(mul(weight, per_pixel)), static_cast<double>(n)), lambda_p);
    return out;
}

}  // namespace

WeightedPhotometricResult biw_photometric(const Tensor& image_target,
                                          const Tensor& image_ref, const BidirBundle& bundle,
                                          const LambdaConfig& lambdas,
                                          const LossConstants& c) {
    WeightedPhotometricResult out;
    Tensor acc;
    if (lambdas.p_tgt != 0.0) {
        const DirectionSynthesis& d = bundle.to_target;
        const Tensor per_pixel =
            photometric_pair(image_target, neutral_fill(d.image, image_target), c);
        Tensor occ, aw;
        if (lambdas.occ_tgt != 0.0) {
            const Tensor u = pack_flow(d.projection.flow_x, d.projection.flow_y).detach();
            occ = camera_flow_occlusion(u, d.sampled_flow.warped.detach(), c);
        }
        if (lambdas.aw_tgt != 0.0) {
            const Tensor diff = depth_structure_diff(d.projection.depth.detach(),
                                                     d.interp_depth.warped.detach(),
                                                     d.valid, c);
            aw = adaptive_weights(diff, lambdas.aw_tgt);
        }
        const Tensor w = combine_weights(d.valid, occ.defined() ? &occ : nullptr,
                                         lambdas.occ_tgt, aw.defined() ? &aw : nullptr);
        const DirectionTermResult r = weighted_photometric_direction(per_pixel, w, lambdas.p_tgt);
        out.empty_to_target = r.empty;
        if (!r.empty) accumulate_term(acc, r.value);
    }
    if (lambdas.p_ref != 0.0) {
        const DirectionSynthesis& d = bundle.to_reference;
        const Tensor per_pixel =
            photometric_pair(image_ref, neutral_fill(d.image, image_ref), c);
        Tensor occ, aw;
        if (lambdas.occ_ref != 0.0) {
            const Tensor u = pack_flow(d.projection.flow_x, d.projection.flow_y).detach();
            occ = camera_flow_occlusion(u, d.sampled_flow.warped.detach(), c);
        }
        if (lambdas.aw_ref != 0.0) {
            const Tensor diff = depth_structure_diff(d.projection.depth.detach(),
                                                     d.interp_depth.warped.detach(),
                                                     d.valid, c);
            aw = adaptive_weights(diff, lambdas.aw_ref);
        }
        const Tensor w = combine_weights(d.valid, occ.defined() ? &occ : nullptr,
                                         lambdas.occ_ref, aw.defined() ? &aw : nullptr);
        const DirectionTermResult r = weighted_photometric_direction(per_pixel, w, lambdas.p_ref);
        out.empty_to_reference = r.empty;
        if (!r.empty) accumulate_term(acc, r.value);
    }
    out.value = acc.defined() ? acc : Tensor::scalar(0.0);
    return out;
}

Tensor feature_perception_loss(const Tensor& f_target, const Tensor& f_target_synth,
                               const Tensor& valid_target, const Tensor& f_ref,
                               const Tensor& f_ref_synth, const Tensor& valid_ref,
                               const LambdaConfig& lambdas) {
    Tensor acc;
    const auto direction = [&](const Tensor& f, const Tensor& f_synth, const Tensor& valid,
                               double lambda) {
        if (lambda == 0.0) return;
        if (f.shape() != f_synth.shape()) fail("feature_perception_loss: shape mismatch");
        const std::size_t n = count_positive(valid);
        if (n == 0) return;
        const Tensor masked = mul_trailing(abs(sub(f, f_synth)), valid);
        const double denom = static_cast<double>(n) * f.dim(0);
        accumulate_term(acc, mul(div(reduce_sum(masked), denom), lambda));
    };
    direction(f_target, f_target_synth, valid_target, lambdas.feat_tgt);
    direction(f_ref, f_ref_synth, valid_ref, lambdas.feat_ref);
    return acc.defined() ? acc : Tensor::scalar(0.0);
}

Tensor edge_aware_smoothness(const Tensor& map, const Tensor& image,
                             bool normalize_by_mean) {
    if (image.rank() != 3) fail("edge_aware_smoothness: image must be [C,H,W]");
    Tensor m = map;
    if (normalize_by_mean) m = div(map, reduce_mean(map));
    const SpatialGradient gm = spatial_gradient(m);
    Tensor mx = abs(gm.dx);
    Tensor my = abs(gm.dy);
    if (m.rank() == 3) {
        mx = reduce_mean(mx, {0});
        my = reduce_mean(my, {0});
    } else if (m.rank() != 2) {
        fail("edge_aware_smoothness: map must be [H,W] or [C,H,W]");
    }
    const SpatialGradient gi = spatial_gradient(image);
    const Tensor ex = exp(neg(reduce_mean(abs(gi.dx), {0})));
    const Tensor ey = exp(neg(reduce_mean(abs(gi.dy), {0})));
    return reduce_mean(add(mul(mx, ex), mul(my, ey)));
}

// ---- composition ---------------------------------------------------------------

namespace {

constexpr int kScales = 3;

std::vector<Tensor> image_pyramid(const Tensor& image) {
    std::vector<Tensor> pyr{image};
    for (int k = 1; k < kScales; ++k) pyr.push_back(downsample_area2(pyr.back()));
    return pyr;
}

}  // namespace

LossReport cbw_total(const CbwInputs& in, const LambdaConfig& lambdas,
                     const LossConstants& c) {
    const std::size_t n_refs = in.ref_images.size();
    if (n_refs == 0) fail("cbw_total: at least one reference frame required");
    if (in.refs.size() != n_refs || in.poses_to_refs.size() != n_refs)
        fail("cbw_total: refs/poses size mismatch");
    if (static_cast<int>(in.target.depths.size()) != kScales)
        fail("cbw_total: expected 3 depth scales");

    LossReport report;
    const std::vector<Tensor> pyr_t = image_pyramid(in.target_image);

    std::vector<PixelGrid> grids;
    for (int k = 0; k < kScales; ++k)
        grids.push_back(PixelGrid::make(in.target.depths[k].dim(0),
                                        in.target.depths[k].dim(1)));

    const bool want_photo_a = lambdas.p_tgt != 0.0;
    const bool want_photo_b = lambdas.p_ref != 0.0;
    const bool want_occ_a = want_photo_a && lambdas.occ_tgt != 0.0;
    const bool want_occ_b = want_photo_b && lambdas.occ_ref != 0.0;
    const bool want_diff_a = lambdas.dsc_tgt != 0.0 || (want_photo_a && lambdas.aw_tgt != 0.0);
    const bool want_diff_b = lambdas.dsc_ref != 0.0 || (want_photo_b && lambdas.aw_ref != 0.0);
    const bool want_dsc = lambdas.dsc_tgt != 0.0 || lambdas.dsc_ref != 0.0;
    const bool want_feat = lambdas.feat_tgt != 0.0 || lambdas.feat_ref != 0.0;

    Tensor photo_acc, feat_acc, dsc_acc;
    for (std::size_t r = 0; r < n_refs; ++r) {
        const std::vector<Tensor> pyr_r = image_pyramid(in.ref_images[r]);
        const PoseSE3& pose = in.poses_to_refs[r];
        const PoseSE3 pose_inv = pose.inverse();

        Tensor pair_photo, pair_dsc, pair_feat;
        for (int k = 0; k < kScales; ++k) {
            const Intrinsics kk = in.k.scaled(1.0 / (1 << k));
            const PixelGrid& grid = grids[static_cast<std::size_t>(k)];
            const Tensor& depth_t = in.target.depths[static_cast<std::size_t>(k)];
            const Tensor& depth_r = in.refs[r].depths[static_cast<std::size_t>(k)];

            const CameraPoints pts_t = pixel_to_camera(kk, depth_t, grid);
            const ProjectionResult proj_a =
                transform_and_project(kk, pts_t, pose, grid, c.z_min);
            const CameraPoints pts_r = pixel_to_camera(kk, depth_r, grid);
            const ProjectionResult proj_b =
                transform_and_project(kk, pts_r, pose_inv, grid, c.z_min);

            WarpResult img_a, img_b;
            Tensor per_pixel_a, per_pixel_b;
            if (want_photo_a) {
                img_a = warp_map(pyr_r[static_cast<std::size_t>(k)], proj_a.coord_x,
                                 proj_a.coord_y, proj_a.valid);
                per_pixel_a = photometric_pair(
                    pyr_t[static_cast<std::size_t>(k)],
                    neutral_fill(img_a, pyr_t[static_cast<std::size_t>(k)]), c);
            }
            if (want_photo_b) {
                img_b = warp_map(pyr_t[static_cast<std::size_t>(k)], proj_b.coord_x,
                                 proj_b.coord_y, proj_b.valid);
                per_pixel_b = photometric_pair(
                    pyr_r[static_cast<std::size_t>(k)],
                    neutral_fill(img_b, pyr_r[static_cast<std::size_t>(k)]), c);
            }

            WarpResult interp_a, interp_b;
            Tensor diff_a, diff_b;
            if (want_diff_a) {
                interp_a = warp_scalar_map(depth_r, proj_a.coord_x, proj_a.coord_y,
                                           proj_a.valid);
                diff_a = depth_structure_diff(proj_a.depth, interp_a.warped,
                                              interp_a.valid, c);
            }
            if (want_diff_b) {
                interp_b = warp_scalar_map(depth_t, proj_b.coord_x, proj_b.coord_y,
                                           proj_b.valid);
                diff_b = depth_structure_diff(proj_b.depth, interp_b.warped,
                                              interp_b.valid, c);
            }

            Tensor occ_a, occ_b;
            if (want_occ_a || want_occ_b) {
                NoGrad guard;
                const Tensor flow_a =
                    pack_flow(proj_a.flow_x.detach(), proj_a.flow_y.detach());
                const Tensor flow_b =
                    pack_flow(proj_b.flow_x.detach(), proj_b.flow_y.detach());
                if (want_occ_a) {
                    const WarpResult sampled = warp_map(flow_b, proj_a.coord_x.detach(),
                                                        proj_a.coord_y.detach(),
                                                        proj_a.valid);
                    occ_a = camera_flow_occlusion(flow_a, sampled.warped, c);
                }
                if (want_occ_b) {
                    const WarpResult sampled = warp_map(flow_a, proj_b.coord_x.detach(),
                                                        proj_b.coord_y.detach(),
                                                        proj_b.valid);
                    occ_b = camera_flow_occlusion(flow_b, sampled.warped, c);
                }
            }

            if (want_photo_a) {
                Tensor aw;
                if (lambdas.aw_tgt != 0.0) aw = adaptive_weights(diff_a.detach(), lambdas.aw_tgt);
                const Tensor w =
                    combine_weights(img_a.valid, occ_a.defined() ? &occ_a : nullptr,
                                    lambdas.occ_tgt, aw.defined() ? &aw : nullptr);
                const DirectionTermResult dir =
                    weighted_photometric_direction(per_pixel_a, w, lambdas.p_tgt);
                if (dir.empty)
                    report.flags.push_back("photometric direction to_target empty");
                else
                    accumulate_term(pair_photo, dir.value);
                if (r == 0 && k == 0) {
                    report.weight_to_target = w;
                    report.occlusion_to_target = occ_a;
                    report.valid_to_target = img_a.valid;
                }
            }
            if (want_photo_b) {
                Tensor aw;
                if (lambdas.aw_ref != 0.0) aw = adaptive_weights(diff_b.detach(), lambdas.aw_ref);
                const Tensor w =
                    combine_weights(img_b.valid, occ_b.defined() ? &occ_b : nullptr,
                                    lambdas.occ_ref, aw.defined() ? &aw : nullptr);
                const DirectionTermResult dir =
                    weighted_photometric_direction(per_pixel_b, w, lambdas.p_ref);
                if (dir.empty)
                    report.flags.push_back("photometric direction to_reference empty");
                else
                    accumulate_term(pair_photo, dir.value);
                if (r == 0 && k == 0) {
                    report.weight_to_reference = w;
                    report.occlusion_to_reference = occ_b;
                    report.valid_to_reference = img_b.valid;
                }
            }

            if (want_dsc) {
                const DscResult d = dsc_loss(diff_a, want_diff_a ? interp_a.valid : Tensor(),
                                             diff_b, want_diff_b ? interp_b.valid : Tensor(),
                                             lambdas);
                if (d.empty_to_target) report.flags.push_back("dsc direction to_target empty");
                if (d.empty_to_reference)
                    report.flags.push_back("dsc direction to_reference empty");
                accumulate_term(pair_dsc, d.value);
            }
            if (r == 0 && k == 0) {
                if (diff_a.defined()) report.depth_diff_to_target = diff_a.detach();
                if (diff_b.defined()) report.depth_diff_to_reference = diff_b.detach();
            }

            if (k == 1 && want_feat) {
                const Tensor& f_t = in.target.features;
                const Tensor& f_r = in.refs[r].features;
                if (f_t.dim(1) != depth_t.dim(0) || f_t.dim(2) != depth_t.dim(1))
                    fail("cbw_total: feature resolution must match scale 1");
                const WarpResult f_hat_t =
                    warp_map(f_r, proj_a.coord_x, proj_a.coord_y, proj_a.valid);
                const WarpResult f_hat_r =
                    warp_map(f_t, proj_b.coord_x, proj_b.coord_y, proj_b.valid);
                pair_feat = feature_perception_loss(f_t, f_hat_t.warped, f_hat_t.valid, f_r,
                                                    f_hat_r.warped, f_hat_r.valid, lambdas);
            }
        }

        if (pair_photo.defined())
            accumulate_term(photo_acc, div(pair_photo, static_cast<double>(kScales)));
        if (pair_dsc.defined())
            accumulate_term(dsc_acc, div(pair_dsc, static_cast<double>(kScales)));
        if (pair_feat.defined()) accumulate_term(feat_acc, pair_feat);
    }

    Tensor photo_total, feat_total, dsc_total;
    if (photo_acc.defined()) photo_total = div(photo_acc, static_cast<double>(n_refs));
    if (feat_acc.defined()) feat_total = div(feat_acc, static_cast<double>(n_refs));
    if (dsc_acc.defined()) dsc_total = div(dsc_acc, static_cast<double>(n_refs));

    // Smoothness: feature term at the encoder scale, depth terms per scale.
    Tensor smooth_total;
    if (lambdas.f_tgt != 0.0)
        accumulate_term(smooth_total,
                        mul(edge_aware_smoothness(in.target.features, pyr_t[1], false),
                            lambdas.f_tgt));
    if (lambdas.d_tgt != 0.0) {
        Tensor acc;
        for (int k = 0; k < kScales; ++k)
            accumulate_term(acc, edge_aware_smoothness(
                                     in.target.depths[static_cast<std::size_t>(k)],
                                     pyr_t[static_cast<std::size_t>(k)], true));
        accumulate_term(smooth_total,
                        mul(div(acc, static_cast<double>(kScales)), lambdas.d_tgt));
    }
    if (lambdas.f_ref != 0.0 || lambdas.d_ref != 0.0) {
        Tensor ref_acc;
        for (std::size_t r = 0; r < n_refs; ++r) {
            const std::vector<Tensor> pyr_r = image_pyramid(in.ref_images[r]);
            if (lambdas.f_ref != 0.0)
                accumulate_term(ref_acc,
                                mul(edge_aware_smoothness(in.refs[r].features, pyr_r[1], false),
                                    lambdas.f_ref));
            if (lambdas.d_ref != 0.0) {
                Tensor acc;
                for (int k = 0; k < kScales; ++k)
                    accumulate_term(acc, edge_aware_smoothness(
                                             in.refs[r].depths[static_cast<std::size_t>(k)],
                                             pyr_r[static_cast<std::size_t>(k)], true));
                accumulate_term(ref_acc,
                                mul(div(acc, static_cast<double>(kScales)), lambdas.d_ref));
            }
        }
        if (ref_acc.defined())
            accumulate_term(smooth_total, div(ref_acc, static_cast<double>(n_refs)));
    }

    Tensor cbw_tensor;
    if (photo_total.defined()) accumulate_term(cbw_tensor, photo_total);
    if (feat_total.defined()) accumulate_term(cbw_tensor, feat_total);
    if (dsc_total.defined()) accumulate_term(cbw_tensor, dsc_total);
    Tensor total_tensor = cbw_tensor;
    if (smooth_total.defined()) accumulate_term(total_tensor, smooth_total);
    if (!total_tensor.defined()) total_tensor = Tensor::scalar(0.0);

    report.photo = photo_total.defined() ? photo_total.item() : 0.0;
    report.feat = feat_total.defined() ? feat_total.item() : 0.0;
    report.dsc = dsc_total.defined() ? dsc_total.item() : 0.0;
    report.smooth = smooth_total.defined() ? smooth_total.item() : 0.0;
    report.cbw = cbw_tensor.defined() ? cbw_tensor.item() : 0.0;
    report.total = total_tensor.item();
    report.total_tensor = total_tensor;
    check_finite(report.photo, "photo");
    check_finite(report.feat, "feat");
    check_finite(report.dsc, "dsc");
    check_finite(report.smooth, "smooth");
    check_finite(report.total, "total");
    return report;
}

}  // namespace cbw
