#include "cbw/geometry.hpp"

#include <cmath>

namespace cbw {

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.r[i * 3 + j] = r[j * 3 + i];
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += out.r[i * 3 + j] * t[j];
        out.t[i] = -s;
    }
    return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
    RigidTransform out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * inner.r[k * 3 + j];
            out.r[i * 3 + j] = s;
        }
    for (int i = 0; i < 3; ++i) {
        double s = t[i];
        for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * inner.t[k];
        out.t[i] = s;
    }
    return out;
}

std::array<double, 3> RigidTransform::apply(const std::array<double, 3>& p) const {
    std::array<double, 3> out;
    for (int i = 0; i < 3; ++i)
        out[i] = r[i * 3 + 0] * p[0] + r[i * 3 + 1] * p[1] + r[i * 3 + 2] * p[2] + t[i];
    return out;
}

std::array<double, 3> RigidTransform::rotate(const std::array<double, 3>& p) const {
    std::array<double, 3> out;
    for (int i = 0; i < 3; ++i)
        out[i] = r[i * 3 + 0] * p[0] + r[i * 3 + 1] * p[1] + r[i * 3 + 2] * p[2];
    return out;
}

PoseSE3 PoseSE3::identity() { return from_numeric(RigidTransform::identity()); }

PoseSE3 PoseSE3::from_numeric(const RigidTransform& m) {
    PoseSE3 out;
    for (int i = 0; i < 9; ++i) out.rot[i] = Tensor::scalar(m.r[i]);
    for (int i = 0; i < 3; ++i) out.trans[i] = Tensor::scalar(m.t[i]);
    return out;
}

PoseSE3 PoseSE3::from_vector(const Tensor& v6) {
    if (v6.numel() != 6) fail("pose_from_vector: expected 6 elements");
    const Tensor a = index_scalar(v6, 0);
    const Tensor b = index_scalar(v6, 1);
    const Tensor g = index_scalar(v6, 2);
    const Tensor sa = sin(a), ca = cos(a);
    const Tensor sb = sin(b), cb = cos(b);
    const Tensor sg = sin(g), cg = cos(g);

    PoseSE3 out;
    // Rx(a) Ry(b) Rz(g), expanded.
    out.rot[0] = mul(cb, cg);
    out.rot[1] = neg(mul(cb, sg));
    out.rot[2] = sb;
    out.rot[3] = add(mul(ca, sg), mul(mul(sa, sb), cg));
    out.rot[4] = sub(mul(ca, cg), mul(mul(sa, sb), sg));
    out.rot[5] = neg(mul(sa, cb));
    out.rot[6] = sub(mul(sa, sg), mul(mul(ca, sb), cg));
    out.rot[7] = add(mul(sa, cg), mul(mul(ca, sb), sg));
    out.rot[8] = mul(ca, cb);
    out.trans[0] = index_scalar(v6, 3);
    out.trans[1] = index_scalar(v6, 4);
    out.trans[2] = index_scalar(v6, 5);
    return out;
}

PoseSE3 PoseSE3::inverse() const {
    PoseSE3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.rot[i * 3 + j] = rot[j * 3 + i];
    for (int i = 0; i < 3; ++i) {
        Tensor s = mul(rot[0 * 3 + i], trans[0]);
        s = add(s, mul(rot[1 * 3 + i], trans[1]));
        s = add(s, mul(rot[2 * 3 + i], trans[2]));
        out.trans[i] = neg(s);
    }
    return out;
}

PoseSE3 PoseSE3::compose(const PoseSE3& inner) const {
    PoseSE3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            Tensor s = mul(rot[i * 3 + 0], inner.rot[0 * 3 + j]);
            s = add(s, mul(rot[i * 3 + 1], inner.rot[1 * 3 + j]));
            s = add(s, mul(rot[i * 3 + 2], inner.rot[2 * 3 + j]));
            out.rot[i * 3 + j] = s;
        }
    for (int i = 0; i < 3; ++i) {
        Tensor s = mul(rot[i * 3 + 0], inner.trans[0]);
        s = add(s, mul(rot[i * 3 + 1], inner.trans[1]));
        s = add(s, mul(rot[i * 3 + 2], inner.trans[2]));
        out.trans[i] = add(s, trans[i]);
    }
    return out;
}

RigidTransform PoseSE3::numeric() const {
    RigidTransform out;
    for (int i = 0; i < 9; ++i) out.r[i] = rot[i].item();
    for (int i = 0; i < 3; ++i) out.t[i] = trans[i].item();
    return out;
}

PixelGrid PixelGrid::make(int h, int w) {
    std::vector<double> gx(static_cast<std::size_t>(h) * w);
    std::vector<double> gy(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            gx[static_cast<std::size_t>(y) * w + x] = static_cast<double>(x);
            gy[static_cast<std::size_t>(y) * w + x] = static_cast<double>(y);
        }
    PixelGrid out;
    out.x = Tensor::from_data({h, w}, std::move(gx));
    out.y = Tensor::from_data({h, w}, std::move(gy));
    return out;
}

Tensor CameraPoints::packed() const { return stack_last(stack_last(x, y), z); }

CameraPoints pixel_to_camera(const Intrinsics& k, const Tensor& depth,
                             const PixelGrid& grid) {
    if (depth.rank() != 2) fail("pixel_to_camera: depth must be [H,W]");
    if (depth.shape() != grid.x.shape()) fail("pixel_to_camera: grid/depth mismatch");
    // Constant per-pixel ray slopes (u - cx)/fx, (v - cy)/fy.
    Tensor ray_x = mul(sub(grid.x, k.cx), 1.0 / k.fx);
    Tensor ray_y = mul(sub(grid.y, k.cy), 1.0 / k.fy);
    CameraPoints out;
    out.x = mul(depth, ray_x);
    out.y = mul(depth, ray_y);
    out.z = depth;
    return out;
}

Tensor ProjectionResult::coords_packed() const { return stack_last(coord_x, coord_y); }
Tensor ProjectionResult::flow_packed() const { return stack_last(flow_x, flow_y); }

ProjectionResult transform_and_project(const Intrinsics& k, const CameraPoints& points,
                                       const PoseSE3& pose, const PixelGrid& grid,
                                       double z_min) {
    Tensor tx = add(add(mul(pose.rot[0], points.x), mul(pose.rot[1], points.y)),
                    add(mul(pose.rot[2], points.z), pose.trans[0]));
    Tensor ty = add(add(mul(pose.rot[3], points.x), mul(pose.rot[4], points.y)),
                    add(mul(pose.rot[5], points.z), pose.trans[1]));
    Tensor tz = add(add(mul(pose.rot[6], points.x), mul(pose.rot[7], points.y)),
                    add(mul(pose.rot[8], points.z), pose.trans[2]));

    // Validity is a detached mask; the projection itself divides by a floored
    // depth so invalid points stay finite.
    Tensor valid;
    {
        NoGrad guard;
        const std::vector<double>& zv = tz.values();
        std::vector<double> m(zv.size());
        for (std::size_t i = 0; i < zv.size(); ++i) m[i] = zv[i] > z_min ? 1.0 : 0.0;
        valid = Tensor::from_data(tz.shape(), std::move(m));
    }
    Tensor z_safe = max_with(tz, z_min);
    ProjectionResult out;
    out.coord_x = add(mul(div(tx, z_safe), k.fx), k.cx);
    out.coord_y = add(mul(div(ty, z_safe), k.fy), k.cy);
    out.flow_x = sub(out.coord_x, grid.x);
    out.flow_y = sub(out.coord_y, grid.y);
    out.depth = tz;
    out.valid = valid;
    return out;
}

}  // namespace cbw
