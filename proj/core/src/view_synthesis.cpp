#include "cbw/view_synthesis.hpp"

namespace cbw {

namespace {

Tensor combine_masks(const Tensor& in_bounds, const Tensor& validity_in) {
    if (!validity_in.defined()) return in_bounds;
    NoGrad guard;
    const std::vector<double>& a = in_bounds.values();
    const std::vector<double>& b = validity_in.values();
    if (a.size() != b.size()) fail("warp_map: validity mask shape mismatch");
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = (a[i] != 0.0 && b[i] != 0.0) ? 1.0 : 0.0;
    return Tensor::from_data(in_bounds.shape(), std::move(m));
}

}  // namespace

Tensor pack_flow(const Tensor& flow_x, const Tensor& flow_y) {
    const int h = flow_x.dim(0), w = flow_x.dim(1);
    return concat(reshape(flow_x, {1, h, w}), reshape(flow_y, {1, h, w}), 0);
}

WarpResult warp_map(const Tensor& source, const Tensor& coord_x, const Tensor& coord_y,
                    const Tensor& validity_in) {
    if (source.rank() != 3) fail("warp_map: source must be [C,H,W]");
    if (coord_x.rank() != 2 || coord_x.shape() != coord_y.shape())
        fail("warp_map: coords must be matching [H,W]");
    const int c = source.dim(0), h = source.dim(1), w = source.dim(2);
    const int hq = coord_x.dim(0), wq = coord_x.dim(1);
    Tensor coords = reshape(stack_last(coord_x, coord_y), {1, hq, wq, 2});
    GridSampleResult sampled = grid_sample_bilinear(reshape(source, {1, c, h, w}), coords);
    Tensor in_bounds = reshape(sampled.in_bounds, {hq, wq});

    WarpResult out;
    out.valid = combine_masks(in_bounds, validity_in);
    Tensor warped = reshape(sampled.values, {c, hq, wq});
    // Zero out samples rejected by the extra validity mask.
    out.warped = validity_in.defined() ? mul_trailing(warped, out.valid) : warped;
    return out;
}

WarpResult warp_map(const Tensor& source, const Tensor& coords_packed,
                    const Tensor& validity_in) {
    if (coords_packed.rank() != 3 || coords_packed.dim(2) != 2)
        fail("warp_map: packed coords must be [H,W,2]");
    const int hq = coords_packed.dim(0), wq = coords_packed.dim(1);
    const int c = source.dim(0), h = source.dim(1), w = source.dim(2);
    GridSampleResult sampled = grid_sample_bilinear(
        reshape(source, {1, c, h, w}), reshape(coords_packed, {1, hq, wq, 2}));
    Tensor in_bounds = reshape(sampled.in_bounds, {hq, wq});
    WarpResult out;
    out.valid = combine_masks(in_bounds, validity_in);
    Tensor warped = reshape(sampled.values, {c, hq, wq});
    out.warped = validity_in.defined() ? mul_trailing(warped, out.valid) : warped;
    return out;
}

WarpResult warp_scalar_map(const Tensor& source, const Tensor& coord_x,
                           const Tensor& coord_y, const Tensor& validity_in) {
    const int h = source.dim(0), w = source.dim(1);
    WarpResult r = warp_map(reshape(source, {1, h, w}), coord_x, coord_y, validity_in);
    r.warped = reshape(r.warped, {coord_x.dim(0), coord_x.dim(1)});
    return r;
}

BidirBundle synthesize_bidirectional(const Tensor& image_target, const Tensor& image_ref,
                                     const Tensor& depth_target, const Tensor& depth_ref,
                                     const Intrinsics& k, const PoseSE3& pose_target_to_ref,
                                     double z_min) {
    if (image_target.shape() != image_ref.shape())
        fail("synthesize_bidirectional: image shape mismatch");
    if (depth_target.shape() != depth_ref.shape())
        fail("synthesize_bidirectional: depth shape mismatch");
    const int h = depth_target.dim(0), w = depth_target.dim(1);
    if (image_target.dim(1) != h || image_target.dim(2) != w)
        fail("synthesize_bidirectional: image/depth resolution mismatch");

    BidirBundle bundle;
    bundle.pose_target_to_ref = pose_target_to_ref;
    bundle.pose_ref_to_target = pose_target_to_ref.inverse();

    const PixelGrid grid = PixelGrid::make(h, w);
    const CameraPoints points_t = pixel_to_camera(k, depth_target, grid);
    const CameraPoints points_r = pixel_to_camera(k, depth_ref, grid);

    DirectionSynthesis& a = bundle.to_target;  // target grid
    DirectionSynthesis& b = bundle.to_reference;
    a.projection = transform_and_project(k, points_t, bundle.pose_target_to_ref, grid, z_min);
    b.projection = transform_and_project(k, points_r, bundle.pose_ref_to_target, grid, z_min);

    a.image = warp_map(image_ref, a.projection.coord_x, a.projection.coord_y,
                       a.projection.valid);
    b.image = warp_map(image_target, b.projection.coord_x, b.projection.coord_y,
                       b.projection.valid);
    a.valid = a.image.valid;
    b.valid = b.image.valid;

    const Tensor flow_a = pack_flow(a.projection.flow_x, a.projection.flow_y);
    const Tensor flow_b = pack_flow(b.projection.flow_x, b.projection.flow_y);
    a.sampled_flow = warp_map(flow_b, a.projection.coord_x, a.projection.coord_y,
                              a.projection.valid);
    b.sampled_flow = warp_map(flow_a, b.projection.coord_x, b.projection.coord_y,
                              b.projection.valid);

    a.interp_depth = warp_scalar_map(depth_ref, a.projection.coord_x, a.projection.coord_y,
                                     a.projection.valid);
    b.interp_depth = warp_scalar_map(depth_target, b.projection.coord_x,
                                     b.projection.coord_y, b.projection.valid);
    return bundle;
}

}  // namespace cbw
