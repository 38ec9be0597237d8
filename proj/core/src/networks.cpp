#include "cbw/networks.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cbw/rng.hpp"

namespace cbw {

namespace {

std::atomic<long> g_camera_forward_count{0};

ConvParams make_conv(int out_ch, int in_ch, int kernel, Rng& rng, bool zero_init) {
    const int fan_in = in_ch * kernel * kernel;
    const double bound = zero_init ? 0.0 : std::sqrt(6.0 / fan_in);
    std::vector<double> w(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel);
    for (double& v : w) v = zero_init ? 0.0 : rng.uniform(-bound, bound);
    ConvParams p;
    p.weight = Tensor::from_data({out_ch, in_ch, kernel, kernel}, std::move(w));
    p.bias = Tensor::zeros({out_ch});
    return p;
}

void visit_conv(const std::string& prefix, ConvParams& p, const ParamVisitor& visit) {
    visit(prefix + ".weight", p.weight);
    visit(prefix + ".bias", p.bias);
}

ConvParams clone_conv(const ConvParams& p, bool requires_grad) {
    ConvParams out;
    out.weight = Tensor::from_data(p.weight.shape(), p.weight.values(), requires_grad);
    out.bias = Tensor::from_data(p.bias.shape(), p.bias.values(), requires_grad);
    return out;
}

Tensor conv_block(const Tensor& x, const ConvParams& p, int stride, PadMode pad_mode) {
    return elu(conv2d(x, p.weight, p.bias, stride, Padding{pad_mode, 1}));
}

}  // namespace

void DepthNetParams::for_each(const ParamVisitor& visit) {
    for (std::size_t i = 0; i < encoder.size(); ++i)
        visit_conv("depth.enc" + std::to_string(i), encoder[i], visit);
    for (std::size_t i = 0; i < decoder.size(); ++i)
        visit_conv("depth.dec" + std::to_string(i), decoder[i], visit);
    for (std::size_t i = 0; i < heads.size(); ++i)
        visit_conv("depth.head" + std::to_string(i), heads[i], visit);
}

DepthNetParams DepthNetParams::clone(bool requires_grad) const {
    DepthNetParams out;
    out.config = config;
    for (const ConvParams& p : encoder) out.encoder.push_back(clone_conv(p, requires_grad));
    for (const ConvParams& p : decoder) out.decoder.push_back(clone_conv(p, requires_grad));
    for (const ConvParams& p : heads) out.heads.push_back(clone_conv(p, requires_grad));
    return out;
}

void CameraNetParams::for_each(const ParamVisitor& visit) {
    for (std::size_t i = 0; i < convs.size(); ++i)
        visit_conv("camera.conv" + std::to_string(i), convs[i], visit);
    visit_conv("camera.out", out, visit);
}

CameraNetParams CameraNetParams::clone(bool requires_grad) const {
    CameraNetParams result;
    result.config = config;
    for (const ConvParams& p : convs) result.convs.push_back(clone_conv(p, requires_grad));
    result.out = clone_conv(out, requires_grad);
    return result;
}

std::pair<DepthNetParams, CameraNetParams> init_params(const NetworkConfig& config,
                                                       std::uint64_t seed) {
    Rng rng(seed);
    DepthNetParams depth;
    depth.config = config;
    const auto& enc = config.encoder_widths;
    const auto& dec = config.decoder_widths;
    if (enc.size() != 5 || dec.size() != 5) fail("init_params: expected 5 stages");

    int in_ch = 3;
    for (int width : enc) {
        depth.encoder.push_back(make_conv(width, in_ch, 3, rng, false));
        in_ch = width;
    }
    // Decoder inputs: upsampled previous output plus the skip connection from
    // the encoder stage at the same resolution (none at full resolution).
    for (std::size_t i = 0; i < dec.size(); ++i) {
        const int prev = i == 0 ? enc[4] : dec[i - 1];
        const int skip = i < 4 ? enc[3 - i] : 0;
        depth.decoder.push_back(make_conv(dec[i], prev + skip, 3, rng, false));
    }
    // Heads for scales 2, 1, 0 attach to the last three decoder stages.
    depth.heads.push_back(make_conv(1, dec[4], 3, rng, false));  // scale 0
    depth.heads.push_back(make_conv(1, dec[3], 3, rng, false));  // scale 1
    depth.heads.push_back(make_conv(1, dec[2], 3, rng, false));  // scale 2
    for (ConvParams& head : depth.heads)
        head.bias.mutable_values()[0] = config.depth_head_bias;

    CameraNetParams camera;
    camera.config = config;
    int cam_in = 3 * (1 + config.n_ref);
    for (int width : config.camera_widths) {
        camera.convs.push_back(make_conv(width, cam_in, 3, rng, false));
        cam_in = width;
    }
    camera.out = make_conv(6 * config.n_ref, cam_in, 1, rng, true);
    return {std::move(depth), std::move(camera)};
}

DepthNetOutputs depthnet_forward(const DepthNetParams& params, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) fail("depthnet_forward: image must be [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    if (h % 32 != 0 || w % 32 != 0)
        fail("depthnet_forward: height and width must be divisible by 32");

    Tensor x = reshape(image, {1, 3, h, w});
    std::vector<Tensor> skips;
    for (const ConvParams& p : params.encoder) {
        x = conv_block(x, p, 2, PadMode::Reflect);
        skips.push_back(x);
    }

    Tensor d = skips[4];
    std::vector<Tensor> stages;
    for (std::size_t i = 0; i < params.decoder.size(); ++i) {
        d = upsample_nearest2(d);
        if (i < 4) d = concat(d, skips[3 - i], 1);
        d = conv_block(d, params.decoder[i], 1, PadMode::Reflect);
        stages.push_back(d);
    }

    const auto head_depth = [&](const Tensor& stage, const ConvParams& head) {
        Tensor s = sigmoid(conv2d(stage, head.weight, head.bias, 1,
                                  Padding{PadMode::Reflect, 1}));
        Tensor depth = div(1.0, add(mul(s, params.config.depth_alpha),
                                    params.config.depth_beta));
        return reshape(depth, {depth.dim(2), depth.dim(3)});
    };

    DepthNetOutputs out;
    out.depths.push_back(head_depth(stages[4], params.heads[0]));
    out.depths.push_back(head_depth(stages[3], params.heads[1]));
    out.depths.push_back(head_depth(stages[2], params.heads[2]));
    const Tensor& e1 = skips[0];
    out.features = reshape(e1, {e1.dim(1), e1.dim(2), e1.dim(3)});
    return out;
}

std::vector<Tensor> cameranet_forward(const CameraNetParams& params, const Tensor& stacked) {
    const int expected = 3 * (1 + params.config.n_ref);
    if (stacked.rank() != 3 || stacked.dim(0) != expected)
        fail("cameranet_forward: expected " + std::to_string(expected) + " channels");
    g_camera_forward_count.fetch_add(1, std::memory_order_relaxed);

    Tensor x = reshape(stacked, {1, stacked.dim(0), stacked.dim(1), stacked.dim(2)});
    for (const ConvParams& p : params.convs) x = conv_block(x, p, 2, PadMode::Zero);
    x = conv2d(x, params.out.weight, params.out.bias, 1, Padding{PadMode::Zero, 0});
    Tensor pooled = reduce_mean(x, {0, 2, 3});  // [6*n_ref]
    Tensor scaled = mul(pooled, params.config.pose_scale);

    std::vector<Tensor> out;
    for (int r = 0; r < params.config.n_ref; ++r) out.push_back(slice1d(scaled, 6 * r, 6));
    return out;
}

long cameranet_forward_count() { return g_camera_forward_count.load(); }
void reset_cameranet_forward_count() { g_camera_forward_count.store(0); }

// ---- checkpoint io -------------------------------------------------------------

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) fail("checkpoint: truncated record");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    const std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    for (double v : t.values()) write_f32(os, static_cast<float>(v));
}

}  // namespace

void save_checkpoint(const std::string& path, DepthNetParams& depth,
                     CameraNetParams& camera) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("checkpoint: cannot open for writing: " + path);
    os << "CBWKIT-CKPT v1\n";
    depth.for_each([&](const std::string& name, Tensor& t) { write_tensor(os, name, t); });
    camera.for_each([&](const std::string& name, Tensor& t) { write_tensor(os, name, t); });
    if (!os) fail("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, DepthNetParams& depth,
                     CameraNetParams& camera) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("checkpoint: cannot open: " + path);
    std::string header;
    std::getline(is, header);
    if (header != "CBWKIT-CKPT v1") fail("checkpoint: bad header in " + path);

    const auto read_into = [&](const std::string& expected_name, Tensor& t) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is || name != expected_name)
            fail("checkpoint: expected tensor '" + expected_name + "', found '" + name + "'");
        const std::uint32_t rank = read_u32(is);
        if (rank != static_cast<std::uint32_t>(t.rank()))
            fail("checkpoint: rank mismatch for " + name);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint32_t d = read_u32(is);
            if (d != static_cast<std::uint32_t>(t.dim(static_cast<int>(i))))
                fail("checkpoint: shape mismatch for " + name);
            numel *= d;
        }
        std::vector<double>& vals = t.mutable_values();
        for (std::size_t i = 0; i < numel; ++i) vals[i] = static_cast<double>(read_f32(is));
    };
    depth.for_each([&](const std::string& name, Tensor& t) { read_into(name, t); });
    camera.for_each([&](const std::string& name, Tensor& t) { read_into(name, t); });
}

}  // namespace cbw
