#include "cbw/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cbw {

namespace {

void read_pnm_header(std::istream& is, const char* magic, int& w, int& h, int& maxval,
                     const std::string& path) {
    std::string m;
    is >> m;
    if (m != magic) fail("image: bad magic in " + path);
    is >> w >> h >> maxval;
    if (!is || w <= 0 || h <= 0) fail("image: bad header in " + path);
    is.get();  // single whitespace before raster
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) fail("write_ppm: expected [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("write_ppm: cannot open " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    const std::vector<double>& v = image.values();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double raw = v[static_cast<std::size_t>(c) * plane + y * w + x];
                const int q = static_cast<int>(std::lround(std::clamp(raw, 0.0, 1.0) * 255.0));
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(q);
            }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) fail("write_ppm: write failed " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("read_ppm: cannot open " + path);
    int w = 0, h = 0, maxval = 0;
    read_pnm_header(is, "P6", w, h, maxval, path);
    if (maxval != 255) fail("read_ppm: unsupported maxval in " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) fail("read_ppm: truncated raster in " + path);
    std::vector<double> v(raw.size());
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                v[static_cast<std::size_t>(c) * plane + y * w + x] =
                    raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return Tensor::from_data({3, h, w}, std::move(v));
}

void write_depth_pgm16(const std::string& path, const Tensor& depth) {
    if (depth.rank() != 2) fail("write_depth_pgm16: expected [H,W]");
    const int h = depth.dim(0), w = depth.dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("write_depth_pgm16: cannot open " + path);
    os << "P5\n" << w << " " << h << "\n65535\n";
    for (double d : depth.values()) {
        const long q = std::lround(std::clamp(d, 0.0, 255.99) * 256.0);
        const unsigned val = static_cast<unsigned>(std::min(q, 65535L));
        const unsigned char b[2] = {static_cast<unsigned char>((val >> 8) & 0xff),
                                    static_cast<unsigned char>(val & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) fail("write_depth_pgm16: write failed " + path);
}

Tensor read_depth_pgm16(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("read_depth_pgm16: cannot open " + path);
    int w = 0, h = 0, maxval = 0;
    read_pnm_header(is, "P5", w, h, maxval, path);
    if (maxval != 65535) fail("read_depth_pgm16: unsupported maxval in " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 2);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) fail("read_depth_pgm16: truncated raster in " + path);
    std::vector<double> v(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const unsigned val = (static_cast<unsigned>(raw[i * 2]) << 8) | raw[i * 2 + 1];
        v[i] = static_cast<double>(val) / 256.0;
    }
    return Tensor::from_data({h, w}, std::move(v));
}

void write_mask_pgm(const std::string& path, const Tensor& mask) {
    if (mask.rank() != 2) fail("write_mask_pgm: expected [H,W]");
    const int h = mask.dim(0), w = mask.dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("write_mask_pgm: cannot open " + path);
    os << "P5\n" << w << " " << h << "\n255\n";
    for (double m : mask.values()) {
        const int q = static_cast<int>(std::lround(std::clamp(m, 0.0, 1.0) * 255.0));
        const unsigned char b = static_cast<unsigned char>(q);
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!os) fail("write_mask_pgm: write failed " + path);
}

Tensor read_mask_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("read_mask_pgm: cannot open " + path);
    int w = 0, h = 0, maxval = 0;
    read_pnm_header(is, "P5", w, h, maxval, path);
    if (maxval != 255) fail("read_mask_pgm: unsupported maxval in " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) fail("read_mask_pgm: truncated raster in " + path);
    std::vector<double> v(raw.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = raw[i] / 255.0;
    return Tensor::from_data({h, w}, std::move(v));
}

Tensor normalize_for_display(const Tensor& map) {
    if (map.rank() != 2) fail("normalize_for_display: expected [H,W]");
    const std::vector<double>& v = map.values();
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
    std::vector<double> out(v.size() * 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = (v[i] - lo) / span;
        out[i] = g;
        out[v.size() + i] = g;
        out[2 * v.size() + i] = g;
    }
    return Tensor::from_data({3, map.dim(0), map.dim(1)}, std::move(out));
}

}  // namespace cbw
