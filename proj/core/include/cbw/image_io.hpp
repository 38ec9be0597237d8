#pragma once

#include <string>

#include "cbw/tensor.hpp"

namespace cbw {

// Binary PPM (P6, maxval 255). Image values in [0,1], shape [3,H,W].
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// 16-bit binary PGM (P5, maxval 65535, big-endian samples per Netpbm).
// Encodes depth as round(depth * 256); decode divides by 256.
void write_depth_pgm16(const std::string& path, const Tensor& depth);
Tensor read_depth_pgm16(const std::string& path);

// 8-bit binary PGM; 0/255 for {0,1} masks, values scaled by 255 otherwise.
void write_mask_pgm(const std::string& path, const Tensor& mask);
Tensor read_mask_pgm(const std::string& path);

// Grayscale visualization helpers ([H,W] map to [3,H,W] in [0,1]).
Tensor normalize_for_display(const Tensor& map);

}  // namespace cbw
