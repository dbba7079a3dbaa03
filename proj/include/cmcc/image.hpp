#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmcc/tensor.hpp"

namespace cmcc {

/// 8-bit RGB raster, height x width x 3.
using RgbImage = Tensor3<std::uint8_t>;

// Binary PPM (P6). Comments are accepted in the header; maxval must be 1..255.
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

Tensor3<float> to_float(const RgbImage& image);

/// Rounds to nearest and clamps into [0, 255].
RgbImage quantize(const Tensor3<float>& image);

/// Bilinear resize with half-pixel-centre alignment; edge samples clamp.
Tensor3<float> resize_bilinear(const Tensor3<float>& src, int out_height, int out_width);

/// The window [row0, row0 + win_h) x [col0, col0 + win_w) of the bilinear
/// resize of src to out_height x out_width, without computing the rest.
Tensor3<float> resize_bilinear_window(const Tensor3<float>& src, int out_height, int out_width, int row0, int col0,
                                      int win_h, int win_w);

}  // namespace cmcc
