#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmcc/tensor.hpp"

namespace cmcc {

/// Network layout. The byte values are the CMW1 variant codes.
enum class Variant : std::uint8_t {
    CM = 0,           // conv3x3(3->7), g, conv3x3(7->14), g, conv1x1(14->3), ReLU, GAP
    NoMaxPool = 1,    // g without the 2x2 max-pool
    NoReLU = 2,       // g without the ReLU (the ReLU after the 1x1 conv stays)
    SingleConv = 3,   // conv3x3(3->38), g, conv1x1(38->3), ReLU, GAP
    ChromaInput = 4,  // CM layout fed with rgb chromaticity instead of max-normalized RGB
};

std::string_view variant_name(Variant v);  // "cm", "cm-a", ...
std::optional<Variant> parse_variant(std::string_view name);

/// The three bias-free filter banks. For SingleConv, f2 is absent (empty).
template <typename T>
struct BasicParams {
    Variant variant = Variant::CM;
    Kernel4<T> f1;
    Kernel4<T> f2;
    Kernel4<T> f3;

    /// Zero-filled banks with the layout of the given variant.
    static BasicParams zeros(Variant variant);

    std::size_t param_count() const { return f1.size() + f2.size() + f3.size(); }
    bool same_layout(const BasicParams& o) const {
        return variant == o.variant && f1.same_shape(o.f1) && f2.same_shape(o.f2) && f3.same_shape(o.f3);
    }

    std::array<Kernel4<T>*, 3> banks() { return {&f1, &f2, &f3}; }
    std::array<const Kernel4<T>*, 3> banks() const { return {&f1, &f2, &f3}; }

    template <typename U>
    BasicParams<U> cast() const {
        return {variant, f1.template cast<U>(), f2.template cast<U>(), f3.template cast<U>()};
    }
};

using CmParams = BasicParams<float>;
using ParamGrads = BasicParams<float>;

/// Intermediate activations kept for the backward pass.
/// For CM at 32x48 input the trace is
/// 32x48x3 -> 32x48x7 -> 16x24x7 -> 16x24x14 -> 8x12x14 -> 8x12x3 -> 3.
template <typename T>
struct ForwardCache {
    Variant variant = Variant::CM;
    std::uint64_t params_fingerprint = 0;

    Tensor3<T> input;
    Tensor3<T> conv1;   // input * F1
    PoolRouting pool1;  // empty when the variant has no pooling
    Tensor3<T> pooled1;
    Tensor3<T> act1;    // g(conv1)
    Tensor3<T> conv2;   // act1 * F2 (absent for SingleConv)
    PoolRouting pool2;
    Tensor3<T> pooled2;
    Tensor3<T> act2;    // g(conv2)
    Tensor3<T> conv3;   // 1x1 weighting
    Tensor3<T> act3;    // ReLU(conv3), the 3-channel response map
    std::array<T, 3> pre_norm{};
};

template <typename T>
struct ForwardResult {
    std::array<T, 3> estimate{};
    bool degenerate = false;
    ForwardCache<T> cache;
};

/// Weights ~ Normal(0, sqrt(2 / (kh*kw*cin))) from a seeded mt19937_64.
CmParams init_kaiming(std::uint64_t seed, Variant variant = Variant::CM);

/// FNV-1a over the variant byte and the raw weight bytes.
template <typename T>
std::uint64_t fingerprint(const BasicParams<T>& params);

/// Runs the network on a prepared H x W x 3 input. Spatial dimensions must be
/// divisible by 4 (by 2 for SingleConv, anything for NoMaxPool).
template <typename T>
ForwardResult<T> forward(const BasicParams<T>& params, const Tensor3<T>& input);

/// Gradients of a loss with respect to F1, F2, F3 given dL/d(estimate).
/// Throws std::invalid_argument if the cache was produced with other parameters.
template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardCache<T>& cache,
                        const std::array<T, 3>& d_loss_d_estimate);

/// Divides by the single global maximum so the peak becomes exactly 1.
/// Throws DataError when the image has no positive value.
Tensor3<float> max_normalize(const Tensor3<float>& image);

/// Per-pixel r = R / (R + G + B) etc.; black pixels stay black.
Tensor3<float> chromaticity(const Tensor3<float>& image);

/// Network input for a variant: rgb chromaticity for ChromaInput, max-normalized
/// RGB otherwise.
Tensor3<float> prepare_input(const Tensor3<float>& image, Variant variant);
Tensor3<float> prepare_input(const Tensor3<std::uint8_t>& pixels, Variant variant);

struct FeatureMaps {
    Tensor3<float> features;  // last g() output (14 channels for CM)
    Tensor3<float> response;  // 3-channel ReLU response before averaging
    Tensor3<float> focus;     // channel mean of response, min-max scaled to [0, 1]
};

FeatureMaps dump_feature_maps(const CmParams& params, const Tensor3<float>& input);

// CMW1 weight file: "CMW1", version 0x01, variant byte, two zero bytes, then
// little-endian float32 weights of F1, F2, F3 in [kh][kw][cin][cout] order.
inline constexpr std::size_t kCmwHeaderSize = 8;
inline constexpr std::uint8_t kCmwVersion = 1;

std::vector<std::uint8_t> serialize(const CmParams& params);
CmParams deserialize(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const CmParams& params);
CmParams load_model(const std::filesystem::path& path);

}  // namespace cmcc
