#pragma once

#include <optional>
#include <string_view>

#include "cmcc/tensor.hpp"

namespace cmcc {

// Statistical illuminant estimators. Inputs are linear RGB images of any
// scale; a pixel with all three channels at zero counts as masked.

struct BaselineConfig {
    double minkowski_p = 6.0;  // shades-of-gray norm; gray-edge uses edge_p
    double edge_p = 1.0;
    int edge_order = 1;
    bool exclude_masked = true;
};

/// Unit illuminant estimate. `fallback` is set when the estimator had no
/// usable signal and returned the gray direction.
struct Estimate {
    Vec3 illuminant{};
    bool fallback = false;
};

Estimate gray_world(const Tensor3<float>& image, bool exclude_masked = true);
Estimate white_patch(const Tensor3<float>& image, bool exclude_masked = true);
Estimate shades_of_gray(const Tensor3<float>& image, double p, bool exclude_masked = true);

/// Minkowski-p mean of per-channel derivative magnitudes at interior pixels:
/// order 1 uses the central-difference gradient norm, order 2 the absolute
/// 5-point Laplacian. Responses whose stencil touches a masked pixel are skipped.
Estimate gray_edge(const Tensor3<float>& image, int order, double p, bool exclude_masked = true);

enum class Algorithm { GrayWorld, WhitePatch, ShadesOfGray, GrayEdge1, GrayEdge2, ConvMean };

std::optional<Algorithm> parse_algorithm(std::string_view name);  // grayworld|whitepatch|sog|ge1|ge2|cm
std::string_view algorithm_name(Algorithm a);

/// Dispatches one of the statistical baselines (not ConvMean).
Estimate run_baseline(Algorithm algo, const Tensor3<float>& image, const BaselineConfig& config = {});

}  // namespace cmcc
