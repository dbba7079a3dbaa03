#include "cmcc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cmcc {

namespace {

bool is_masked(const float* px) { return px[0] == 0.0f && px[1] == 0.0f && px[2] == 0.0f; }

void require_rgb(const Tensor3<float>& image, const char* who) {
    if (image.channels() != 3) throw ShapeError(std::string(who) + ": expected an RGB image, got " + image.shape());
}

Estimate normalized(const Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n >= kNormEpsilon) || !std::isfinite(n)) {
        const double g = 1.0 / std::sqrt(3.0);
        return {{g, g, g}, true};
    }
    return {{v[0] / n, v[1] / n, v[2] / n}, false};
}

// Power mean ((sum x^p) / N)^(1/p), scaled by the max to keep x^p in range.
class MinkowskiAccumulator {
public:
    void add(double x) {
        values_.push_back(x);
        peak_ = std::max(peak_, x);
    }
    std::size_t count() const { return values_.size(); }
    double mean(double p) const {
        if (values_.empty() || peak_ <= 0.0) return 0.0;
        double s = 0.0;
        if (p == 1.0) {
            for (double x : values_) s += x;
            return s / static_cast<double>(values_.size());
        }
        for (double x : values_) s += std::pow(x / peak_, p);
        return peak_ * std::pow(s / static_cast<double>(values_.size()), 1.0 / p);
    }

private:
    std::vector<double> values_;
    double peak_ = 0.0;
};

template <typename Reduce>
Estimate per_channel(const Tensor3<float>& image, bool exclude_masked, const char* who, Reduce reduce) {
    require_rgb(image, who);
    MinkowskiAccumulator acc[3];
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const float* px = image.pixel(y, x);
            if (exclude_masked && is_masked(px)) continue;
            for (int c = 0; c < 3; ++c) acc[c].add(px[c]);
        }
    }
    if (acc[0].count() == 0) throw DataError(std::string(who) + ": image has no unmasked pixels");
    return normalized({reduce(acc[0]), reduce(acc[1]), reduce(acc[2])});
}

}  // namespace

Estimate gray_world(const Tensor3<float>& image, bool exclude_masked) {
    return shades_of_gray(image, 1.0, exclude_masked);
}

Estimate white_patch(const Tensor3<float>& image, bool exclude_masked) {
    require_rgb(image, "white_patch");
    Vec3 peak{};
    bool any = false;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const float* px = image.pixel(y, x);
            if (exclude_masked && is_masked(px)) continue;
            any = true;
            for (int c = 0; c < 3; ++c) peak[c] = std::max(peak[c], static_cast<double>(px[c]));
        }
    }
    if (!any) throw DataError("white_patch: image has no unmasked pixels");
    return normalized(peak);
}

Estimate shades_of_gray(const Tensor3<float>& image, double p, bool exclude_masked) {
    if (!(p >= 1.0)) throw std::invalid_argument("shades_of_gray: p must be >= 1");
    return per_channel(image, exclude_masked, "shades_of_gray",
                       [p](const MinkowskiAccumulator& a) { return a.mean(p); });
}

Estimate gray_edge(const Tensor3<float>& image, int order, double p, bool exclude_masked) {
    require_rgb(image, "gray_edge");
    if (order != 1 && order != 2) throw std::invalid_argument("gray_edge: order must be 1 or 2");
    if (!(p >= 1.0)) throw std::invalid_argument("gray_edge: p must be >= 1");
    if (image.height() < 3 || image.width() < 3) throw ShapeError("gray_edge: image must be at least 3x3");

    MinkowskiAccumulator acc[3];
    for (int y = 1; y + 1 < image.height(); ++y) {
        for (int x = 1; x + 1 < image.width(); ++x) {
            const float* c = image.pixel(y, x);
            const float* l = image.pixel(y, x - 1);
            const float* r = image.pixel(y, x + 1);
            const float* u = image.pixel(y - 1, x);
            const float* d = image.pixel(y + 1, x);
            if (exclude_masked &&
                (is_masked(c) || is_masked(l) || is_masked(r) || is_masked(u) || is_masked(d))) {
                continue;
            }
            for (int ch = 0; ch < 3; ++ch) {
                double response;
                if (order == 1) {
                    const double gx = (static_cast<double>(r[ch]) - l[ch]) / 2.0;
                    const double gy = (static_cast<double>(d[ch]) - u[ch]) / 2.0;
                    response = std::sqrt(gx * gx + gy * gy);
                } else {
                    const double lap = static_cast<double>(r[ch]) + l[ch] + d[ch] + u[ch] - 4.0 * c[ch];
                    response = std::abs(lap);
                }
                acc[ch].add(response);
            }
        }
    }
    if (acc[0].count() == 0) {
        const double g = 1.0 / std::sqrt(3.0);
        return {{g, g, g}, true};
    }
    return normalized({acc[0].mean(p), acc[1].mean(p), acc[2].mean(p)});
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
    for (auto a : {Algorithm::GrayWorld, Algorithm::WhitePatch, Algorithm::ShadesOfGray, Algorithm::GrayEdge1,
                   Algorithm::GrayEdge2, Algorithm::ConvMean}) {
        if (algorithm_name(a) == name) return a;
    }
    return std::nullopt;
}

std::string_view algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::GrayWorld: return "grayworld";
        case Algorithm::WhitePatch: return "whitepatch";
        case Algorithm::ShadesOfGray: return "sog";
        case Algorithm::GrayEdge1: return "ge1";
        case Algorithm::GrayEdge2: return "ge2";
        case Algorithm::ConvMean: return "cm";
    }
    return "unknown";
}

Estimate run_baseline(Algorithm algo, const Tensor3<float>& image, const BaselineConfig& config) {
    switch (algo) {
        case Algorithm::GrayWorld: return gray_world(image, config.exclude_masked);
        case Algorithm::WhitePatch: return white_patch(image, config.exclude_masked);
        case Algorithm::ShadesOfGray: return shades_of_gray(image, config.minkowski_p, config.exclude_masked);
        case Algorithm::GrayEdge1: return gray_edge(image, 1, config.edge_p, config.exclude_masked);
        case Algorithm::GrayEdge2: return gray_edge(image, 2, config.edge_p, config.exclude_masked);
        case Algorithm::ConvMean: break;
    }
    throw std::invalid_argument("run_baseline: the CM network is not a statistical baseline");
}

}  // namespace cmcc
