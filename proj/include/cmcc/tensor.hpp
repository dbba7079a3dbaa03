#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmcc/errors.hpp"

namespace cmcc {

using Vec3 = std::array<double, 3>;

/// Dense H x W x C array stored row-major with channels innermost.
template <typename T>
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int height, int width, int channels, T fill = T{})
        : height_(height), width_(width), channels_(channels) {
        if (height <= 0 || width <= 0 || channels <= 0) {
            throw ShapeError("Tensor3 dimensions must be positive, got " + shape_string(height, width, channels));
        }
        data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int row, int col, int ch) { return data_[index(row, col, ch)]; }
    const T& operator()(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

    T* pixel(int row, int col) { return data_.data() + index(row, col, 0); }
    const T* pixel(int row, int col) const { return data_.data() + index(row, col, 0); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool same_shape(const Tensor3& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    std::string shape() const { return shape_string(height_, width_, channels_); }

    template <typename U>
    Tensor3<U> cast() const {
        Tensor3<U> out(height_, width_, channels_);
        auto dst = out.data();
        for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
        return out;
    }

    static std::string shape_string(int h, int w, int c) {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }

private:
    std::size_t index(int row, int col, int ch) const {
        return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

/// Convolution filter bank indexed [kh][kw][cin][cout]. No bias.
/// A default-constructed kernel is "absent" (used by the single-conv variant).
template <typename T>
class Kernel4 {
public:
    Kernel4() = default;
    Kernel4(int kh, int kw, int cin, int cout, T fill = T{}) : kh_(kh), kw_(kw), cin_(cin), cout_(cout) {
        if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0) {
            throw ShapeError("Kernel4 dimensions must be positive");
        }
        weights_.assign(static_cast<std::size_t>(kh) * kw * cin * cout, fill);
    }

    int kh() const { return kh_; }
    int kw() const { return kw_; }
    int cin() const { return cin_; }
    int cout() const { return cout_; }
    std::size_t size() const { return weights_.size(); }
    bool empty() const { return weights_.empty(); }

    T& operator()(int ky, int kx, int ci, int co) { return weights_[index(ky, kx, ci, co)]; }
    const T& operator()(int ky, int kx, int ci, int co) const { return weights_[index(ky, kx, ci, co)]; }

    /// Pointer to the cout-long row for tap (ky, kx) and input channel ci.
    const T* row(int ky, int kx, int ci) const { return weights_.data() + index(ky, kx, ci, 0); }
    T* row(int ky, int kx, int ci) { return weights_.data() + index(ky, kx, ci, 0); }

    std::span<T> data() { return weights_; }
    std::span<const T> data() const { return weights_; }

    bool same_shape(const Kernel4& o) const {
        return kh_ == o.kh_ && kw_ == o.kw_ && cin_ == o.cin_ && cout_ == o.cout_;
    }

    template <typename U>
    Kernel4<U> cast() const {
        if (empty()) return {};
        Kernel4<U> out(kh_, kw_, cin_, cout_);
        auto dst = out.data();
        for (std::size_t i = 0; i < weights_.size(); ++i) dst[i] = static_cast<U>(weights_[i]);
        return out;
    }

private:
    std::size_t index(int ky, int kx, int ci, int co) const {
        return ((static_cast<std::size_t>(ky) * kw_ + kx) * cin_ + ci) * cout_ + co;
    }

    int kh_ = 0;
    int kw_ = 0;
    int cin_ = 0;
    int cout_ = 0;
    std::vector<T> weights_;
};

/// Argmax bookkeeping of a 2x2 max-pool: for every output cell and channel,
/// the flat spatial index (row * in_width + col) of the winning input.
struct PoolRouting {
    int in_height = 0;
    int in_width = 0;
    int channels = 0;
    std::vector<std::int32_t> source;  // out_h * out_w * channels entries

    int out_height() const { return in_height / 2; }
    int out_width() const { return in_width / 2; }
    std::int32_t at(int row, int col, int ch) const {
        return source[(static_cast<std::size_t>(row) * out_width() + col) * channels + ch];
    }
};

template <typename T>
struct PoolResult {
    Tensor3<T> output;
    PoolRouting routing;
};

template <typename T>
struct Normalized {
    std::array<T, 3> unit{};
    T norm{};
    bool degenerate = false;
};

inline constexpr double kNormEpsilon = 1e-9;

/// Cross-correlation with zero padding. Output is
/// ((H + 2*pad - kh) / stride + 1) x ((W + 2*pad - kw) / stride + 1) x cout.
template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& input, const Kernel4<T>& kernel, int pad, int stride);

/// Accumulates dL/dkernel into grad_kernel and, when grad_input is non-null,
/// writes dL/dinput into it (resized to the input shape).
template <typename T>
void conv2d_backward(const Tensor3<T>& input, const Kernel4<T>& kernel, const Tensor3<T>& grad_output, int pad,
                     int stride, Kernel4<T>& grad_kernel, Tensor3<T>* grad_input);

template <typename T>
PoolResult<T> maxpool2x2(const Tensor3<T>& input);

template <typename T>
Tensor3<T> maxpool2x2_backward(const Tensor3<T>& grad_output, const PoolRouting& routing);

template <typename T>
Tensor3<T> relu(const Tensor3<T>& input);

/// Passes gradient where the ReLU input was strictly positive.
template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& grad_output, const Tensor3<T>& relu_input);

template <typename T>
std::array<T, 3> global_avg_pool(const Tensor3<T>& input);

/// v / |v|, or the gray direction (1,1,1)/sqrt(3) with degenerate set when |v| < 1e-9.
template <typename T>
Normalized<T> l2_normalize(const std::array<T, 3>& v);

}  // namespace cmcc
