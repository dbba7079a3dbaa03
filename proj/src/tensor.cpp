#include "cmcc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cmcc {

namespace {

int conv_out_dim(int dim, int k, int pad, int stride, const char* axis) {
    const int span = dim + 2 * pad - k;
    if (span < 0 || span % stride != 0) {
        throw ShapeError(std::string("conv2d: ") + axis + " extent " + std::to_string(dim) + " with kernel " +
                         std::to_string(k) + ", pad " + std::to_string(pad) + ", stride " + std::to_string(stride) +
                         " does not give an integer output size");
    }
    return span / stride + 1;
}

// Convolution runs as a product with a patch matrix: row k = (ky, kx, ci)
// matches the kernel row order, column p = y * out_w + x, zeros where the tap
// lands in the padding. Keeping output positions innermost gives long
// contiguous loops; the channel counts here are only 3 to 38.
template <typename T>
struct Patches {
    int rows = 0;
    int cols = 0;
    std::vector<T> values;
};

template <typename T>
Patches<T> im2col(const Tensor3<T>& input, int kh, int kw, int pad, int stride, int out_h, int out_w) {
    const int cin = input.channels();
    Patches<T> m{kh * kw * cin, out_h * out_w, {}};
    m.values.assign(static_cast<std::size_t>(m.rows) * m.cols, T{});
    for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
            for (int y = 0; y < out_h; ++y) {
                const int iy = y * stride + ky - pad;
                if (iy < 0 || iy >= input.height()) continue;
                for (int x = 0; x < out_w; ++x) {
                    const int ix = x * stride + kx - pad;
                    if (ix < 0 || ix >= input.width()) continue;
                    const T* in = input.pixel(iy, ix);
                    const std::size_t col = static_cast<std::size_t>(y) * out_w + x;
                    for (int ci = 0; ci < cin; ++ci) {
                        const std::size_t row = static_cast<std::size_t>((ky * kw + kx) * cin + ci);
                        m.values[row * m.cols + col] = in[ci];
                    }
                }
            }
        }
    }
    return m;
}

// Channel-major copy of an H x W x C tensor: out[c * H * W + p].
template <typename T>
std::vector<T> planar(const Tensor3<T>& t) {
    const std::size_t n = static_cast<std::size_t>(t.height()) * t.width();
    const int c = t.channels();
    std::vector<T> out(n * c);
    const auto src = t.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int ch = 0; ch < c; ++ch) out[ch * n + p] = src[p * c + ch];
    return out;
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    // eight independent partial sums so the loop vectorizes without reassociation flags
    T part[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) part[j] += a[i + j] * b[i + j];
    T s{};
    for (; i < n; ++i) s += a[i] * b[i];
    for (int j = 0; j < 8; ++j) s += part[j];
    return s;
}

}  // namespace

template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& input, const Kernel4<T>& kernel, int pad, int stride) {
    if (kernel.empty()) throw ShapeError("conv2d: empty kernel");
    if (kernel.cin() != input.channels()) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.cin()) + " input channels, input " +
                         input.shape() + " has " + std::to_string(input.channels()));
    }
    if (pad < 0 || stride < 1) throw ShapeError("conv2d: pad must be >= 0 and stride >= 1");

    const int out_h = conv_out_dim(input.height(), kernel.kh(), pad, stride, "height");
    const int out_w = conv_out_dim(input.width(), kernel.kw(), pad, stride, "width");
    const int cout = kernel.cout();
    const auto cols = im2col(input, kernel.kh(), kernel.kw(), pad, stride, out_h, out_w);
    const std::size_t n = cols.cols;
    const auto w = kernel.data();

    // Tiles of output positions keep the accumulators in L1.
    constexpr std::size_t kTile = 256;
    std::vector<T> acc(n * cout, T{});
    for (std::size_t p0 = 0; p0 < n; p0 += kTile) {
        const std::size_t len = std::min(kTile, n - p0);
        for (int k = 0; k < cols.rows; ++k) {
            const T* src = cols.values.data() + static_cast<std::size_t>(k) * n + p0;
            for (int co = 0; co < cout; ++co) {
                const T wk = w[static_cast<std::size_t>(k) * cout + co];
                T* dst = acc.data() + co * n + p0;
                for (std::size_t p = 0; p < len; ++p) dst[p] += wk * src[p];
            }
        }
    }

    Tensor3<T> out(out_h, out_w, cout);
    auto o = out.data();
    for (std::size_t p = 0; p < n; ++p)
        for (int co = 0; co < cout; ++co) o[p * cout + co] = acc[co * n + p];
    return out;
}

template <typename T>
void conv2d_backward(const Tensor3<T>& input, const Kernel4<T>& kernel, const Tensor3<T>& grad_output, int pad,
                     int stride, Kernel4<T>& grad_kernel, Tensor3<T>* grad_input) {
    if (!grad_kernel.same_shape(kernel)) throw ShapeError("conv2d_backward: grad_kernel shape mismatch");
    const int out_h = conv_out_dim(input.height(), kernel.kh(), pad, stride, "height");
    const int out_w = conv_out_dim(input.width(), kernel.kw(), pad, stride, "width");
    if (grad_output.height() != out_h || grad_output.width() != out_w || grad_output.channels() != kernel.cout()) {
        throw ShapeError("conv2d_backward: grad_output " + grad_output.shape() + " does not match forward output");
    }

    const int cin = kernel.cin();
    const int cout = kernel.cout();
    const auto cols = im2col(input, kernel.kh(), kernel.kw(), pad, stride, out_h, out_w);
    const std::size_t n = cols.cols;
    const auto g = planar(grad_output);

    auto gw = grad_kernel.data();
    for (int k = 0; k < cols.rows; ++k) {
        const T* src = cols.values.data() + static_cast<std::size_t>(k) * n;
        for (int co = 0; co < cout; ++co) gw[static_cast<std::size_t>(k) * cout + co] += dot(src, g.data() + co * n, n);
    }
    if (grad_input == nullptr) return;

    *grad_input = Tensor3<T>(input.height(), input.width(), input.channels());
    const auto w = kernel.data();
    std::vector<T> dcol(n);
    for (int ky = 0; ky < kernel.kh(); ++ky) {
        for (int kx = 0; kx < kernel.kw(); ++kx) {
            for (int ci = 0; ci < cin; ++ci) {
                const std::size_t k = static_cast<std::size_t>((ky * kernel.kw() + kx) * cin + ci);
                std::fill(dcol.begin(), dcol.end(), T{});
                for (int co = 0; co < cout; ++co) {
                    const T wk = w[k * cout + co];
                    const T* gp = g.data() + co * n;
                    for (std::size_t p = 0; p < n; ++p) dcol[p] += wk * gp[p];
                }
                for (int y = 0; y < out_h; ++y) {
                    const int iy = y * stride + ky - pad;
                    if (iy < 0 || iy >= input.height()) continue;
                    for (int x = 0; x < out_w; ++x) {
                        const int ix = x * stride + kx - pad;
                        if (ix < 0 || ix >= input.width()) continue;
                        (*grad_input)(iy, ix, ci) += dcol[static_cast<std::size_t>(y) * out_w + x];
                    }
                }
            }
        }
    }
}

template <typename T>
PoolResult<T> maxpool2x2(const Tensor3<T>& input) {
    if (input.empty()) throw ShapeError("maxpool2x2: empty input");
    if (input.height() % 2 != 0 || input.width() % 2 != 0) {
        throw ShapeError("maxpool2x2: input " + input.shape() + " has an odd spatial dimension");
    }
    const int oh = input.height() / 2;
    const int ow = input.width() / 2;
    const int c = input.channels();
    PoolResult<T> res{Tensor3<T>(oh, ow, c), PoolRouting{input.height(), input.width(), c, {}}};
    res.routing.source.resize(res.output.size());

    std::size_t k = 0;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int ch = 0; ch < c; ++ch, ++k) {
                // Row-major scan; strict '>' keeps the first maximum on ties.
                int best_r = 2 * y;
                int best_c = 2 * x;
                T best = input(best_r, best_c, ch);
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const T v = input(2 * y + dy, 2 * x + dx, ch);
                        if (v > best) {
                            best = v;
                            best_r = 2 * y + dy;
                            best_c = 2 * x + dx;
                        }
                    }
                }
                res.output(y, x, ch) = best;
                res.routing.source[k] = best_r * input.width() + best_c;
            }
        }
    }
    return res;
}

template <typename T>
Tensor3<T> maxpool2x2_backward(const Tensor3<T>& grad_output, const PoolRouting& routing) {
    if (grad_output.height() != routing.out_height() || grad_output.width() != routing.out_width() ||
        grad_output.channels() != routing.channels) {
        throw ShapeError("maxpool2x2_backward: gradient " + grad_output.shape() + " does not match routing");
    }
    Tensor3<T> grad_in(routing.in_height, routing.in_width, routing.channels);
    for (int y = 0; y < grad_output.height(); ++y) {
        for (int x = 0; x < grad_output.width(); ++x) {
            for (int ch = 0; ch < routing.channels; ++ch) {
                const std::int32_t src = routing.at(y, x, ch);
                grad_in(src / routing.in_width, src % routing.in_width, ch) += grad_output(y, x, ch);
            }
        }
    }
    return grad_in;
}

template <typename T>
Tensor3<T> relu(const Tensor3<T>& input) {
    Tensor3<T> out = input;
    for (T& v : out.data()) v = std::max(v, T{0});
    return out;
}

template <typename T>
Tensor3<T> relu_backward(const Tensor3<T>& grad_output, const Tensor3<T>& relu_input) {
    if (!grad_output.same_shape(relu_input)) throw ShapeError("relu_backward: shape mismatch");
    Tensor3<T> out = grad_output;
    auto g = out.data();
    auto x = relu_input.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] > T{0})) g[i] = T{0};
    }
    return out;
}

template <typename T>
std::array<T, 3> global_avg_pool(const Tensor3<T>& input) {
    if (input.channels() != 3) {
        throw ShapeError("global_avg_pool: expected 3 channels, got " + input.shape());
    }
    std::array<double, 3> sum{};
    auto d = input.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        sum[0] += d[i];
        sum[1] += d[i + 1];
        sum[2] += d[i + 2];
    }
    const double count = static_cast<double>(input.height()) * input.width();
    return {static_cast<T>(sum[0] / count), static_cast<T>(sum[1] / count), static_cast<T>(sum[2] / count)};
}

template <typename T>
Normalized<T> l2_normalize(const std::array<T, 3>& v) {
    const double n = std::sqrt(static_cast<double>(v[0]) * v[0] + static_cast<double>(v[1]) * v[1] +
                               static_cast<double>(v[2]) * v[2]);
    Normalized<T> res;
    res.norm = static_cast<T>(n);
    if (!(n >= kNormEpsilon)) {
        const T g = static_cast<T>(1.0 / std::sqrt(3.0));
        res.unit = {g, g, g};
        res.degenerate = true;
        return res;
    }
    res.unit = {static_cast<T>(v[0] / n), static_cast<T>(v[1] / n), static_cast<T>(v[2] / n)};
    return res;
}

#define CMCC_INSTANTIATE_TENSOR_OPS(T)                                                                          \
    template Tensor3<T> conv2d(const Tensor3<T>&, const Kernel4<T>&, int, int);                                 \
    template void conv2d_backward(const Tensor3<T>&, const Kernel4<T>&, const Tensor3<T>&, int, int, Kernel4<T>&, \
                                  Tensor3<T>*);                                                                 \
    template PoolResult<T> maxpool2x2(const Tensor3<T>&);                                                       \
    template Tensor3<T> maxpool2x2_backward(const Tensor3<T>&, const PoolRouting&);                             \
    template Tensor3<T> relu(const Tensor3<T>&);                                                                \
    template Tensor3<T> relu_backward(const Tensor3<T>&, const Tensor3<T>&);                                    \
    template std::array<T, 3> global_avg_pool(const Tensor3<T>&);                                              \
    template Normalized<T> l2_normalize(const std::array<T, 3>&);

CMCC_INSTANTIATE_TENSOR_OPS(float)
CMCC_INSTANTIATE_TENSOR_OPS(double)

#undef CMCC_INSTANTIATE_TENSOR_OPS

}  // namespace cmcc
