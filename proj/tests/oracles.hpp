#pragma once

// Independent 64-bit reference computations used by the unit and acceptance
// tests. Nothing here calls into the library's numeric code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "cmcc/model.hpp"
#include "cmcc/tensor.hpp"

namespace oracle {

struct Grid {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;
    double at(int y, int x, int ch) const { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

template <typename T>
Grid to_grid(const cmcc::Tensor3<T>& t) {
    Grid g{t.height(), t.width(), t.channels(), {}};
    for (auto x : t.data()) g.v.push_back(static_cast<double>(x));
    return g;
}

/// Direct correlation: out[y][x][o] = sum over taps of in[y*s+i-p][x*s+j-p][c] * k[i][j][c][o].
template <typename T>
Grid conv(const Grid& in, const cmcc::Kernel4<T>& k, int pad, int stride) {
    const int oh = (in.h + 2 * pad - k.kh()) / stride + 1;
    const int ow = (in.w + 2 * pad - k.kw()) / stride + 1;
    Grid out{oh, ow, k.cout(), std::vector<double>(static_cast<std::size_t>(oh) * ow * k.cout(), 0.0)};
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int o = 0; o < k.cout(); ++o) {
                double s = 0.0;
                for (int i = 0; i < k.kh(); ++i)
                    for (int j = 0; j < k.kw(); ++j)
                        for (int c = 0; c < k.cin(); ++c) {
                            const int yy = y * stride + i - pad;
                            const int xx = x * stride + j - pad;
                            const double a = (yy < 0 || xx < 0 || yy >= in.h || xx >= in.w) ? 0.0 : in.at(yy, xx, c);
                            s += a * static_cast<double>(k(i, j, c, o));
                        }
                out.v[(static_cast<std::size_t>(y) * ow + x) * k.cout() + o] = s;
            }
    return out;
}

/// Window maxima by exhaustive scan.
inline Grid window_max(const Grid& in) {
    Grid out{in.h / 2, in.w / 2, in.c, {}};
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            for (int c = 0; c < in.c; ++c) {
                std::vector<double> win{in.at(2 * y, 2 * x, c), in.at(2 * y, 2 * x + 1, c), in.at(2 * y + 1, 2 * x, c),
                                        in.at(2 * y + 1, 2 * x + 1, c)};
                out.v.push_back(*std::max_element(win.begin(), win.end()));
            }
    return out;
}

inline std::array<double, 3> channel_means(const Grid& in) {
    std::array<double, 3> s{};
    long count = 0;
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x, ++count)
            for (int c = 0; c < 3; ++c) s[c] += in.at(y, x, c);
    for (auto& v : s) v /= static_cast<double>(count);
    return s;
}

struct Summary {
    double mean, median, trimean, best25, worst25;
};

/// Sort-and-scan summary: quantile q at index q*(n-1), interpolated; quarter = ceil(n/4).
inline Summary summarize(std::vector<double> e) {
    std::sort(e.begin(), e.end());
    const std::size_t n = e.size();
    auto q = [&](double p) {
        const double idx = p * static_cast<double>(n - 1);
        const std::size_t i = static_cast<std::size_t>(idx);
        if (i + 1 >= n) return e[n - 1];
        return e[i] * (1.0 - (idx - static_cast<double>(i))) + e[i + 1] * (idx - static_cast<double>(i));
    };
    std::size_t quarter = n / 4;
    if (quarter * 4 < n) ++quarter;
    double lo = 0.0, hi = 0.0, all = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        all += e[i];
        if (i < quarter) lo += e[i];
        if (i >= n - quarter) hi += e[i];
    }
    return {all / n, q(0.5), (q(0.25) + 2.0 * q(0.5) + q(0.75)) / 4.0, lo / quarter, hi / quarter};
}

/// Textbook Adam on a flat vector, all in double.
struct Adam {
    double lr, b1, b2, eps;
    std::vector<double> m, v;
    int t = 0;
    void step(std::vector<double>& theta, const std::vector<double>& g) {
        if (m.empty()) {
            m.assign(theta.size(), 0.0);
            v.assign(theta.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            theta[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

inline bool masked(const Grid& g, int y, int x) {
    return g.at(y, x, 0) == 0.0 && g.at(y, x, 1) == 0.0 && g.at(y, x, 2) == 0.0;
}

inline std::array<double, 3> unit(std::array<double, 3> v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

/// ((1/N) sum x^p)^(1/p) per channel over unmasked pixels, unit-normalized.
inline std::array<double, 3> minkowski_estimate(const Grid& g, double p) {
    std::array<double, 3> s{};
    long n = 0;
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            if (masked(g, y, x)) continue;
            ++n;
            for (int c = 0; c < 3; ++c) s[c] += std::pow(g.at(y, x, c), p);
        }
    for (auto& v : s) v = std::pow(v / n, 1.0 / p);
    return unit(s);
}

/// First-order gray-edge by explicit finite differences, interior pixels only.
inline std::array<double, 3> gradient_estimate(const Grid& g, double p) {
    std::array<double, 3> s{};
    long n = 0;
    for (int y = 1; y < g.h - 1; ++y)
        for (int x = 1; x < g.w - 1; ++x) {
            if (masked(g, y, x) || masked(g, y, x - 1) || masked(g, y, x + 1) || masked(g, y - 1, x) ||
                masked(g, y + 1, x))
                continue;
            ++n;
            for (int c = 0; c < 3; ++c) {
                const double dx = 0.5 * (g.at(y, x + 1, c) - g.at(y, x - 1, c));
                const double dy = 0.5 * (g.at(y + 1, x, c) - g.at(y - 1, x, c));
                s[c] += std::pow(std::hypot(dx, dy), p);
            }
        }
    for (auto& v : s) v = std::pow(v / n, 1.0 / p);
    return unit(s);
}

inline double angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    return std::acos(std::clamp(d / (na * nb), -1.0, 1.0)) * 180.0 / M_PI;
}

// ---- gradient check -------------------------------------------------------

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

/// Scalar objective u . f(x) evaluated in double.
inline double objective(const cmcc::BasicParams<double>& p, const cmcc::Tensor3<double>& x,
                        const std::array<double, 3>& u) {
    const auto r = cmcc::forward(p, x);
    return u[0] * r.estimate[0] + u[1] * r.estimate[1] + u[2] * r.estimate[2];
}

/// Activation pattern of every ReLU and every pool argmax. Two evaluations with
/// the same signature lie on the same linear piece of the network.
inline std::vector<std::uint8_t> signature(const cmcc::ForwardCache<double>& c) {
    std::vector<std::uint8_t> s;
    for (const auto* t : {&c.pooled1, &c.pooled2, &c.conv3})
        for (double v : t->data()) s.push_back(v > 0.0);
    for (const auto* r : {&c.pool1, &c.pool2})
        for (auto idx : r->source) s.push_back(static_cast<std::uint8_t>(idx & 0xFF));
    return s;
}

/// Central differences with step h on every weight, compared against
/// `analytic`. Weights whose +-h probes change the activation pattern are
/// skipped and counted: the objective is not differentiable across them.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const cmcc::BasicParams<double>& params, const cmcc::Tensor3<double>& x,
                                 const std::array<double, 3>& u, const cmcc::BasicParams<double>& analytic,
                                 double h = 1e-4, double floor = 1e-6) {
    GradCheck out;
    const auto base_sig = signature(cmcc::forward(params, x).cache);
    cmcc::BasicParams<double> probe = params;
    auto pb = probe.banks();
    auto ab = analytic.banks();
    for (int b = 0; b < 3; ++b) {
        auto w = pb[b]->data();
        auto a = ab[b]->data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const auto plus = cmcc::forward(probe, x);
            w[i] = orig - h;
            const auto minus = cmcc::forward(probe, x);
            w[i] = orig;
            if (signature(plus.cache) != base_sig || signature(minus.cache) != base_sig) {
                ++out.skipped_kinks;
                continue;
            }
            const auto dot = [&](const std::array<double, 3>& e) { return u[0] * e[0] + u[1] * e[1] + u[2] * e[2]; };
            const double numeric = (dot(plus.estimate) - dot(minus.estimate)) / (2 * h);
            const double rel = std::abs(a[i] - numeric) / std::max({std::abs(a[i]), std::abs(numeric), floor});
            out.max_rel_error = std::max(out.max_rel_error, rel);
            ++out.checked;
        }
    }
    return out;
}

template <typename T>
cmcc::Tensor3<T> random_tensor(std::mt19937_64& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    cmcc::Tensor3<T> t(h, w, c);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

template <typename T>
cmcc::Kernel4<T> random_kernel(std::mt19937_64& rng, int kh, int kw, int cin, int cout) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    cmcc::Kernel4<T> k(kh, kw, cin, cout);
    for (auto& v : k.data()) v = static_cast<T>(d(rng));
    return k;
}

}  // namespace oracle
