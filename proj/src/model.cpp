#include "cmcc/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace cmcc {

namespace {

struct Layout {
    bool pool;
    bool relu;
    bool single;
};

Layout layout_of(Variant v) {
    switch (v) {
        case Variant::NoMaxPool: return {false, true, false};
        case Variant::NoReLU: return {true, false, false};
        case Variant::SingleConv: return {true, true, true};
        case Variant::CM:
        case Variant::ChromaInput: break;
    }
    return {true, true, false};
}

bool valid_variant_code(std::uint8_t code) { return code <= static_cast<std::uint8_t>(Variant::ChromaInput); }

// g(): optional 2x2 max-pool followed by optional ReLU.
template <typename T>
void apply_g(const Layout& layout, const Tensor3<T>& in, PoolRouting& routing, Tensor3<T>& pooled, Tensor3<T>& act) {
    if (layout.pool) {
        auto pr = maxpool2x2(in);
        routing = std::move(pr.routing);
        pooled = std::move(pr.output);
    } else {
        pooled = in;
    }
    act = layout.relu ? relu(pooled) : pooled;
}

template <typename T>
Tensor3<T> backward_g(const Layout& layout, const Tensor3<T>& grad_act, const PoolRouting& routing,
                      const Tensor3<T>& pooled) {
    Tensor3<T> g = layout.relu ? relu_backward(grad_act, pooled) : grad_act;
    return layout.pool ? maxpool2x2_backward(g, routing) : g;
}

void check_layout(const CmParams& p) {
    const auto expected = CmParams::zeros(p.variant);
    if (!p.same_layout(expected)) throw ShapeError("parameter banks do not match the layout of " +
                                                   std::string(variant_name(p.variant)));
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::CM: return "cm";
        case Variant::NoMaxPool: return "cm-a";
        case Variant::NoReLU: return "cm-b";
        case Variant::SingleConv: return "cm-c";
        case Variant::ChromaInput: return "cm-d";
    }
    return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
    for (auto v : {Variant::CM, Variant::NoMaxPool, Variant::NoReLU, Variant::SingleConv, Variant::ChromaInput}) {
        if (variant_name(v) == name) return v;
    }
    return std::nullopt;
}

template <typename T>
BasicParams<T> BasicParams<T>::zeros(Variant variant) {
    BasicParams p;
    p.variant = variant;
    if (variant == Variant::SingleConv) {
        p.f1 = Kernel4<T>(3, 3, 3, 38);
        p.f3 = Kernel4<T>(1, 1, 38, 3);
    } else {
        p.f1 = Kernel4<T>(3, 3, 3, 7);
        p.f2 = Kernel4<T>(3, 3, 7, 14);
        p.f3 = Kernel4<T>(1, 1, 14, 3);
    }
    return p;
}

CmParams init_kaiming(std::uint64_t seed, Variant variant) {
    CmParams p = CmParams::zeros(variant);
    std::mt19937_64 rng(seed);
    for (Kernel4<float>* bank : p.banks()) {
        if (bank->empty()) continue;
        const double fan_in = static_cast<double>(bank->kh()) * bank->kw() * bank->cin();
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (float& w : bank->data()) w = static_cast<float>(dist(rng));
    }
    return p;
}

template <typename T>
std::uint64_t fingerprint(const BasicParams<T>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    const auto code = static_cast<std::uint8_t>(params.variant);
    mix(&code, 1);
    for (const Kernel4<T>* bank : params.banks()) mix(bank->data().data(), bank->data().size_bytes());
    return h;
}

template <typename T>
ForwardResult<T> forward(const BasicParams<T>& params, const Tensor3<T>& input) {
    const Layout layout = layout_of(params.variant);
    if (input.channels() != 3) throw ShapeError("forward: expected a 3-channel image, got " + input.shape());
    const int multiple = !layout.pool ? 1 : (layout.single ? 2 : 4);
    if (input.height() % multiple != 0 || input.width() % multiple != 0) {
        throw ShapeError("forward: input " + input.shape() + " must have spatial dims divisible by " +
                         std::to_string(multiple));
    }

    ForwardResult<T> res;
    ForwardCache<T>& c = res.cache;
    c.variant = params.variant;
    c.params_fingerprint = fingerprint(params);
    c.input = input;

    c.conv1 = conv2d(input, params.f1, 1, 1);
    apply_g(layout, c.conv1, c.pool1, c.pooled1, c.act1);
    const Tensor3<T>* features = &c.act1;
    if (!layout.single) {
        c.conv2 = conv2d(c.act1, params.f2, 1, 1);
        apply_g(layout, c.conv2, c.pool2, c.pooled2, c.act2);
        features = &c.act2;
    }
    c.conv3 = conv2d(*features, params.f3, 0, 1);
    c.act3 = relu(c.conv3);
    c.pre_norm = global_avg_pool(c.act3);

    const auto n = l2_normalize(c.pre_norm);
    res.estimate = n.unit;
    res.degenerate = n.degenerate;
    return res;
}

template <typename T>
BasicParams<T> backward(const BasicParams<T>& params, const ForwardCache<T>& cache,
                        const std::array<T, 3>& d_loss_d_estimate) {
    if (cache.variant != params.variant || cache.act3.empty() || cache.params_fingerprint != fingerprint(params)) {
        throw std::invalid_argument("backward: forward cache does not belong to these parameters");
    }
    const Layout layout = layout_of(params.variant);
    BasicParams<T> grads = BasicParams<T>::zeros(params.variant);

    // Through v / |v|: Jacobian (I - n n^T) / |v|. The degenerate fallback is constant.
    const auto norm = l2_normalize(cache.pre_norm);
    if (norm.degenerate) return grads;
    const auto& n = norm.unit;
    const T dot = n[0] * d_loss_d_estimate[0] + n[1] * d_loss_d_estimate[1] + n[2] * d_loss_d_estimate[2];
    std::array<T, 3> d_v{};
    for (int i = 0; i < 3; ++i) d_v[i] = (d_loss_d_estimate[i] - n[i] * dot) / norm.norm;

    // GAP spreads evenly; then the ReLU after the 1x1 conv.
    const Tensor3<T>& act3 = cache.act3;
    const T inv_count = T{1} / static_cast<T>(act3.height() * act3.width());
    Tensor3<T> d_act3(act3.height(), act3.width(), 3);
    auto d = d_act3.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        d[i] = d_v[0] * inv_count;
        d[i + 1] = d_v[1] * inv_count;
        d[i + 2] = d_v[2] * inv_count;
    }
    const Tensor3<T> d_conv3 = relu_backward(d_act3, cache.conv3);

    const Tensor3<T>& features = layout.single ? cache.act1 : cache.act2;
    Tensor3<T> d_features;
    conv2d_backward(features, params.f3, d_conv3, 0, 1, grads.f3, &d_features);

    Tensor3<T> d_act1;
    if (layout.single) {
        d_act1 = std::move(d_features);
    } else {
        const Tensor3<T> d_conv2 = backward_g(layout, d_features, cache.pool2, cache.pooled2);
        conv2d_backward(cache.act1, params.f2, d_conv2, 1, 1, grads.f2, &d_act1);
    }
    const Tensor3<T> d_conv1 = backward_g(layout, d_act1, cache.pool1, cache.pooled1);
    conv2d_backward<T>(cache.input, params.f1, d_conv1, 1, 1, grads.f1, nullptr);
    return grads;
}

Tensor3<float> max_normalize(const Tensor3<float>& image) {
    auto d = image.data();
    if (d.empty()) throw ShapeError("max_normalize: empty image");
    const float peak = *std::max_element(d.begin(), d.end());
    if (!(peak > 0.0f)) throw DataError("max_normalize: image has no positive value (fully masked)");
    Tensor3<float> out = image;
    for (float& v : out.data()) v /= peak;
    return out;
}

Tensor3<float> chromaticity(const Tensor3<float>& image) {
    if (image.channels() != 3) throw ShapeError("chromaticity: expected RGB, got " + image.shape());
    Tensor3<float> out(image.height(), image.width(), 3);
    auto src = image.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        const float sum = src[i] + src[i + 1] + src[i + 2];
        if (!(sum > 0.0f)) continue;
        for (int c = 0; c < 3; ++c) dst[i + c] = src[i + c] / sum;
    }
    return out;
}

Tensor3<float> prepare_input(const Tensor3<float>& image, Variant variant) {
    if (image.channels() != 3) throw ShapeError("prepare_input: expected RGB, got " + image.shape());
    return variant == Variant::ChromaInput ? chromaticity(image) : max_normalize(image);
}

Tensor3<float> prepare_input(const Tensor3<std::uint8_t>& pixels, Variant variant) {
    return prepare_input(pixels.cast<float>(), variant);
}

FeatureMaps dump_feature_maps(const CmParams& params, const Tensor3<float>& input) {
    auto res = forward(params, input);
    FeatureMaps maps;
    maps.features = params.variant == Variant::SingleConv ? res.cache.act1 : res.cache.act2;
    maps.response = res.cache.act3;

    const auto& r = maps.response;
    maps.focus = Tensor3<float>(r.height(), r.width(), 1);
    auto f = maps.focus.data();
    auto rd = r.data();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = (rd[3 * i] + rd[3 * i + 1] + rd[3 * i + 2]) / 3.0f;
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const float min = *lo;
    const float range = *hi - *lo;
    for (float& v : f) v = range > 0.0f ? (v - min) / range : 0.0f;
    return maps;
}

std::vector<std::uint8_t> serialize(const CmParams& params) {
    check_layout(params);
    std::vector<std::uint8_t> out{'C', 'M', 'W', '1', kCmwVersion, static_cast<std::uint8_t>(params.variant), 0, 0};
    out.reserve(kCmwHeaderSize + params.param_count() * 4);
    for (const Kernel4<float>* bank : params.banks()) {
        for (float w : bank->data()) put_u32le(out, std::bit_cast<std::uint32_t>(w));
    }
    return out;
}

CmParams deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kCmwHeaderSize) throw FormatError("CMW1: file shorter than the 8-byte header");
    if (std::memcmp(bytes.data(), "CMW1", 4) != 0) throw FormatError("CMW1: bad magic");
    if (bytes[4] != kCmwVersion) throw FormatError("CMW1: unsupported version " + std::to_string(bytes[4]));
    if (!valid_variant_code(bytes[5])) throw FormatError("CMW1: unknown variant code " + std::to_string(bytes[5]));
    if (bytes[6] != 0 || bytes[7] != 0) throw FormatError("CMW1: reserved header bytes are not zero");

    CmParams p = CmParams::zeros(static_cast<Variant>(bytes[5]));
    const std::size_t expected = kCmwHeaderSize + p.param_count() * 4;
    if (bytes.size() != expected) {
        throw FormatError("CMW1: expected " + std::to_string(expected) + " bytes for variant " +
                          std::string(variant_name(p.variant)) + ", got " + std::to_string(bytes.size()));
    }
    const std::uint8_t* cursor = bytes.data() + kCmwHeaderSize;
    for (Kernel4<float>* bank : p.banks()) {
        for (float& w : bank->data()) {
            w = std::bit_cast<float>(get_u32le(cursor));
            cursor += 4;
        }
    }
    return p;
}

void save_model(const std::filesystem::path& path, const CmParams& params) {
    const auto bytes = serialize(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

CmParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

template struct BasicParams<float>;
template struct BasicParams<double>;
template std::uint64_t fingerprint(const BasicParams<float>&);
template std::uint64_t fingerprint(const BasicParams<double>&);
template ForwardResult<float> forward(const BasicParams<float>&, const Tensor3<float>&);
template ForwardResult<double> forward(const BasicParams<double>&, const Tensor3<double>&);
template BasicParams<float> backward(const BasicParams<float>&, const ForwardCache<float>&,
                                     const std::array<float, 3>&);
template BasicParams<double> backward(const BasicParams<double>&, const ForwardCache<double>&,
                                      const std::array<double, 3>&);

}  // namespace cmcc
