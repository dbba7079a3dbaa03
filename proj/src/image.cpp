#include "cmcc/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace cmcc {

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_int(const char* what) {
        skip_space_and_comments();
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) throw FormatError(std::string("PPM: ") + what + " is too large");
            ++pos_;
            ++digits;
        }
        if (digits == 0) throw FormatError(std::string("PPM: missing ") + what);
        return static_cast<int>(value);
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

// Precomputed source taps of a 1-D bilinear resize.
struct Taps {
    std::vector<int> lo;
    std::vector<int> hi;
    std::vector<float> frac;
};

Taps make_taps(int in_size, int out_size, int first, int count) {
    Taps t;
    t.lo.resize(count);
    t.hi.resize(count);
    t.frac.resize(count);
    const double scale = static_cast<double>(in_size) / out_size;
    for (int i = 0; i < count; ++i) {
        double s = (first + i + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in_size - 1));
        const int lo = static_cast<int>(std::floor(s));
        t.lo[i] = lo;
        t.hi[i] = std::min(lo + 1, in_size - 1);
        t.frac[i] = static_cast<float>(s - lo);
    }
    return t;
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("PPM: not a binary P6 file");
    HeaderReader reader(bytes);
    reader.advance(2);
    const int width = reader.read_int("width");
    const int height = reader.read_int("height");
    const int maxval = reader.read_int("maxval");
    if (width <= 0 || height <= 0) throw FormatError("PPM: zero image dimension");
    if (maxval <= 0 || maxval > 255) {
        throw FormatError("PPM: maxval " + std::to_string(maxval) + " is not an 8-bit image");
    }
    if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()])) {
        throw FormatError("PPM: header not terminated by whitespace");
    }
    reader.advance(1);

    RgbImage img(height, width, 3);
    const std::size_t need = img.size();
    if (bytes.size() - reader.pos() < need) {
        throw FormatError("PPM: truncated raster, need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - reader.pos()));
    }
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), need, img.data().begin());
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
    if (image.channels() != 3) throw ShapeError("encode_ppm: expected 3 channels, got " + image.shape());
    const std::string header =
        "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.data().begin(), image.data().end());
    return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_ppm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    const auto bytes = encode_ppm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Tensor3<float> to_float(const RgbImage& image) { return image.cast<float>(); }

RgbImage quantize(const Tensor3<float>& image) {
    RgbImage out(image.height(), image.width(), image.channels());
    auto src = image.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<std::uint8_t>(std::clamp(std::lround(src[i]), 0L, 255L));
    }
    return out;
}

Tensor3<float> resize_bilinear(const Tensor3<float>& src, int out_height, int out_width) {
    return resize_bilinear_window(src, out_height, out_width, 0, 0, out_height, out_width);
}

Tensor3<float> resize_bilinear_window(const Tensor3<float>& src, int out_height, int out_width, int row0, int col0,
                                      int win_h, int win_w) {
    if (src.empty()) throw ShapeError("resize_bilinear: empty source");
    if (out_height <= 0 || out_width <= 0) throw ShapeError("resize_bilinear: target size must be positive");
    if (row0 < 0 || col0 < 0 || win_h <= 0 || win_w <= 0 || row0 + win_h > out_height ||
        col0 + win_w > out_width) {
        throw ShapeError("resize_bilinear: window lies outside the resized image");
    }
    const Taps ty = make_taps(src.height(), out_height, row0, win_h);
    const Taps tx = make_taps(src.width(), out_width, col0, win_w);
    const int c = src.channels();
    Tensor3<float> out(win_h, win_w, c);
    for (int y = 0; y < win_h; ++y) {
        const float fy = ty.frac[y];
        for (int x = 0; x < win_w; ++x) {
            const float fx = tx.frac[x];
            const float* p00 = src.pixel(ty.lo[y], tx.lo[x]);
            const float* p01 = src.pixel(ty.lo[y], tx.hi[x]);
            const float* p10 = src.pixel(ty.hi[y], tx.lo[x]);
            const float* p11 = src.pixel(ty.hi[y], tx.hi[x]);
            float* o = out.pixel(y, x);
            for (int ch = 0; ch < c; ++ch) {
                const float top = p00[ch] + (p01[ch] - p00[ch]) * fx;
                const float bot = p10[ch] + (p11[ch] - p10[ch]) * fx;
                o[ch] = top + (bot - top) * fy;
            }
        }
    }
    return out;
}

}  // namespace cmcc
