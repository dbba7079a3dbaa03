#include "cmcc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cmcc/model.hpp"

namespace cmcc {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

double parse_real(const std::string& text, const std::string& id) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v)) {
        throw DataError("ground_truth.csv: row '" + id + "' has an unparsable value '" + text + "'");
    }
    return v;
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

std::map<std::string, GroundTruthRow> read_ground_truth(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw DataError("missing " + csv.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(csv.string() + " is empty");
    const auto header = split_csv_line(trim(line));
    const bool has_camera = header.size() == 5 && trim(header[4]) == "camera";
    if (header.size() < 4 || trim(header[0]) != "id" || trim(header[1]) != "r" || trim(header[2]) != "g" ||
        trim(header[3]) != "b" || (header.size() == 5 && !has_camera) || header.size() > 5) {
        throw DataError(csv.string() + ": header must be id,r,g,b[,camera]");
    }

    std::map<std::string, GroundTruthRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        const std::string id = f.empty() ? std::string() : trim(f[0]);
        if (f.size() != header.size() || id.empty()) {
            throw DataError(csv.string() + ": line " + std::to_string(line_no) + " ('" + id + "') has " +
                            std::to_string(f.size()) + " fields, expected " + std::to_string(header.size()));
        }
        GroundTruthRow row;
        for (int c = 0; c < 3; ++c) {
            row.gt[c] = parse_real(trim(f[1 + c]), id);
            if (row.gt[c] < 0.0) throw DataError("ground_truth.csv: row '" + id + "' has a negative component");
        }
        if (has_camera && !trim(f[4]).empty()) row.camera = trim(f[4]);
        if (!rows.emplace(id, std::move(row)).second) throw DataError(csv.string() + ": duplicate row for '" + id + "'");
    }
    return rows;
}

Vec3 unit_vector(const Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n > 0.0) || !std::isfinite(n)) throw DataError("illuminant vector has zero or non-finite length");
    return {v[0] / n, v[1] / n, v[2] / n};
}

void Dataset::canonicalize() {
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (i > 0 && images[i].id == images[i - 1].id) throw DataError("duplicate image id '" + images[i].id + "'");
        const Vec3& g = images[i].gt;
        if (std::abs(std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) - 1.0) > 1e-6) {
            throw DataError("ground truth of '" + images[i].id + "' is not unit length");
        }
    }
}

Dataset Dataset::slice(std::size_t first, std::size_t last) const {
    Dataset d;
    last = std::min(last, images.size());
    if (first < last) d.images.assign(images.begin() + first, images.begin() + last);
    return d;
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
    auto rows = read_ground_truth(dir / "ground_truth.csv");

    Dataset data;
    std::set<std::string> seen;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
        const std::string id = entry.path().stem().string();
        auto it = rows.find(id);
        if (it == rows.end()) throw DataError("image '" + id + "' has no row in ground_truth.csv");
        LabeledImage img;
        img.id = id;
        try {
            img.pixels = read_ppm(entry.path());
        } catch (const FormatError& e) {
            throw DataError("image '" + id + "': " + e.what());
        }
        try {
            img.gt = unit_vector(it->second.gt);
        } catch (const DataError&) {
            throw DataError("ground truth of '" + id + "' has zero length");
        }
        img.camera = it->second.camera;
        seen.insert(id);
        data.images.push_back(std::move(img));
    }
    for (const auto& [id, row] : rows) {
        if (!seen.count(id)) throw DataError("ground_truth.csv row '" + id + "' has no matching image");
    }
    if (data.empty()) throw DataError("dataset directory " + dir.string() + " contains no .ppm images");
    data.canonicalize();
    return data;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir);
    const bool any_camera = std::any_of(data.images.begin(), data.images.end(),
                                        [](const auto& im) { return im.camera.has_value(); });
    std::ofstream csv(dir / "ground_truth.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot write " + (dir / "ground_truth.csv").string());
    csv << (any_camera ? "id,r,g,b,camera\n" : "id,r,g,b\n");
    for (const auto& im : data.images) {
        write_ppm(dir / (im.id + ".ppm"), im.pixels);
        csv << im.id << ',' << format_real(im.gt[0]) << ',' << format_real(im.gt[1]) << ',' << format_real(im.gt[2]);
        if (any_camera) csv << ',' << im.camera.value_or("");
        csv << '\n';
    }
    if (!csv) throw DataError("failed writing ground_truth.csv in " + dir.string());
}

Tensor3<float> normalize_input(const LabeledImage& img) {
    try {
        return prepare_input(img.pixels, Variant::CM);
    } catch (const DataError&) {
        throw DataError("image '" + img.id + "' is fully masked (all pixels zero)");
    }
}

LabeledImage make_thumbnail(const LabeledImage& img) {
    if (img.pixels.height() < kThumbHeight || img.pixels.width() < kThumbWidth) {
        throw ShapeError("make_thumbnail: '" + img.id + "' (" + img.pixels.shape() + ") is smaller than 48x32");
    }
    LabeledImage out{img.id, {}, img.gt, img.camera};
    if (img.pixels.height() == kThumbHeight && img.pixels.width() == kThumbWidth) {
        out.pixels = img.pixels;
    } else {
        out.pixels = quantize(resize_bilinear(to_float(img.pixels), kThumbHeight, kThumbWidth));
    }
    return out;
}

LabeledImage augment_patch(const LabeledImage& img, double scale, double crop_u, double crop_v) {
    const int h = img.pixels.height();
    const int w = img.pixels.width();
    if (h < kThumbHeight || w < kThumbWidth) {
        throw ShapeError("augment_patch: '" + img.id + "' (" + img.pixels.shape() + ") is smaller than 48x32");
    }
    const double min_scale = std::max(static_cast<double>(kThumbHeight) / h, static_cast<double>(kThumbWidth) / w);
    const double s = std::clamp(scale, min_scale, 1.0);
    const int nh = std::max(kThumbHeight, static_cast<int>(std::lround(h * s)));
    const int nw = std::max(kThumbWidth, static_cast<int>(std::lround(w * s)));

    const auto pick = [](double u, int slack) {
        return std::clamp(static_cast<int>(std::floor(u * (slack + 1))), 0, slack);
    };
    const int row0 = pick(crop_v, nh - kThumbHeight);
    const int col0 = pick(crop_u, nw - kThumbWidth);

    LabeledImage out{img.id, {}, img.gt, img.camera};
    out.pixels = quantize(
        resize_bilinear_window(to_float(img.pixels), nh, nw, row0, col0, kThumbHeight, kThumbWidth));
    return out;
}

LabeledImage augment_patch(const LabeledImage& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale(0.125, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double s = scale(rng);
    const double u = unit(rng);
    const double v = unit(rng);
    return augment_patch(img, s, u, v);
}

MondrianScene sample_scene(std::mt19937_64& rng, const MondrianSpec& spec) {
    if (spec.width < 1 || spec.height < 1 || spec.min_patches < 1 || spec.max_patches < spec.min_patches) {
        throw std::invalid_argument("sample_scene: invalid Mondrian spec");
    }
    std::uniform_real_distribution<double> refl(spec.min_reflectance, spec.max_reflectance);
    std::uniform_real_distribution<double> illum(spec.illuminant_low, spec.illuminant_high);
    std::uniform_int_distribution<int> count(spec.min_patches, spec.max_patches);

    MondrianScene scene;
    scene.width = spec.width;
    scene.height = spec.height;
    const Vec3 e{illum(rng), 1.0, illum(rng)};
    scene.illuminant = unit_vector(e);

    const int n = count(rng);
    scene.rects.push_back({0, 0, spec.height, spec.width, {refl(rng), refl(rng), refl(rng)}});
    std::uniform_int_distribution<int> rh(std::max(1, spec.height / 10), std::max(1, spec.height / 2));
    std::uniform_int_distribution<int> rw(std::max(1, spec.width / 10), std::max(1, spec.width / 2));
    for (int i = 1; i < n; ++i) {
        const int hh = rh(rng);
        const int ww = rw(rng);
        const int r0 = std::uniform_int_distribution<int>(0, spec.height - hh)(rng);
        const int c0 = std::uniform_int_distribution<int>(0, spec.width - ww)(rng);
        const Vec3 r{refl(rng), refl(rng), refl(rng)};
        scene.rects.push_back({r0, c0, r0 + hh, c0 + ww, r});
    }
    return scene;
}

Tensor3<double> render_linear(const MondrianScene& scene) {
    Tensor3<double> img(scene.height, scene.width, 3);
    for (const auto& rect : scene.rects) {
        const int r0 = std::max(rect.row0, 0);
        const int r1 = std::min(rect.row1, scene.height);
        const int c0 = std::max(rect.col0, 0);
        const int c1 = std::min(rect.col1, scene.width);
        for (int y = r0; y < r1; ++y) {
            for (int x = c0; x < c1; ++x) {
                double* p = img.pixel(y, x);
                for (int c = 0; c < 3; ++c) p[c] = scene.illuminant[c] * rect.reflectance[c];
            }
        }
    }
    return img;
}

LabeledImage render_scene(const MondrianScene& scene, std::string id) {
    const Tensor3<double> lin = render_linear(scene);
    const auto d = lin.data();
    const double peak = *std::max_element(d.begin(), d.end());
    if (!(peak > 0.0)) throw DataError("render_scene: scene renders entirely black");

    LabeledImage out;
    out.id = std::move(id);
    out.gt = unit_vector(scene.illuminant);
    out.pixels = RgbImage(scene.height, scene.width, 3);
    auto px = out.pixels.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * d[i] / peak), 0L, 255L));
    }
    return out;
}

Dataset synth_generate(std::uint64_t seed, int n, const MondrianSpec& spec) {
    if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
    Dataset data;
    data.images.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%05d", i);
        data.images.push_back(render_scene(sample_scene(rng, spec), id));
    }
    return data;
}

}  // namespace cmcc
