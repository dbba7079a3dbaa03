#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cmcc/image.hpp"

namespace cmcc {

// Working resolution: 48 wide, 32 tall.
inline constexpr int kThumbWidth = 48;
inline constexpr int kThumbHeight = 32;

struct LabeledImage {
    std::string id;
    RgbImage pixels;
    Vec3 gt{};  // unit illuminant
    std::optional<std::string> camera;
};

/// Images ordered by id; ids are unique.
struct Dataset {
    std::vector<LabeledImage> images;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
    const LabeledImage& operator[](std::size_t i) const { return images[i]; }

    /// Sorts by id and rejects duplicate ids or non-unit ground truth.
    void canonicalize();
    /// Contiguous slice [first, last) in current order.
    Dataset slice(std::size_t first, std::size_t last) const;
};

Vec3 unit_vector(const Vec3& v);

struct GroundTruthRow {
    Vec3 gt{};  // as written, not normalized
    std::optional<std::string> camera;
};

/// Parses a ground_truth.csv keyed by id. Rejects malformed, duplicate or
/// negative rows.
std::map<std::string, GroundTruthRow> read_ground_truth(const std::filesystem::path& csv);

/// Reads every *.ppm in dir and labels it from dir/ground_truth.csv
/// (header `id,r,g,b[,camera]`). Ground truth is re-normalized to unit length.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes <id>.ppm files plus ground_truth.csv; creates dir if needed.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Real-valued image scaled by its single global maximum, so the peak is 1.
Tensor3<float> normalize_input(const LabeledImage& img);

/// Bilinear resize of the whole frame to 48x32, 8-bit, same gt.
LabeledImage make_thumbnail(const LabeledImage& img);

/// Random rescale by s ~ U[0.125, 1] (bilinear), then a uniform random 48x32
/// crop. The scale is raised when rounding would make the frame too small.
LabeledImage augment_patch(const LabeledImage& img, std::mt19937_64& rng);

/// Deterministic variant used in tests: explicit scale and crop origin.
LabeledImage augment_patch(const LabeledImage& img, double scale, double crop_u, double crop_v);

struct MondrianSpec {
    int width = 384;
    int height = 256;
    int min_patches = 20;
    int max_patches = 40;
    double min_reflectance = 0.05;
    double max_reflectance = 1.0;
    double illuminant_low = 0.4;  // r and b range, g fixed at 1
    double illuminant_high = 1.0;
};

struct MondrianRect {
    int row0, col0, row1, col1;  // half-open
    Vec3 reflectance;
};

/// Axis-aligned rectangles painted in order over the frame; the first one
/// should cover the full frame.
struct MondrianScene {
    int width = 0;
    int height = 0;
    std::vector<MondrianRect> rects;
    Vec3 illuminant{};  // unit
};

MondrianScene sample_scene(std::mt19937_64& rng, const MondrianSpec& spec);

/// Linear-light image E_c * R_c(x) before normalization and quantization.
Tensor3<double> render_linear(const MondrianScene& scene);

/// Max-normalized, 8-bit quantized render labelled with the scene illuminant.
LabeledImage render_scene(const MondrianScene& scene, std::string id);

/// n scenes; image i draws from its own stream seeded by (seed, i).
Dataset synth_generate(std::uint64_t seed, int n, const MondrianSpec& spec = {});

}  // namespace cmcc
