#include "cmcc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cmcc {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

double angular_error(const Vec3& estimate, const Vec3& ground_truth) {
    const auto norm = [](const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); };
    const double ne = norm(estimate);
    const double ng = norm(ground_truth);
    if (!(ne > 0.0) || !(ng > 0.0)) throw std::invalid_argument("angular_error: zero-length vector");
    const double dot = estimate[0] * ground_truth[0] + estimate[1] * ground_truth[1] + estimate[2] * ground_truth[2];
    const double cosine = std::clamp(dot / (ne * ng), -1.0, 1.0);
    return std::acos(cosine) * 180.0 / std::numbers::pi;
}

ErrorStats error_stats(std::span<const double> errors) {
    if (errors.empty()) throw std::invalid_argument("error_stats: empty error list");
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    ErrorStats s;
    s.n = n;
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    const double q1 = quantile_sorted(sorted, 0.25);
    s.median = quantile_sorted(sorted, 0.5);
    const double q3 = quantile_sorted(sorted, 0.75);
    s.trimean = (q1 + 2.0 * s.median + q3) / 4.0;

    const std::size_t quarter = (n + 3) / 4;
    s.best25 = std::accumulate(sorted.begin(), sorted.begin() + quarter, 0.0) / static_cast<double>(quarter);
    s.worst25 = std::accumulate(sorted.end() - quarter, sorted.end(), 0.0) / static_cast<double>(quarter);
    return s;
}

ErrorStats aggregate_cameras(const std::map<std::string, ErrorStats>& per_camera) {
    if (per_camera.empty()) throw std::invalid_argument("aggregate_cameras: no cameras");
    double logs[5] = {};
    ErrorStats out;
    for (const auto& [camera, s] : per_camera) {
        const double values[5] = {s.mean, s.median, s.trimean, s.best25, s.worst25};
        if (s.n == 0) throw std::invalid_argument("aggregate_cameras: camera '" + camera + "' has no samples");
        for (int i = 0; i < 5; ++i) {
            if (!(values[i] > 0.0)) {
                throw std::invalid_argument("aggregate_cameras: camera '" + camera +
                                            "' has a zero statistic; geometric mean is undefined");
            }
            logs[i] += std::log(values[i]);
        }
        out.n += s.n;
    }
    const double k = static_cast<double>(per_camera.size());
    out.mean = std::exp(logs[0] / k);
    out.median = std::exp(logs[1] / k);
    out.trimean = std::exp(logs[2] / k);
    out.best25 = std::exp(logs[3] / k);
    out.worst25 = std::exp(logs[4] / k);
    return out;
}

std::string stats_csv_row(const std::string& algo, const ErrorStats& s) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << algo << ',' << s.mean << ',' << s.median << ',' << s.trimean << ',' << s.best25 << ',' << s.worst25 << ','
        << s.n;
    return out.str();
}

}  // namespace cmcc
