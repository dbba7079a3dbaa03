#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "cmcc/tensor.hpp"

namespace cmcc {

/// Angle in degrees between two illuminant vectors; scale-invariant.
/// Throws std::invalid_argument for a zero vector.
double angular_error(const Vec3& estimate, const Vec3& ground_truth);

/// Five-number summary of per-image angular errors, in degrees.
struct ErrorStats {
    double mean = 0.0;
    double median = 0.0;
    double trimean = 0.0;
    double best25 = 0.0;   // mean of the ceil(n/4) smallest errors
    double worst25 = 0.0;  // mean of the ceil(n/4) largest errors
    std::size_t n = 0;
};

/// Quartiles use linear interpolation at position q * (n - 1) of the sorted list.
ErrorStats error_stats(std::span<const double> errors);

/// Geometric mean of each statistic over cameras; n is the total count.
ErrorStats aggregate_cameras(const std::map<std::string, ErrorStats>& per_camera);

inline constexpr const char* kStatsCsvHeader = "algo,mean,med,tri,best25,worst25,n";
std::string stats_csv_row(const std::string& algo, const ErrorStats& stats);

}  // namespace cmcc
