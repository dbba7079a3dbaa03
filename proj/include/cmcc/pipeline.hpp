#pragma once

#include <vector>

#include "cmcc/baselines.hpp"
#include "cmcc/data.hpp"
#include "cmcc/model.hpp"

namespace cmcc {

struct Prediction {
    Vec3 illuminant{};
    bool degenerate = false;
};

/// Network estimate for an 8-bit frame; frames other than 48x32 are
/// thumbnailed first.
Prediction predict(const CmParams& params, const LabeledImage& image);

/// Baseline estimate on the same 48x32 thumbnail the network would see.
Prediction predict_baseline(Algorithm algo, const LabeledImage& image, const BaselineConfig& config = {});

/// Per-image angular errors in dataset order. `jobs` > 1 splits the images
/// across threads; results do not depend on it.
std::vector<double> evaluate_model(const CmParams& params, const Dataset& data, int jobs = 1);
std::vector<double> evaluate_baseline(Algorithm algo, const Dataset& data, const BaselineConfig& config = {},
                                      int jobs = 1);

}  // namespace cmcc
