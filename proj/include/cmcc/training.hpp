#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "cmcc/data.hpp"
#include "cmcc/evaluation.hpp"
#include "cmcc/model.hpp"

namespace cmcc {

enum class SelectionMetric { Mean, Median };

struct TrainConfig {
    double lr = 1e-3;
    int batch = 16;
    int epochs = 2000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    Variant variant = Variant::CM;
    bool select_on_test = true;  // false reproduces the "no test set" ablation
    SelectionMetric selection = SelectionMetric::Mean;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct L1Result {
    double loss = 0.0;
    std::array<float, 3> grad{};
};

/// sum_c |estimate_c - gt_c| and its subgradient sign(estimate - gt), sign(0) = 0.
L1Result l1_loss(const std::array<float, 3>& estimate, const Vec3& gt);

struct AdamState {
    ParamGrads m;
    ParamGrads v;
    long step = 0;

    static AdamState for_params(const CmParams& params);
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite
/// gradient, leaving params and state untouched.
void adam_step(CmParams& params, const ParamGrads& grads, AdamState& state, const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_mean_deg = 0.0;
    double test_median_deg = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> history;
    int selected_epoch = 0;
    double selected_test_error = 0.0;
    CmParams params;        // selected epoch
    CmParams final_params;  // last epoch; what training without a test set would keep
};

void write_report_csv(std::ostream& out, const TrainReport& report);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from Kaiming init. Each epoch visits every training image once in
/// shuffled order, one random rescale-and-crop patch per visit, in minibatches
/// of config.batch (the last partial batch is kept). After each epoch the
/// model is scored on the 48x32 thumbnails of `test`; the best epoch is kept
/// when select_on_test is on, otherwise the last.
TrainReport train_fold(const Dataset& train, const Dataset& test, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

struct CrossValidation {
    std::vector<std::string> ids;  // dataset order
    std::vector<double> errors;    // held-out angular error per id
    std::vector<int> fold_of;      // fold index per id
    ErrorStats stats;
    std::vector<TrainReport> folds;
};

/// Contiguous split of the id-sorted dataset into k folds (sizes differ by at
/// most one). Fold f trains with seed config.seed + f on the other folds, using
/// their thumbnails for model selection, and is scored on its own thumbnails.
CrossValidation cross_validate(const Dataset& data, int k, const TrainConfig& config,
                               const std::function<void(int fold, const EpochRecord&)>& on_epoch = {});

}  // namespace cmcc
