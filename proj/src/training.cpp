#include "cmcc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cmcc/pipeline.hpp"

namespace cmcc {

namespace {

// Keeps the augmentation stream apart from the Kaiming stream of the same seed.
constexpr std::uint64_t kAugmentSalt = 0x9E3779B97F4A7C15ULL;

bool all_finite(const ParamGrads& g) {
    for (const Kernel4<float>* bank : g.banks()) {
        for (float v : bank->data()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

void accumulate(ParamGrads& total, const ParamGrads& g, float weight) {
    auto dst = total.banks();
    auto src = g.banks();
    for (int b = 0; b < 3; ++b) {
        auto d = dst[b]->data();
        auto s = src[b]->data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += weight * s[i];
    }
}

struct Prepared {
    std::vector<Tensor3<float>> inputs;
    std::vector<Vec3> gts;
};

Prepared prepare_thumbnails(const Dataset& data, Variant variant) {
    Prepared p;
    for (const auto& im : data.images) {
        p.inputs.push_back(prepare_input(make_thumbnail(im).pixels, variant));
        p.gts.push_back(im.gt);
    }
    return p;
}

EpochRecord score(const CmParams& params, const Prepared& test) {
    std::vector<double> errors;
    errors.reserve(test.inputs.size());
    for (std::size_t i = 0; i < test.inputs.size(); ++i) {
        const auto res = forward(params, test.inputs[i]);
        errors.push_back(angular_error({res.estimate[0], res.estimate[1], res.estimate[2]}, test.gts[i]));
    }
    const ErrorStats s = error_stats(errors);
    EpochRecord r;
    r.test_mean_deg = s.mean;
    r.test_median_deg = s.median;
    return r;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be > 0");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
}

L1Result l1_loss(const std::array<float, 3>& estimate, const Vec3& gt) {
    L1Result r;
    for (int c = 0; c < 3; ++c) {
        const double diff = static_cast<double>(estimate[c]) - gt[c];
        r.loss += std::abs(diff);
        r.grad[c] = diff > 0.0 ? 1.0f : (diff < 0.0 ? -1.0f : 0.0f);
    }
    return r;
}

AdamState AdamState::for_params(const CmParams& params) {
    return {ParamGrads::zeros(params.variant), ParamGrads::zeros(params.variant), 0};
}

void adam_step(CmParams& params, const ParamGrads& grads, AdamState& state, const TrainConfig& config) {
    if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v)) {
        throw ShapeError("adam_step: parameter, gradient and moment layouts differ");
    }
    if (!all_finite(grads)) throw NumericError("adam_step: non-finite gradient");

    const long t = state.step + 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    auto theta = params.banks();
    auto g = grads.banks();
    auto m = state.m.banks();
    auto v = state.v.banks();
    for (int b = 0; b < 3; ++b) {
        auto th = theta[b]->data();
        auto gd = g[b]->data();
        auto md = m[b]->data();
        auto vd = v[b]->data();
        for (std::size_t i = 0; i < th.size(); ++i) {
            const double gi = gd[i];
            const double mi = config.beta1 * md[i] + (1.0 - config.beta1) * gi;
            const double vi = config.beta2 * vd[i] + (1.0 - config.beta2) * gi * gi;
            md[i] = static_cast<float>(mi);
            vd[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            th[i] = static_cast<float>(th[i] - config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
        }
    }
    state.step = t;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
    out << "epoch,train_loss,test_mean_deg\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& r : report.history) out << r.epoch << ',' << r.train_loss << ',' << r.test_mean_deg << '\n';
}

TrainReport train_fold(const Dataset& train, const Dataset& test, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
    config.validate();
    if (train.empty()) throw DataError("train_fold: empty training set");
    if (test.empty() && config.select_on_test) throw DataError("train_fold: model selection needs a test set");

    const Prepared test_set = prepare_thumbnails(test, config.variant);
    CmParams params = init_kaiming(config.seed, config.variant);
    AdamState adam = AdamState::for_params(params);
    std::mt19937_64 rng(config.seed ^ kAugmentSalt);

    TrainReport report;
    report.params = params;
    report.selected_test_error = INFINITY;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            ParamGrads batch_grads = ParamGrads::zeros(config.variant);
            std::size_t used = 0;
            std::vector<ParamGrads> per_image;
            per_image.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const LabeledImage& src = train[order[k]];
                const LabeledImage patch = augment_patch(src, rng);
                if (std::all_of(patch.pixels.data().begin(), patch.pixels.data().end(),
                                [](std::uint8_t v) { return v == 0; })) {
                    continue;  // crop landed entirely inside a mask
                }
                const auto fr = forward(params, prepare_input(patch.pixels, config.variant));
                const L1Result l = l1_loss(fr.estimate, src.gt);
                loss_sum += l.loss;
                per_image.push_back(backward(params, fr.cache, l.grad));
                ++used;
            }
            if (used == 0) continue;
            // Summed in image order so the result is independent of scheduling.
            const float w = 1.0f / static_cast<float>(used);
            for (const auto& g : per_image) accumulate(batch_grads, g, w);
            seen += used;
            try {
                adam_step(params, batch_grads, adam, config);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
        }

        EpochRecord rec = test_set.inputs.empty() ? EpochRecord{} : score(params, test_set);
        rec.epoch = epoch;
        rec.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
        report.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        const double metric = config.selection == SelectionMetric::Mean ? rec.test_mean_deg : rec.test_median_deg;
        if (!config.select_on_test || epoch == 1 || metric < report.selected_test_error) {
            report.selected_epoch = epoch;
            report.selected_test_error = metric;
            report.params = params;
        }
    }
    report.final_params = params;
    return report;
}

CrossValidation cross_validate(const Dataset& data, int k, const TrainConfig& config,
                               const std::function<void(int, const EpochRecord&)>& on_epoch) {
    if (k < 2) throw std::invalid_argument("cross_validate: k must be >= 2");
    if (data.size() < static_cast<std::size_t>(k)) {
        throw DataError("cross_validate: " + std::to_string(data.size()) + " images cannot fill " +
                        std::to_string(k) + " folds");
    }
    Dataset sorted = data;
    sorted.canonicalize();

    CrossValidation cv;
    cv.ids.reserve(sorted.size());
    for (const auto& im : sorted.images) cv.ids.push_back(im.id);
    cv.errors.assign(sorted.size(), 0.0);
    cv.fold_of.assign(sorted.size(), -1);

    const std::size_t n = sorted.size();
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t first = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        const std::size_t last = first + len;
        if (len == 0) throw DataError("cross_validate: fold " + std::to_string(f) + " is empty");

        Dataset train = sorted.slice(0, first);
        const Dataset tail = sorted.slice(last, n);
        train.images.insert(train.images.end(), tail.images.begin(), tail.images.end());
        const Dataset held_out = sorted.slice(first, last);

        TrainConfig fold_config = config;
        fold_config.seed = config.seed + static_cast<std::uint64_t>(f);
        EpochCallback cb;
        if (on_epoch) cb = [&, f](const EpochRecord& r) { on_epoch(f, r); };
        cv.folds.push_back(train_fold(train, train, fold_config, cb));

        const auto errs = evaluate_model(cv.folds.back().params, held_out);
        for (std::size_t i = 0; i < len; ++i) {
            cv.errors[first + i] = errs[i];
            cv.fold_of[first + i] = f;
        }
        first = last;
    }
    cv.stats = error_stats(cv.errors);
    return cv;
}

}  // namespace cmcc
