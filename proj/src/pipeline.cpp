#include "cmcc/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "cmcc/evaluation.hpp"

namespace cmcc {

namespace {

template <typename Fn>
std::vector<double> parallel_errors(const Dataset& data, int jobs, Fn estimate) {
    std::vector<double> errors(data.size());
    const auto run = [&](std::size_t first, std::size_t last) {
        for (std::size_t i = first; i < last; ++i) errors[i] = angular_error(estimate(data[i]), data[i].gt);
    };
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, data.size());
    if (workers <= 1) {
        run(0, data.size());
        return errors;
    }
    std::vector<std::exception_ptr> failures(workers);
    {
        std::vector<std::jthread> threads;
        const std::size_t chunk = (data.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    run(w * chunk, std::min(data.size(), (w + 1) * chunk));
                } catch (...) {
                    failures[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    return errors;
}

}  // namespace

Prediction predict(const CmParams& params, const LabeledImage& image) {
    const LabeledImage thumb = make_thumbnail(image);
    const auto res = forward(params, prepare_input(thumb.pixels, params.variant));
    return {{res.estimate[0], res.estimate[1], res.estimate[2]}, res.degenerate};
}

Prediction predict_baseline(Algorithm algo, const LabeledImage& image, const BaselineConfig& config) {
    const LabeledImage thumb = make_thumbnail(image);
    const auto est = run_baseline(algo, to_float(thumb.pixels), config);
    return {est.illuminant, est.fallback};
}

std::vector<double> evaluate_model(const CmParams& params, const Dataset& data, int jobs) {
    return parallel_errors(data, jobs, [&](const LabeledImage& im) { return predict(params, im).illuminant; });
}

std::vector<double> evaluate_baseline(Algorithm algo, const Dataset& data, const BaselineConfig& config, int jobs) {
    return parallel_errors(data, jobs,
                           [&](const LabeledImage& im) { return predict_baseline(algo, im, config).illuminant; });
}

}  // namespace cmcc
