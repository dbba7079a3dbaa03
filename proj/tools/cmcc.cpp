// cmcc: train, evaluate and run the convolutional-mean illuminant estimator.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "cmcc/baselines.hpp"
#include "cmcc/data.hpp"
#include "cmcc/errors.hpp"
#include "cmcc/evaluation.hpp"
#include "cmcc/image.hpp"
#include "cmcc/model.hpp"
#include "cmcc/pipeline.hpp"
#include "cmcc/training.hpp"

namespace fs = std::filesystem;
using namespace cmcc;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    fs::path data;
    fs::path select_data;
    fs::path out;
    fs::path report;
    fs::path errors;
    int folds = 3;
    int epochs = 2000;
    int batch = 16;
    double lr = 1e-3;
    std::string variant = "cm";
    std::string select_metric = "mean";
    bool no_test_select = false;
    std::uint64_t seed = 0;
    int log_every = 100;
};

struct EvalOptions {
    fs::path data;
    fs::path model;
    fs::path out;
    fs::path errors;
    std::string algo;
    double p = 6.0;
    double edge_p = 1.0;
    bool per_camera = false;
    int jobs = 1;
};

struct PredictOptions {
    fs::path model;
    fs::path image;
};

struct BenchOptions {
    fs::path model;
    fs::path image;
    int iters = 1000;
    int warmup = 20;
};

struct SynthOptions {
    int n = 100;
    std::uint64_t seed = 0;
    fs::path out;
    int width = 384;
    int height = 256;
};

struct FeaturesOptions {
    fs::path model;
    fs::path image;
    fs::path out;
};

struct ThumbsOptions {
    fs::path in;
    fs::path out;
};

std::ostream& open_output(const fs::path& path, std::ofstream& file) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw DataError("cannot write " + path.string());
    return file;
}

LabeledImage read_single_image(const fs::path& path) {
    LabeledImage img;
    img.id = path.stem().string();
    try {
        img.pixels = read_ppm(path);
    } catch (const FormatError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return img;
}

Variant variant_or_throw(const std::string& name) {
    auto v = parse_variant(name);
    if (!v) throw UsageError("unknown variant '" + name + "'");
    return *v;
}

int cmd_train(const TrainOptions& o) {
    TrainConfig cfg;
    cfg.lr = o.lr;
    cfg.batch = o.batch;
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;
    cfg.variant = variant_or_throw(o.variant);
    cfg.select_on_test = !o.no_test_select;
    cfg.selection = o.select_metric == "median" ? SelectionMetric::Median : SelectionMetric::Mean;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.folds < 1) throw UsageError("--folds must be >= 1");
    if (o.folds == 1 && o.out.empty()) throw UsageError("--folds 1 trains a single model and needs --out");

    spdlog::info("train: data={} folds={} epochs={} batch={} lr={} variant={} select_on_test={} select_metric={} seed={}",
                 o.data.string(), o.folds, cfg.epochs, cfg.batch, cfg.lr, variant_name(cfg.variant),
                 cfg.select_on_test, o.select_metric, cfg.seed);
    const Dataset data = load_dataset(o.data);
    spdlog::info("loaded {} images", data.size());

    auto log_epoch = [&](const std::string& tag, const EpochRecord& r) {
        if (o.log_every > 0 && (r.epoch % o.log_every == 0 || r.epoch == 1)) {
            spdlog::info("{}epoch {:5d}  loss {:.5f}  test mean {:.3f}  median {:.3f}", tag, r.epoch, r.train_loss,
                         r.test_mean_deg, r.test_median_deg);
        }
    };

    if (o.folds >= 2) {
        const auto cv = cross_validate(data, o.folds, cfg, [&](int fold, const EpochRecord& r) {
            log_epoch("fold " + std::to_string(fold) + " ", r);
        });
        for (std::size_t f = 0; f < cv.folds.size(); ++f) {
            spdlog::info("fold {}: selected epoch {} (test error {:.4f})", f, cv.folds[f].selected_epoch,
                         cv.folds[f].selected_test_error);
        }
        std::cout << kStatsCsvHeader << '\n' << stats_csv_row(std::string(variant_name(cfg.variant)), cv.stats) << '\n';
        if (!o.errors.empty()) {
            std::ofstream f;
            auto& out = open_output(o.errors, f);
            out << "id,fold,angular_deg\n";
            char buf[32];
            for (std::size_t i = 0; i < cv.ids.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.6f", cv.errors[i]);
                out << cv.ids[i] << ',' << cv.fold_of[i] << ',' << buf << '\n';
            }
        }
        if (o.out.empty()) return kOk;
        spdlog::info("training the final model on all {} images", data.size());
    }

    const Dataset select = o.select_data.empty() ? data : load_dataset(o.select_data);
    const auto report = train_fold(data, select, cfg, [&](const EpochRecord& r) { log_epoch("", r); });
    save_model(o.out, report.params);
    spdlog::info("selected epoch {} (test error {:.4f}); wrote {}", report.selected_epoch, report.selected_test_error,
                 o.out.string());
    if (!o.report.empty()) {
        std::ofstream f;
        write_report_csv(open_output(o.report, f), report);
    }
    if (o.folds == 1) {
        std::printf("selected_epoch,selected_test_error\n%d,%.6f\n", report.selected_epoch, report.selected_test_error);
    }
    return kOk;
}

int cmd_eval(const EvalOptions& o) {
    if (o.model.empty() == o.algo.empty()) throw UsageError("eval needs exactly one of --model or --algo");
    if (o.jobs < 1) throw UsageError("--jobs must be >= 1");

    std::string name;
    std::vector<double> errors;
    const Dataset data = load_dataset(o.data);
    if (!o.model.empty()) {
        const CmParams params = load_model(o.model);
        name = std::string(variant_name(params.variant));
        spdlog::info("eval: data={} ({} images) model={} variant={} jobs={}", o.data.string(), data.size(),
                     o.model.string(), name, o.jobs);
        errors = evaluate_model(params, data, o.jobs);
    } else {
        auto algo = parse_algorithm(o.algo);
        if (!algo || *algo == Algorithm::ConvMean) {
            throw UsageError("--algo must be one of grayworld, whitepatch, sog, ge1, ge2 (use --model for cm)");
        }
        BaselineConfig cfg;
        cfg.minkowski_p = o.p;
        cfg.edge_p = o.edge_p;
        name = o.algo;
        spdlog::info("eval: data={} ({} images) algo={} p={} edge_p={} jobs={}", o.data.string(), data.size(), name,
                     o.p, o.edge_p, o.jobs);
        errors = evaluate_baseline(*algo, data, cfg, o.jobs);
    }

    std::ofstream f;
    auto& out = open_output(o.out, f);
    out << kStatsCsvHeader << '\n';
    if (o.per_camera) {
        std::map<std::string, std::vector<double>> by_camera;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!data[i].camera) throw DataError("image '" + data[i].id + "' has no camera label");
            by_camera[*data[i].camera].push_back(errors[i]);
        }
        std::map<std::string, ErrorStats> stats;
        for (const auto& [cam, e] : by_camera) {
            stats[cam] = error_stats(e);
            out << stats_csv_row(name + ":" + cam, stats[cam]) << '\n';
        }
        out << stats_csv_row(name, aggregate_cameras(stats)) << '\n';
    } else {
        out << stats_csv_row(name, error_stats(errors)) << '\n';
    }

    if (!o.errors.empty()) {
        std::ofstream ef;
        auto& eo = open_output(o.errors, ef);
        eo << "id,angular_deg\n";
        char buf[32];
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.6f", errors[i]);
            eo << data[i].id << ',' << buf << '\n';
        }
    }
    return kOk;
}

int cmd_predict(const PredictOptions& o) {
    const CmParams params = load_model(o.model);
    LabeledImage img = read_single_image(o.image);
    spdlog::info("predict: model={} variant={} image={}", o.model.string(), variant_name(params.variant),
                 o.image.string());

    std::optional<Vec3> gt;
    const fs::path csv = o.image.parent_path() / "ground_truth.csv";
    if (fs::exists(csv)) {
        const auto rows = read_ground_truth(csv);
        if (auto it = rows.find(img.id); it != rows.end()) gt = unit_vector(it->second.gt);
    }

    const Prediction p = predict(params, img);
    std::printf("%s,%.6f,%.6f,%.6f", img.id.c_str(), p.illuminant[0], p.illuminant[1], p.illuminant[2]);
    if (gt) std::printf(",%.6f", angular_error(p.illuminant, *gt));
    if (p.degenerate) {
        std::printf(",degenerate");
        spdlog::warn("network response is all zero; printed the gray fallback");
    }
    std::printf("\n");
    return kOk;
}

int cmd_bench(const BenchOptions& o) {
    if (o.iters < 100) throw UsageError("--iters must be >= 100");
    if (o.warmup < 10) throw UsageError("--warmup must be >= 10");
    using clock = std::chrono::steady_clock;

    const auto t0 = clock::now();
    const CmParams params = load_model(o.model);
    const double load_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

    const LabeledImage src = o.image.empty() ? synth_generate(0, 1)[0] : read_single_image(o.image);
    const Tensor3<float> input = prepare_input(make_thumbnail(src).pixels, params.variant);
    spdlog::info("bench: model={} variant={} input={} iters={} warmup={}", o.model.string(),
                 variant_name(params.variant), input.shape(), o.iters, o.warmup);

    float sink = 0.0f;
    for (int i = 0; i < o.warmup; ++i) sink += forward(params, input).estimate[0];
    std::vector<double> ms(o.iters);
    for (int i = 0; i < o.iters; ++i) {
        const auto a = clock::now();
        sink += forward(params, input).estimate[0];
        ms[i] = std::chrono::duration<double, std::milli>(clock::now() - a).count();
    }
    std::sort(ms.begin(), ms.end());
    const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / ms.size();
    const double median = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
    const std::size_t rank = static_cast<std::size_t>(std::ceil(0.99 * ms.size())) - 1;
    std::printf("iters,mean_ms,median_ms,p99_ms,load_ms\n%d,%.4f,%.4f,%.4f,%.4f\n", o.iters, mean, median, ms[rank],
                load_ms);
    spdlog::debug("checksum {}", sink);
    return kOk;
}

int cmd_synth(const SynthOptions& o) {
    if (o.n < 1) throw UsageError("--n must be >= 1");
    MondrianSpec spec;
    spec.width = o.width;
    spec.height = o.height;
    if (spec.width < kThumbWidth || spec.height < kThumbHeight) throw UsageError("frames must be at least 48x32");
    spdlog::info("synth: n={} seed={} size={}x{} out={}", o.n, o.seed, spec.width, spec.height, o.out.string());
    save_dataset(o.out, synth_generate(o.seed, o.n, spec));
    return kOk;
}

RgbImage to_gray_ppm(const Tensor3<float>& t, int channel, float lo, float hi) {
    RgbImage img(t.height(), t.width(), 3);
    const float range = hi > lo ? hi - lo : 1.0f;
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) {
            const float v = std::clamp((t(y, x, channel) - lo) / range, 0.0f, 1.0f);
            const auto b = static_cast<std::uint8_t>(std::lround(255.0f * v));
            for (int c = 0; c < 3; ++c) img(y, x, c) = b;
        }
    return img;
}

int cmd_features(const FeaturesOptions& o) {
    const CmParams params = load_model(o.model);
    const LabeledImage img = make_thumbnail(read_single_image(o.image));
    spdlog::info("features: model={} image={} out={}", o.model.string(), o.image.string(), o.out.string());
    const FeatureMaps maps = dump_feature_maps(params, prepare_input(img.pixels, params.variant));
    fs::create_directories(o.out);

    for (int c = 0; c < maps.features.channels(); ++c) {
        float lo = INFINITY, hi = -INFINITY;
        for (int y = 0; y < maps.features.height(); ++y)
            for (int x = 0; x < maps.features.width(); ++x) {
                lo = std::min(lo, maps.features(y, x, c));
                hi = std::max(hi, maps.features(y, x, c));
            }
        char name[32];
        std::snprintf(name, sizeof(name), "feature_%02d.ppm", c);
        write_ppm(o.out / name, to_gray_ppm(maps.features, c, lo, hi));
    }

    const auto resp = maps.response.data();
    const float peak = resp.empty() ? 0.0f : *std::max_element(resp.begin(), resp.end());
    RgbImage response(maps.response.height(), maps.response.width(), 3);
    for (std::size_t i = 0; i < resp.size(); ++i) {
        response.data()[i] = static_cast<std::uint8_t>(peak > 0.0f ? std::lround(255.0f * resp[i] / peak) : 0);
    }
    write_ppm(o.out / "response.ppm", response);
    write_ppm(o.out / "focus.ppm", to_gray_ppm(maps.focus, 0, 0.0f, 1.0f));

    const Prediction p = predict(params, img);
    std::printf("%s,%.6f,%.6f,%.6f%s\n", img.id.c_str(), p.illuminant[0], p.illuminant[1], p.illuminant[2],
                p.degenerate ? ",degenerate" : "");
    return kOk;
}

int cmd_thumbs(const ThumbsOptions& o) {
    spdlog::info("thumbs: in={} out={}", o.in.string(), o.out.string());
    const Dataset data = load_dataset(o.in);
    Dataset thumbs;
    thumbs.images.reserve(data.size());
    for (const auto& img : data.images) thumbs.images.push_back(make_thumbnail(img));
    save_dataset(o.out, thumbs);
    spdlog::info("wrote {} thumbnails", thumbs.size());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_logger_mt("cmcc"));
    spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");

    CLI::App app{"Convolutional-mean illuminant estimation"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    TrainOptions train;
    auto* t = app.add_subcommand("train", "Train a model, optionally with k-fold cross-validation");
    t->add_option("--data", train.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    t->add_option("--folds", train.folds, "Cross-validation folds; 1 trains a single model")->capture_default_str();
    t->add_option("--epochs", train.epochs)->capture_default_str();
    t->add_option("--batch", train.batch)->capture_default_str();
    t->add_option("--lr", train.lr)->capture_default_str();
    t->add_option("--variant", train.variant, "cm|cm-a|cm-b|cm-c|cm-d")
        ->check(CLI::IsMember({"cm", "cm-a", "cm-b", "cm-c", "cm-d"}))
        ->capture_default_str();
    t->add_flag("--no-test-select", train.no_test_select, "Keep the last epoch instead of the best");
    t->add_option("--select-metric", train.select_metric, "mean|median")
        ->check(CLI::IsMember({"mean", "median"}))
        ->capture_default_str();
    t->add_option("--select-data", train.select_data, "Selection set (default: training thumbnails)")
        ->check(CLI::ExistingDirectory);
    t->add_option("--seed", train.seed)->capture_default_str();
    t->add_option("--out", train.out, "Model file (CMW1)");
    t->add_option("--report", train.report, "Per-epoch CSV of the final training run");
    t->add_option("--errors", train.errors, "Per-image held-out errors from cross-validation");
    t->add_option("--log-every", train.log_every, "Epoch logging interval, 0 to disable")->capture_default_str();

    EvalOptions eval;
    auto* e = app.add_subcommand("eval", "Angular-error statistics of a model or baseline on a dataset");
    e->add_option("--data", eval.data)->required()->check(CLI::ExistingDirectory);
    auto* model_opt = e->add_option("--model", eval.model)->check(CLI::ExistingFile);
    auto* algo_opt = e->add_option("--algo", eval.algo, "grayworld|whitepatch|sog|ge1|ge2");
    model_opt->excludes(algo_opt);
    e->add_option("--p", eval.p, "Shades-of-gray norm")->capture_default_str();
    e->add_option("--edge-p", eval.edge_p, "Gray-edge norm")->capture_default_str();
    e->add_option("--out", eval.out, "Stats CSV (default: stdout)");
    e->add_option("--errors", eval.errors, "Per-image error CSV");
    e->add_flag("--per-camera-geomean", eval.per_camera, "Per-camera rows plus their geometric mean");
    e->add_option("--jobs", eval.jobs)->capture_default_str();

    PredictOptions pred;
    auto* p = app.add_subcommand("predict", "Estimate the illuminant of one image");
    p->add_option("--model", pred.model)->required();
    p->add_option("--image", pred.image)->required();

    BenchOptions bench;
    auto* b = app.add_subcommand("bench", "Single-image forward latency");
    b->add_option("--model", bench.model)->required();
    b->add_option("--iters", bench.iters)->capture_default_str();
    b->add_option("--warmup", bench.warmup)->capture_default_str();
    b->add_option("--image", bench.image, "Input frame (default: a synthetic scene)");

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "Generate a Mondrian dataset");
    s->add_option("--n", synth.n)->capture_default_str();
    s->add_option("--seed", synth.seed)->capture_default_str();
    s->add_option("--out", synth.out)->required();
    s->add_option("--width", synth.width)->capture_default_str();
    s->add_option("--height", synth.height)->capture_default_str();

    FeaturesOptions feat;
    auto* f = app.add_subcommand("features", "Dump intermediate feature maps as PPM");
    f->add_option("--model", feat.model)->required();
    f->add_option("--image", feat.image)->required();
    f->add_option("--out", feat.out)->required();

    ThumbsOptions thumbs;
    auto* th = app.add_subcommand("thumbs", "Resize a dataset to 48x32 thumbnails");
    th->add_option("--in", thumbs.in)->required()->check(CLI::ExistingDirectory);
    th->add_option("--out", thumbs.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);

    try {
        if (*t) return cmd_train(train);
        if (*e) return cmd_eval(eval);
        if (*p) return cmd_predict(pred);
        if (*b) return cmd_bench(bench);
        if (*s) return cmd_synth(synth);
        if (*f) return cmd_features(feat);
        if (*th) return cmd_thumbs(thumbs);
    } catch (const UsageError& err) {
        spdlog::error("{}", err.what());
        return kUsage;
    } catch (const NumericError& err) {
        spdlog::error("numeric failure: {}", err.what());
        return kNumeric;
    } catch (const DataError& err) {
        spdlog::error("{}", err.what());
        return kData;
    } catch (const FormatError& err) {
        spdlog::error("{}", err.what());
        return kData;
    } catch (const ShapeError& err) {
        spdlog::error("{}", err.what());
        return kData;
    } catch (const std::exception& err) {
        spdlog::error("{}", err.what());
        return kData;
    }
    return kUsage;
}
