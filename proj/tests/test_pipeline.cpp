#include <doctest.h>

#include "cmcc/evaluation.hpp"
#include "cmcc/pipeline.hpp"

using namespace cmcc;

TEST_CASE("predict matches a manual thumbnail forward pass") {
    const auto data = synth_generate(40, 4);
    const CmParams p = init_kaiming(2);
    for (const auto& im : data.images) {
        const auto thumb = make_thumbnail(im);
        const auto direct = forward(p, prepare_input(thumb.pixels, p.variant));
        const auto pred = predict(p, im);
        CHECK(pred.degenerate == direct.degenerate);
        for (int c = 0; c < 3; ++c) CHECK(pred.illuminant[c] == double(direct.estimate[c]));

        const auto base = predict_baseline(Algorithm::GrayWorld, im);
        const auto manual = gray_world(to_float(thumb.pixels)).illuminant;
        for (int c = 0; c < 3; ++c) CHECK(base.illuminant[c] == manual[c]);
    }
}

TEST_CASE("parallel evaluation is order-stable") {
    const auto data = synth_generate(41, 13, MondrianSpec{96, 64, 3, 8});
    const CmParams p = init_kaiming(3);
    const auto serial = evaluate_model(p, data, 1);
    REQUIRE(serial.size() == data.size());
    for (int jobs : {2, 3, 8, 64}) CHECK(evaluate_model(p, data, jobs) == serial);

    const auto gw = evaluate_baseline(Algorithm::ShadesOfGray, data, {}, 1);
    CHECK(evaluate_baseline(Algorithm::ShadesOfGray, data, {}, 4) == gw);
    for (std::size_t i = 0; i < data.size(); ++i)
        CHECK(gw[i] == angular_error(predict_baseline(Algorithm::ShadesOfGray, data[i]).illuminant, data[i].gt));
}
