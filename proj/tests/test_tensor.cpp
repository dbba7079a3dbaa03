#include <doctest.h>

#include <cmath>
#include <random>

#include "cmcc/tensor.hpp"
#include "oracles.hpp"

using cmcc::Kernel4;
using cmcc::Tensor3;

TEST_CASE("conv2d centre tap scales a single pixel") {
    Tensor3<float> in(1, 1, 1, 5.0f);
    Kernel4<float> k(3, 3, 1, 1);
    k(1, 1, 0, 0) = 2.0f;
    const auto out = cmcc::conv2d(in, k, 1, 1);
    REQUIRE(out.shape() == "1x1x1");
    CHECK(out(0, 0, 0) == 10.0f);
}

TEST_CASE("conv2d counts overlap with zero padding") {
    Tensor3<float> in(3, 3, 1, 1.0f);
    Kernel4<float> k(3, 3, 1, 1, 1.0f);
    const auto out = cmcc::conv2d(in, k, 1, 1);
    CHECK(out(1, 1, 0) == 9.0f);
    CHECK(out(0, 1, 0) == 6.0f);
    CHECK(out(1, 0, 0) == 6.0f);
    CHECK(out(2, 1, 0) == 6.0f);
    CHECK(out(0, 0, 0) == 4.0f);
    CHECK(out(2, 2, 0) == 4.0f);
}

TEST_CASE("conv2d matches the direct correlation oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = oracle::random_tensor<float>(rng, 6, 4, 3);
        const auto k = oracle::random_kernel<float>(rng, 3, 3, 3, 2);
        const auto out = cmcc::conv2d(in, k, 1, 1);
        const auto ref = oracle::conv(oracle::to_grid(in), k, 1, 1);
        REQUIRE(out.size() == ref.v.size());
        for (std::size_t i = 0; i < ref.v.size(); ++i) CHECK(std::abs(out.data()[i] - ref.v[i]) < 1e-6);
    }
}

TEST_CASE("conv2d honours stride") {
    std::mt19937_64 rng(12);
    const auto in = oracle::random_tensor<double>(rng, 7, 9, 2);
    const auto k = oracle::random_kernel<double>(rng, 3, 3, 2, 4);
    const auto out = cmcc::conv2d(in, k, 1, 2);
    CHECK(out.shape() == "4x5x4");
    const auto ref = oracle::conv(oracle::to_grid(in), k, 1, 2);
    for (std::size_t i = 0; i < ref.v.size(); ++i) CHECK(out.data()[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
}

TEST_CASE("conv2d rejects mismatched shapes") {
    Tensor3<float> in(4, 4, 3);
    CHECK_THROWS_AS(cmcc::conv2d(in, Kernel4<float>(3, 3, 2, 1), 1, 1), cmcc::ShapeError);
    CHECK_THROWS_AS(cmcc::conv2d(in, Kernel4<float>(3, 3, 3, 1), 0, 2), cmcc::ShapeError);  // (4-3)/2 not integral
    CHECK_THROWS_AS(cmcc::conv2d(in, Kernel4<float>(5, 5, 3, 1), 0, 1), cmcc::ShapeError);
}

TEST_CASE("conv2d is linear and the identity kernel reproduces its input") {
    std::mt19937_64 rng(13);
    const auto x = oracle::random_tensor<float>(rng, 8, 6, 3);
    const auto y = oracle::random_tensor<float>(rng, 8, 6, 3);
    const auto k = oracle::random_kernel<float>(rng, 3, 3, 3, 5);
    const float a = 0.7f, b = -1.3f;
    Tensor3<float> mix(8, 6, 3);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
    const auto lhs = cmcc::conv2d(mix, k, 1, 1);
    const auto cx = cmcc::conv2d(x, k, 1, 1);
    const auto cy = cmcc::conv2d(y, k, 1, 1);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        CHECK(std::abs(lhs.data()[i] - (a * cx.data()[i] + b * cy.data()[i])) < 1e-5);
    }

    Kernel4<float> id(3, 3, 3, 3);
    for (int c = 0; c < 3; ++c) id(1, 1, c, c) = 1.0f;
    const auto same = cmcc::conv2d(x, id, 1, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);
}

TEST_CASE("maxpool2x2 picks the window maximum") {
    Tensor3<float> in(2, 2, 1);
    in(0, 0, 0) = 1;
    in(0, 1, 0) = 2;
    in(1, 0, 0) = 3;
    in(1, 1, 0) = 4;
    auto r = cmcc::maxpool2x2(in);
    CHECK(r.output(0, 0, 0) == 4.0f);
    CHECK(r.routing.at(0, 0, 0) == 3);

    for (auto& v : in.data()) v = -v;
    r = cmcc::maxpool2x2(in);
    CHECK(r.output(0, 0, 0) == -1.0f);
    CHECK(r.routing.at(0, 0, 0) == 0);
}

TEST_CASE("maxpool2x2 ties go to the first element in row-major order") {
    Tensor3<float> in(2, 2, 1, 3.0f);
    const auto r = cmcc::maxpool2x2(in);
    CHECK(r.routing.at(0, 0, 0) == 0);
    in(1, 0, 0) = 5.0f;
    in(1, 1, 0) = 5.0f;
    CHECK(cmcc::maxpool2x2(in).routing.at(0, 0, 0) == 2);
}

TEST_CASE("maxpool2x2 matches exhaustive window scan and its routing") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = oracle::random_tensor<float>(rng, 8, 6, 3);
        const auto r = cmcc::maxpool2x2(in);
        const auto ref = oracle::window_max(oracle::to_grid(in));
        REQUIRE(r.output.shape() == "4x3x3");
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 3; ++x)
                for (int c = 0; c < 3; ++c) {
                    const int src = r.routing.at(y, x, c);
                    const int sy = src / 6, sx = src % 6;
                    CHECK(r.output(y, x, c) == ref.at(y, x, c));
                    CHECK(in(sy, sx, c) == r.output(y, x, c));
                    CHECK((sy / 2 == y && sx / 2 == x));
                }
    }
}

TEST_CASE("maxpool2x2 rejects odd dimensions") {
    CHECK_THROWS_AS(cmcc::maxpool2x2(Tensor3<float>(3, 4, 1)), cmcc::ShapeError);
    CHECK_THROWS_AS(cmcc::maxpool2x2(Tensor3<float>(4, 5, 1)), cmcc::ShapeError);
}

TEST_CASE("maxpool2x2_backward routes gradient to the argmax") {
    std::mt19937_64 rng(15);
    const auto in = oracle::random_tensor<double>(rng, 4, 4, 2);
    const auto r = cmcc::maxpool2x2(in);
    Tensor3<double> g(2, 2, 2, 1.0);
    const auto gi = cmcc::maxpool2x2_backward(g, r.routing);
    double total = 0.0;
    for (double v : gi.data()) total += v;
    CHECK(total == 8.0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 2; ++c) {
                const int src = r.routing.at(y, x, c);
                CHECK(gi(src / 4, src % 4, c) == 1.0);
            }
}

TEST_CASE("relu clamps negatives, is idempotent and leaves nonnegatives alone") {
    Tensor3<float> in(1, 3, 1);
    in(0, 0, 0) = -1;
    in(0, 1, 0) = 0;
    in(0, 2, 0) = 2;
    const auto out = cmcc::relu(in);
    CHECK(out(0, 0, 0) == 0.0f);
    CHECK(out(0, 1, 0) == 0.0f);
    CHECK(out(0, 2, 0) == 2.0f);

    std::mt19937_64 rng(16);
    const auto x = oracle::random_tensor<float>(rng, 5, 5, 4);
    const auto once = cmcc::relu(x);
    const auto twice = cmcc::relu(once);
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once.data()[i] == twice.data()[i]);
        CHECK(once.data()[i] >= 0.0f);
    }
    const auto pos = oracle::random_tensor<float>(rng, 3, 3, 2, 0.0, 1.0);
    const auto same = cmcc::relu(pos);
    for (std::size_t i = 0; i < pos.size(); ++i) CHECK(same.data()[i] == pos.data()[i]);
}

TEST_CASE("global_avg_pool averages each channel") {
    Tensor3<float> in(2, 2, 3);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            in(y, x, 0) = 0.3f;
            in(y, x, 1) = (x == 0) ? 0.0f : 2.0f;
        }
    const auto m = cmcc::global_avg_pool(in);
    CHECK(m[0] == doctest::Approx(0.3));
    CHECK(m[1] == doctest::Approx(1.0));
    CHECK(m[2] == 0.0f);

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = oracle::random_tensor<double>(rng, 12, 8, 3);
        const auto got = cmcc::global_avg_pool(t);
        const auto ref = oracle::channel_means(oracle::to_grid(t));
        for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - ref[c]) < 1e-9);

        // commutes with per-channel scaling
        const std::array<double, 3> k{0.5, 2.0, 3.0};
        Tensor3<double> scaled = t;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled.data()[i] *= k[i % 3];
        const auto gs = cmcc::global_avg_pool(scaled);
        for (int c = 0; c < 3; ++c) CHECK(gs[c] == doctest::Approx(k[c] * got[c]).epsilon(1e-12));
    }
    CHECK_THROWS_AS(cmcc::global_avg_pool(Tensor3<float>(2, 2, 4)), cmcc::ShapeError);
}

TEST_CASE("l2_normalize") {
    auto n = cmcc::l2_normalize(std::array<double, 3>{3, 0, 4});
    CHECK(n.unit[0] == doctest::Approx(0.6));
    CHECK(n.unit[1] == 0.0);
    CHECK(n.unit[2] == doctest::Approx(0.8));
    CHECK_FALSE(n.degenerate);

    const double g = 1.0 / std::sqrt(3.0);
    n = cmcc::l2_normalize(std::array<double, 3>{1, 1, 1});
    for (double v : n.unit) CHECK(v == doctest::Approx(g));
    CHECK_FALSE(n.degenerate);

    n = cmcc::l2_normalize(std::array<double, 3>{0, 0, 0});
    CHECK(n.degenerate);
    for (double v : n.unit) CHECK(v == doctest::Approx(g));

    std::mt19937_64 rng(18);
    std::uniform_real_distribution<double> d(-10, 10);
    for (int i = 0; i < 200; ++i) {
        const std::array<float, 3> v{static_cast<float>(d(rng)), static_cast<float>(d(rng)),
                                     static_cast<float>(d(rng))};
        const auto u = cmcc::l2_normalize(v);
        const double len = std::sqrt(double(u.unit[0]) * u.unit[0] + double(u.unit[1]) * u.unit[1] +
                                     double(u.unit[2]) * u.unit[2]);
        CHECK(std::abs(len - 1.0) < 1e-6);
        const auto scaled = cmcc::l2_normalize(std::array<float, 3>{v[0] * 3.5f, v[1] * 3.5f, v[2] * 3.5f});
        for (int c = 0; c < 3; ++c) CHECK(std::abs(scaled.unit[c] - u.unit[c]) < 1e-6);
    }
}
