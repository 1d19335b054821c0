// Parallel compute kernels against the serial reference implementations
// and against hand-computable cases; every comparison is elementwise.

#include <cmath>

#include "doctest.h"
#include "s2d/kernels.hpp"
#include "s2d/parallel.hpp"
#include "s2d/ref.hpp"
#include "test_util.hpp"

using namespace s2d;
using test::bitwise_equal;
using test::max_rel_diff;
using test::randn;

namespace {

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
    Rng rng(101);
    Tensor<double> x = randn<double>({2, 3, 4, 4}, rng);
    Tensor<double> w({3, 3, 1, 1});
    for (i64 c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
    Tensor<double> y = kernels::conv2d_fwd(x, w, nullptr, 1, 0);
    CHECK(bitwise_equal(y, x));
}

TEST_CASE("conv2d all-ones sum kernel") {
    Tensor<double> x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    Tensor<double> y = kernels::conv2d_fwd(x, w, nullptr, 1, 0);
    CHECK(y.shape == Shape4{1, 1, 1, 1});
    CHECK(y.data[0] == 9.0);
}

TEST_CASE("conv2d matches the serial reference") {
    Rng rng(102);
    struct Case {
        Shape4 x, w;
        i64 stride, pad;
    };
    const Case cases[] = {
        {{1, 1, 5, 5}, {1, 1, 3, 3}, 1, 0},  {{2, 3, 9, 9}, {4, 3, 3, 3}, 2, 1},
        {{2, 4, 9, 9}, {2, 4, 3, 3}, 1, 1},  {{1, 3, 8, 8}, {5, 3, 7, 7}, 2, 3},
        {{2, 2, 6, 7}, {3, 2, 1, 1}, 1, 0},  {{1, 4, 9, 9}, {4, 4, 5, 5}, 1, 2},
        {{3, 1, 7, 5}, {2, 1, 3, 3}, 2, 0},
    };
    for (const Case& c : cases) {
        CAPTURE(c.x.str());
        CAPTURE(c.w.str());
        Tensor<double> x = randn<double>(c.x, rng);
        Tensor<double> w = randn<double>(c.w, rng);
        Tensor<double> b = randn<double>({1, c.w.n, 1, 1}, rng);
        CHECK(max_rel_diff(kernels::conv2d_fwd(x, w, &b, c.stride, c.pad),
                           ref::conv2d_fwd(x, w, &b, c.stride, c.pad)) < 1e-12);
        CHECK(max_rel_diff(kernels::conv2d_fwd(x, w, nullptr, c.stride, c.pad),
                           ref::conv2d_fwd(x, w, nullptr, c.stride, c.pad)) < 1e-12);
    }
}

TEST_CASE("conv2d backward kernels match the serial reference") {
    Rng rng(103);
    const Shape4 xs{2, 3, 8, 8}, ws{4, 3, 3, 3};
    const i64 stride = 2, pad = 1;
    Tensor<double> x = randn<double>(xs, rng);
    Tensor<double> w = randn<double>(ws, rng);
    const Shape4 ys = kernels::conv2d_fwd(x, w, nullptr, stride, pad).shape;
    Tensor<double> gy = randn<double>(ys, rng);

    CHECK(max_rel_diff(kernels::conv2d_bwd_input(gy, w, stride, pad, xs),
                       ref::conv2d_bwd_input(gy, w, stride, pad, xs)) < 1e-12);
    CHECK(max_rel_diff(kernels::conv2d_bwd_weight(gy, x, stride, pad, ws),
                       ref::conv2d_bwd_weight(gy, x, stride, pad, ws)) < 1e-12);

    // Bias gradient is the plain sum of gy over (N,H,W) per channel.
    Tensor<double> gb = kernels::conv2d_bwd_bias(gy);
    CHECK(gb.shape == Shape4{1, ys.c, 1, 1});
    for (i64 c = 0; c < ys.c; ++c) {
        double s = 0;
        for (i64 n = 0; n < ys.n; ++n)
            for (i64 y = 0; y < ys.h; ++y)
                for (i64 xx = 0; xx < ys.w; ++xx) s += gy.at(n, c, y, xx);
        CHECK(gb.at(0, c, 0, 0) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("depthwise conv matches the serial reference") {
    Rng rng(104);
    for (i64 stride : {i64(1), i64(2)}) {
        Tensor<double> x = randn<double>({2, 4, 9, 9}, rng);
        Tensor<double> w = randn<double>({4, 1, 3, 3}, rng);
        CHECK(max_rel_diff(kernels::dwconv2d_fwd(x, w, stride, 1),
                           ref::dwconv2d_fwd(x, w, stride, 1)) < 1e-12);
    }
}

TEST_CASE("depthwise conv acts per channel") {
    // A kernel that is zero in every channel but one leaves only that
    // channel's output nonzero.
    Rng rng(105);
    Tensor<double> x = randn<double>({1, 3, 5, 5}, rng);
    Tensor<double> w({3, 1, 3, 3});
    w.at(1, 0, 1, 1) = 1.0;
    Tensor<double> y = kernels::dwconv2d_fwd(x, w, 1, 1);
    for (i64 y0 = 0; y0 < 5; ++y0)
        for (i64 x0 = 0; x0 < 5; ++x0) {
            CHECK(y.at(0, 0, y0, x0) == 0.0);
            CHECK(y.at(0, 1, y0, x0) == x.at(0, 1, y0, x0));
            CHECK(y.at(0, 2, y0, x0) == 0.0);
        }
}

TEST_CASE("transposed conv single-pixel expansion") {
    Tensor<double> x({1, 1, 1, 1}, {3.0});
    Tensor<double> w({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor<double> y = kernels::tconv2d_full_fwd(x, w);
    CHECK(y.shape == Shape4{1, 1, 2, 2});
    CHECK(y.data == std::vector<double>{3, 6, 9, 12});
}

TEST_CASE("transposed conv is the adjoint of strided conv") {
    // <conv(x, w), y> must equal <x, tconv(y, w)> with the same weight
    // buffer; sizes are chosen so the full transposed output matches x.
    Rng rng(106);
    for (i64 k : {i64(2), i64(3)}) {
        CAPTURE(k);
        const i64 h = k == 2 ? 8 : 9;
        Tensor<double> x = randn<double>({2, 3, h, h}, rng);
        Tensor<double> w = randn<double>({4, 3, k, k}, rng);
        Tensor<double> cx = kernels::conv2d_fwd(x, w, nullptr, 2, 0);
        Tensor<double> y = randn<double>(cx.shape, rng);
        Tensor<double> w_t(Shape4{4, 3, k, k}, w.data);
        Tensor<double> ty = kernels::tconv2d_full_fwd(y, w_t);
        REQUIRE(ty.shape == x.shape);
        const double lhs = dot(cx, y), rhs = dot(x, ty);
        CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)) < 1e-10);
    }
}

TEST_CASE("transposed conv matches the serial reference") {
    Rng rng(107);
    for (i64 k : {i64(2), i64(3)}) {
        Tensor<double> x = randn<double>({2, 3, 5, 6}, rng);
        Tensor<double> w = randn<double>({3, 2, k, k}, rng);
        CHECK(max_rel_diff(kernels::tconv2d_full_fwd(x, w), ref::tconv2d_full_fwd(x, w)) <
              1e-12);
    }
}

TEST_CASE("transposed conv output sizes per kernel") {
    Rng rng(108);
    Tensor<double> x = randn<double>({1, 2, 7, 7}, rng);
    Tensor<double> w2 = randn<double>({2, 1, 2, 2}, rng);
    Tensor<double> w3 = randn<double>({2, 1, 3, 3}, rng);
    CHECK(kernels::tconv2d_full_fwd(x, w2).shape == Shape4{1, 1, 14, 14});
    // The 3x3 kernel's full output is one row/column over; cropping it
    // back to 14 is the decoder-facing contract.
    Tensor<double> full3 = kernels::tconv2d_full_fwd(x, w3);
    CHECK(full3.shape == Shape4{1, 1, 15, 15});
    CHECK(kernels::crop_br(full3, 14, 14).shape == Shape4{1, 1, 14, 14});
}

TEST_CASE("unpool2x places values top-left") {
    Tensor<double> x({1, 1, 1, 1}, {5.0});
    Tensor<double> y = kernels::unpool2x_fwd(x);
    CHECK(y.shape == Shape4{1, 1, 2, 2});
    CHECK(y.data == std::vector<double>{5, 0, 0, 0});
}

TEST_CASE("unpool2x preserves the sum and subsamples backward") {
    Rng rng(109);
    Tensor<double> x = randn<double>({2, 3, 4, 5}, rng);
    Tensor<double> y = kernels::unpool2x_fwd(x);
    CHECK(y.shape == Shape4{2, 3, 8, 10});
    double sx = 0, sy = 0;
    for (double v : x.data) sx += v;
    for (double v : y.data) sy += v;
    CHECK(sy == doctest::Approx(sx).epsilon(1e-12));

    Tensor<double> gy = randn<double>(y.shape, rng);
    Tensor<double> gx = kernels::unpool2x_bwd(gy);
    REQUIRE(gx.shape == x.shape);
    for (i64 n = 0; n < 2; ++n)
        for (i64 c = 0; c < 3; ++c)
            for (i64 r = 0; r < 4; ++r)
                for (i64 q = 0; q < 5; ++q)
                    CHECK(gx.at(n, c, r, q) == gy.at(n, c, 2 * r, 2 * q));
}

TEST_CASE("bilinear upsampling of a constant image") {
    Tensor<double> x = Tensor<double>::full({1, 2, 3, 3}, 3.7);
    Tensor<double> y = kernels::bilinear_fwd(x, 7, 5);
    for (double v : y.data) CHECK(v == doctest::Approx(3.7).epsilon(1e-14));
}

TEST_CASE("bilinear midpoint with align-corners") {
    Tensor<double> x({1, 1, 2, 1}, {0.0, 1.0});
    Tensor<double> y = kernels::bilinear_fwd(x, 3, 1);
    CHECK(y.data[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(y.data[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(y.data[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("bilinear output stays inside the input range") {
    Rng rng(110);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<double> x = randn<double>({1, 2, 5, 4}, rng);
        double lo = x.data[0], hi = x.data[0];
        for (double v : x.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        Tensor<double> y = kernels::bilinear_fwd(x, 13, 9);
        for (double v : y.data) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("bilinear matches the serial reference") {
    Rng rng(111);
    Tensor<double> x = randn<double>({2, 3, 5, 6}, rng);
    CHECK(max_rel_diff(kernels::bilinear_fwd(x, 11, 13), ref::bilinear_fwd(x, 11, 13)) < 1e-12);
}

TEST_CASE("batch norm training statistics") {
    Rng rng(112);
    Tensor<double> x = randn<double>({3, 2, 4, 4}, rng, 2.5);
    Tensor<double> gamma = Tensor<double>::full({1, 2, 1, 1}, 1.0);
    Tensor<double> beta({1, 2, 1, 1});
    kernels::BnForward<double> out = kernels::bn_fwd_train(x, gamma, beta, 1e-5);

    // Normalized output has zero mean and unit variance per channel.
    const i64 per_channel = 3 * 4 * 4;
    for (i64 c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (i64 n = 0; n < 3; ++n)
            for (i64 r = 0; r < 4; ++r)
                for (i64 q = 0; q < 4; ++q) mean += out.y.at(n, c, r, q);
        mean /= double(per_channel);
        for (i64 n = 0; n < 3; ++n)
            for (i64 r = 0; r < 4; ++r)
                for (i64 q = 0; q < 4; ++q) {
                    const double d = out.y.at(n, c, r, q) - mean;
                    var += d * d;
                }
        var /= double(per_channel);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    // Returned statistics are the plain batch moments.
    for (i64 c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (i64 n = 0; n < 3; ++n)
            for (i64 r = 0; r < 4; ++r)
                for (i64 q = 0; q < 4; ++q) mean += x.at(n, c, r, q);
        mean /= double(per_channel);
        for (i64 n = 0; n < 3; ++n)
            for (i64 r = 0; r < 4; ++r)
                for (i64 q = 0; q < 4; ++q) {
                    const double d = x.at(n, c, r, q) - mean;
                    var += d * d;
                }
        var /= double(per_channel);
        CHECK(out.mean.at(0, c, 0, 0) == doctest::Approx(mean).epsilon(1e-12));
        CHECK(out.var.at(0, c, 0, 0) == doctest::Approx(var).epsilon(1e-12));
    }

    CHECK(max_rel_diff(out.y, ref::bn_fwd_train(x, gamma, beta, 1e-5).y) < 1e-12);
}

TEST_CASE("batch norm eval with unit running stats") {
    Rng rng(113);
    Tensor<double> x = randn<double>({1, 2, 3, 3}, rng);
    Tensor<double> gamma = Tensor<double>::full({1, 2, 1, 1}, 1.0);
    Tensor<double> beta({1, 2, 1, 1});
    Tensor<double> rmean({1, 2, 1, 1});
    Tensor<double> rvar = Tensor<double>::full({1, 2, 1, 1}, 1.0);
    Tensor<double> y = kernels::bn_fwd_eval(x, gamma, beta, rmean, rvar, 1e-5);
    const double k = 1.0 / std::sqrt(1.0 + 1e-5);
    for (size_t i = 0; i < x.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(x.data[i] * k).epsilon(1e-14));
}

TEST_CASE("crop and pad round the bottom-right corner") {
    Rng rng(114);
    Tensor<double> x = randn<double>({1, 2, 5, 6}, rng);
    Tensor<double> c = kernels::crop_br(x, 4, 4);
    CHECK(c.shape == Shape4{1, 2, 4, 4});
    for (i64 ch = 0; ch < 2; ++ch)
        for (i64 r = 0; r < 4; ++r)
            for (i64 q = 0; q < 4; ++q) CHECK(c.at(0, ch, r, q) == x.at(0, ch, r, q));

    Tensor<double> p = kernels::pad_br(c, 5, 6);
    CHECK(p.shape == x.shape);
    CHECK(p.at(0, 0, 4, 5) == 0.0);
    CHECK(p.at(0, 1, 0, 0) == c.at(0, 1, 0, 0));
}

TEST_CASE("conv output size formula") {
    CHECK(kernels::conv_out_size(9, 3, 2, 1) == 5);
    CHECK(kernels::conv_out_size(64, 7, 2, 3) == 32);
    CHECK(kernels::conv_out_size(5, 5, 1, 2) == 5);
    CHECK(kernels::conv_out_size(3, 3, 1, 0) == 1);
}

TEST_CASE("kernel results are invariant to the thread count") {
    Rng rng(115);
    Tensor<double> x = randn<double>({2, 3, 16, 16}, rng);
    Tensor<double> w = randn<double>({4, 3, 3, 3}, rng);
    Tensor<double> b = randn<double>({1, 4, 1, 1}, rng);

    parallel::set_threads(1);
    Tensor<double> y1 = kernels::conv2d_fwd(x, w, &b, 2, 1);
    Tensor<double> g1 = kernels::conv2d_bwd_weight(y1, x, 2, 1, w.shape);
    parallel::set_threads(3);
    Tensor<double> y3 = kernels::conv2d_fwd(x, w, &b, 2, 1);
    Tensor<double> g3 = kernels::conv2d_bwd_weight(y3, x, 2, 1, w.shape);
    parallel::set_threads(0);

    CHECK(bitwise_equal(y1, y3));
    CHECK(bitwise_equal(g1, g3));
}
