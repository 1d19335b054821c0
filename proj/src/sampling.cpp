#include "s2d/sampling.hpp"

namespace s2d {

SparseDepth bernoulli_sample(const DepthMap& gt, i64 m, Rng& rng) {
    check(m >= 0, "bernoulli_sample: target count must be >= 0");
    const i64 n = gt.valid_count();
    check(n >= 1, "bernoulli_sample: depth image has no valid pixels");
    check(m <= n, "bernoulli_sample: target count " + std::to_string(m) + " exceeds the " +
                      std::to_string(n) + " valid pixels");
    SparseDepth out(gt.h, gt.w);
    if (m == 0) return out;
    const double p = double(m) / double(n);
    for (size_t i = 0; i < gt.data.size(); ++i) {
        if (gt.data[i] <= 0) continue;
        if (rng.uniform() < p) out.data[i] = gt.data[i];
    }
    return out;
}

SparseDepth scanline_sample(const DepthMap& gt, i64 row_stride, i64 offset) {
    check(row_stride >= 1, "scanline_sample: row stride must be >= 1");
    SparseDepth out(gt.h, gt.w);
    for (i64 y = 0; y < gt.h; ++y) {
        if (((y - offset) % row_stride + row_stride) % row_stride != 0) continue;
        for (i64 x = 0; x < gt.w; ++x)
            if (gt.at(y, x) > 0) out.at(y, x) = gt.at(y, x);
    }
    return out;
}

template <typename T>
Tensor<T> make_input(const RgbImage& rgb, const SparseDepth& sparse, Problem problem) {
    const bool need_rgb = problem != Problem::sd;
    const bool need_depth = problem != Problem::RGB;
    i64 h = 0, w = 0;
    if (need_rgb) {
        check(rgb.h > 0 && rgb.w > 0, "make_input: rgb image required for this problem");
        h = rgb.h;
        w = rgb.w;
    }
    if (need_depth) {
        check(sparse.h > 0 && sparse.w > 0, "make_input: sparse depth required for this problem");
        if (need_rgb)
            check(sparse.h == h && sparse.w == w, "make_input: rgb and depth sizes must agree");
        h = sparse.h;
        w = sparse.w;
    }

    Tensor<T> t({1, problem_channels(problem), h, w});
    i64 ch = 0;
    if (need_rgb) {
        for (i64 c = 0; c < 3; ++c, ++ch)
            for (i64 y = 0; y < h; ++y)
                for (i64 x = 0; x < w; ++x) t.at(0, ch, y, x) = static_cast<T>(rgb.at(c, y, x));
    }
    if (need_depth) {
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x) t.at(0, ch, y, x) = static_cast<T>(sparse.at(y, x));
    }
    return t;
}

template Tensor<float> make_input<float>(const RgbImage&, const SparseDepth&, Problem);
template Tensor<double> make_input<double>(const RgbImage&, const SparseDepth&, Problem);

}  // namespace s2d
