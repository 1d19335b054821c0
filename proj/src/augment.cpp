#include "s2d/augment.hpp"

#include <cmath>

namespace s2d {

AugmentParams identity_augment_params(i64 h, i64 w) {
    AugmentParams p;
    p.crop_h = h;
    p.crop_w = w;
    return p;
}

AugmentParams draw_augment_params(i64 crop_h, i64 crop_w, Rng& rng) {
    AugmentParams p;
    p.scale = rng.uniform(1.0, 1.5);
    p.rot_deg = rng.uniform(-5.0, 5.0);
    p.jitter_b = rng.uniform(0.6, 1.4);
    p.jitter_c = rng.uniform(0.6, 1.4);
    p.jitter_s = rng.uniform(0.6, 1.4);
    p.flip = rng.uniform() < 0.5;
    p.crop_h = crop_h;
    p.crop_w = crop_w;
    return p;
}

namespace {

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

}  // namespace

Augmented augment(const RgbImage& rgb, const DepthMap& depth, const AugmentParams& p,
                  const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    check(rgb.h == depth.h && rgb.w == depth.w, "augment: rgb and depth sizes must agree");
    check(p.scale >= 1.0, "augment: scale must be >= 1");
    for (double s : std) check(s > 0, "augment: normalization std must be positive");

    RgbImage c = rgb;
    DepthMap d = depth;

    if (p.scale != 1.0) {
        const i64 hs = std::llround(rgb.h * p.scale);
        const i64 ws = std::llround(rgb.w * p.scale);
        RgbImage cs(hs, ws);
        DepthMap ds(hs, ws);
        for (i64 y = 0; y < hs; ++y) {
            i64 sy = static_cast<i64>(std::floor((y + 0.5) * double(rgb.h) / double(hs)));
            sy = std::min(sy, rgb.h - 1);
            for (i64 x = 0; x < ws; ++x) {
                i64 sx = static_cast<i64>(std::floor((x + 0.5) * double(rgb.w) / double(ws)));
                sx = std::min(sx, rgb.w - 1);
                for (i64 ch = 0; ch < 3; ++ch) cs.at(ch, y, x) = c.at(ch, sy, sx);
                const double dv = d.at(sy, sx);
                ds.at(y, x) = dv > 0 ? dv / p.scale : 0.0;
            }
        }
        c = std::move(cs);
        d = std::move(ds);
    }

    if (p.rot_deg != 0.0) {
        const double th = p.rot_deg * M_PI / 180.0;
        const double ct = std::cos(th), st = std::sin(th);
        const double cy = (c.h - 1) / 2.0, cx = (c.w - 1) / 2.0;
        RgbImage cr(c.h, c.w);
        DepthMap dr(c.h, c.w);
        for (i64 y = 0; y < c.h; ++y) {
            for (i64 x = 0; x < c.w; ++x) {
                const double dx = x - cx, dy = y - cy;
                const i64 sx = std::llround(ct * dx + st * dy + cx);
                const i64 sy = std::llround(-st * dx + ct * dy + cy);
                if (sx < 0 || sx >= c.w || sy < 0 || sy >= c.h) continue;  // stays 0/invalid
                for (i64 ch = 0; ch < 3; ++ch) cr.at(ch, y, x) = c.at(ch, sy, sx);
                dr.at(y, x) = d.at(sy, sx);
            }
        }
        c = std::move(cr);
        d = std::move(dr);
    }

    const i64 npix = c.h * c.w;
    for (i64 i = 0; i < 3 * npix; ++i) c.data[static_cast<size_t>(i)] *= p.jitter_b;
    for (auto& v : c.data) v = clamp01(v);

    double gray_mean = 0;
    for (i64 i = 0; i < npix; ++i)
        gray_mean += luminance(c.data[static_cast<size_t>(i)],
                               c.data[static_cast<size_t>(npix + i)],
                               c.data[static_cast<size_t>(2 * npix + i)]);
    gray_mean /= double(npix);
    for (auto& v : c.data) v = clamp01(gray_mean + (v - gray_mean) * p.jitter_c);

    for (i64 i = 0; i < npix; ++i) {
        const double g = luminance(c.data[static_cast<size_t>(i)],
                                   c.data[static_cast<size_t>(npix + i)],
                                   c.data[static_cast<size_t>(2 * npix + i)]);
        for (i64 ch = 0; ch < 3; ++ch) {
            auto& v = c.data[static_cast<size_t>(ch * npix + i)];
            v = clamp01(g + (v - g) * p.jitter_s);
        }
    }

    for (i64 ch = 0; ch < 3; ++ch)
        for (i64 i = 0; i < npix; ++i) {
            auto& v = c.data[static_cast<size_t>(ch * npix + i)];
            v = (v - mean[static_cast<size_t>(ch)]) / std[static_cast<size_t>(ch)];
        }

    if (p.flip) {
        for (i64 ch = 0; ch < 3; ++ch)
            for (i64 y = 0; y < c.h; ++y)
                for (i64 x = 0; x < c.w / 2; ++x)
                    std::swap(c.at(ch, y, x), c.at(ch, y, c.w - 1 - x));
        for (i64 y = 0; y < d.h; ++y)
            for (i64 x = 0; x < d.w / 2; ++x) std::swap(d.at(y, x), d.at(y, d.w - 1 - x));
    }

    check(p.crop_h >= 1 && p.crop_w >= 1, "augment: crop size must be >= 1");
    check(p.crop_h <= c.h && p.crop_w <= c.w,
          "augment: crop " + std::to_string(p.crop_h) + "x" + std::to_string(p.crop_w) +
              " larger than the " + std::to_string(c.h) + "x" + std::to_string(c.w) + " image");
    const i64 oy = (c.h - p.crop_h) / 2, ox = (c.w - p.crop_w) / 2;
    Augmented out{RgbImage(p.crop_h, p.crop_w), DepthMap(p.crop_h, p.crop_w)};
    for (i64 ch = 0; ch < 3; ++ch)
        for (i64 y = 0; y < p.crop_h; ++y)
            for (i64 x = 0; x < p.crop_w; ++x) out.rgb.at(ch, y, x) = c.at(ch, y + oy, x + ox);
    for (i64 y = 0; y < p.crop_h; ++y)
        for (i64 x = 0; x < p.crop_w; ++x) out.depth.at(y, x) = d.at(y + oy, x + ox);
    return out;
}

}  // namespace s2d
