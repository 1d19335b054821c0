#pragma once

// Plain image-domain data: RGB and depth rasters in double precision,
// validity masks, and the input-modality selector. The convention
// throughout: depth is meters and 0 means "no measurement".

#include <string>
#include <vector>

#include "s2d/core.hpp"

namespace s2d {

struct RgbImage {
    i64 h = 0, w = 0;
    std::vector<double> data;  // channel-major, 3*h*w, values in [0,1] until normalized

    RgbImage() = default;
    RgbImage(i64 h_, i64 w_) : h(h_), w(w_), data(static_cast<size_t>(3 * h_ * w_), 0.0) {}
    double& at(i64 c, i64 y, i64 x) { return data[static_cast<size_t>((c * h + y) * w + x)]; }
    double at(i64 c, i64 y, i64 x) const {
        return data[static_cast<size_t>((c * h + y) * w + x)];
    }
};

struct DepthMap {
    i64 h = 0, w = 0;
    std::vector<double> data;  // meters, 0 = invalid / no sample

    DepthMap() = default;
    DepthMap(i64 h_, i64 w_) : h(h_), w(w_), data(static_cast<size_t>(h_ * w_), 0.0) {}
    double& at(i64 y, i64 x) { return data[static_cast<size_t>(y * w + x)]; }
    double at(i64 y, i64 x) const { return data[static_cast<size_t>(y * w + x)]; }
    i64 valid_count() const {
        i64 n = 0;
        for (double v : data) n += v > 0 ? 1 : 0;
        return n;
    }
};

// A depth image whose zeros mean "no sample was taken here".
using SparseDepth = DepthMap;

struct Mask {
    i64 h = 0, w = 0;
    std::vector<char> data;

    Mask() = default;
    Mask(i64 h_, i64 w_) : h(h_), w(w_), data(static_cast<size_t>(h_ * w_), 0) {}
    char& at(i64 y, i64 x) { return data[static_cast<size_t>(y * w + x)]; }
    char at(i64 y, i64 x) const { return data[static_cast<size_t>(y * w + x)]; }
    i64 count() const {
        i64 n = 0;
        for (char v : data) n += v ? 1 : 0;
        return n;
    }
};

inline Mask valid_mask(const DepthMap& d) {
    Mask m(d.h, d.w);
    for (size_t i = 0; i < d.data.size(); ++i) m.data[i] = d.data[i] > 0 ? 1 : 0;
    return m;
}

struct Frame {
    std::string id;
    RgbImage rgb;
    DepthMap depth;
};

enum class Problem { RGB, sd, RGBd };

const char* problem_name(Problem p);
Problem parse_problem(const std::string& s);
i64 problem_channels(Problem p);

}  // namespace s2d
