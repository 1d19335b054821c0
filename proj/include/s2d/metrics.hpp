#pragma once

// Depth evaluation metrics, always computed in double precision. The
// delta columns are percentages of pixels whose prediction/truth ratio
// (taken in whichever direction exceeds 1) stays strictly below 1.25^i.

#include <string>

#include "s2d/image.hpp"

namespace s2d {

struct MetricsReport {
    double rmse = 0;    // meters
    double rel = 0;     // dimensionless
    double delta1 = 0;  // percentages in [0,100]
    double delta2 = 0;
    double delta3 = 0;
    i64 pixel_count = 0;

    static const char* csv_header();  // "rmse,rel,delta1,delta2,delta3,pixel_count"
    std::string csv_row() const;
};

// Pools pixels across frames so the aggregate equals the metrics of one
// concatenated image.
class MetricsAccumulator {
public:
    // gt must be > 0 and pred > 0 (clamp predictions before calling).
    void add(double pred, double gt);
    void add_image(const DepthMap& pred, const DepthMap& gt, const Mask& mask);
    MetricsReport report() const;  // throws when no pixels were added

private:
    double sq_sum_ = 0, rel_sum_ = 0;
    i64 d1_ = 0, d2_ = 0, d3_ = 0, count_ = 0;
};

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Mask& mask);

}  // namespace s2d
