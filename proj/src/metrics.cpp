#include "s2d/metrics.hpp"

#include <cmath>
#include <sstream>

namespace s2d {

const char* problem_name(Problem p) {
    switch (p) {
        case Problem::RGB: return "rgb";
        case Problem::sd: return "sd";
        case Problem::RGBd: return "rgbd";
    }
    return "rgbd";
}

Problem parse_problem(const std::string& s) {
    if (s == "rgb") return Problem::RGB;
    if (s == "sd") return Problem::sd;
    if (s == "rgbd") return Problem::RGBd;
    throw std::invalid_argument("unknown problem kind: " + s);
}

i64 problem_channels(Problem p) {
    switch (p) {
        case Problem::RGB: return 3;
        case Problem::sd: return 1;
        case Problem::RGBd: return 4;
    }
    return 4;
}

const char* MetricsReport::csv_header() { return "rmse,rel,delta1,delta2,delta3,pixel_count"; }

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os.precision(9);
    os << rmse << ',' << rel << ',' << delta1 << ',' << delta2 << ',' << delta3 << ','
       << pixel_count;
    return os.str();
}

void MetricsAccumulator::add(double pred, double gt) {
    check(gt > 0, "metrics: ground truth must be positive on evaluated pixels");
    check(pred > 0, "metrics: prediction must be positive on evaluated pixels");
    const double d = pred - gt;
    sq_sum_ += d * d;
    rel_sum_ += std::abs(d) / gt;
    const double ratio = pred > gt ? pred / gt : gt / pred;
    d1_ += ratio < 1.25 ? 1 : 0;
    d2_ += ratio < 1.25 * 1.25 ? 1 : 0;
    d3_ += ratio < 1.25 * 1.25 * 1.25 ? 1 : 0;
    ++count_;
}

void MetricsAccumulator::add_image(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
    check(pred.h == gt.h && pred.w == gt.w && mask.h == gt.h && mask.w == gt.w,
          "metrics: image sizes must agree");
    for (size_t i = 0; i < gt.data.size(); ++i)
        if (mask.data[i]) add(pred.data[i], gt.data[i]);
}

MetricsReport MetricsAccumulator::report() const {
    check(count_ > 0, "metrics: no valid pixels");
    MetricsReport r;
    r.rmse = std::sqrt(sq_sum_ / double(count_));
    r.rel = rel_sum_ / double(count_);
    r.delta1 = 100.0 * double(d1_) / double(count_);
    r.delta2 = 100.0 * double(d2_) / double(count_);
    r.delta3 = 100.0 * double(d3_) / double(count_);
    r.pixel_count = count_;
    return r;
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
    MetricsAccumulator acc;
    acc.add_image(pred, gt, mask);
    return acc.report();
}

}  // namespace s2d
