#include "s2d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "s2d/sampling.hpp"

namespace s2d {

void validate_intrinsics(const CameraIntrinsics& k) {
    check(k.h >= 1 && k.w >= 1, "intrinsics: image size must be positive");
    check(k.fx > 0 && k.fy > 0, "intrinsics: focal lengths must be positive");
    check(k.cx >= 0 && k.cx < double(k.w) && k.cy >= 0 && k.cy < double(k.h),
          "intrinsics: principal point must lie inside the image");
}

void validate_pose(const Pose& p) {
    const auto& r = p.r;
    // r^T r = I
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0;
            for (int k = 0; k < 3; ++k) dot += r[size_t(k * 3 + i)] * r[size_t(k * 3 + j)];
            const double want = i == j ? 1.0 : 0.0;
            check(std::abs(dot - want) <= 1e-9, "pose rotation is not orthonormal");
        }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    check(std::abs(det - 1.0) <= 1e-9, "pose rotation determinant is not +1");
    for (double v : p.t) check(std::isfinite(v), "pose translation must be finite");
}

LandmarkProjection landmarks_to_sparse(const std::vector<std::array<double, 3>>& landmarks,
                                       const CameraIntrinsics& k) {
    validate_intrinsics(k);
    LandmarkProjection out;
    out.sparse = SparseDepth(k.h, k.w);
    for (const auto& p : landmarks) {
        const double z = p[2];
        if (z <= 0) {
            ++out.dropped;
            continue;
        }
        const i64 u = std::llround(k.fx * p[0] / z + k.cx);
        const i64 v = std::llround(k.fy * p[1] / z + k.cy);
        if (u < 0 || u >= k.w || v < 0 || v >= k.h) {
            ++out.dropped;
            continue;
        }
        double& cell = out.sparse.at(v, u);
        if (cell <= 0 || z < cell) cell = z;
    }
    return out;
}

namespace {

struct Pt {
    i64 x = 0, y = 0;
    bool operator<(const Pt& o) const { return x < o.x || (x == o.x && y < o.y); }
    bool operator==(const Pt& o) const { return x == o.x && y == o.y; }
};

i64 cross(const Pt& o, const Pt& a, const Pt& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain; collinear points dropped, so the result is the
// minimal hull in counter-clockwise order (2 points for collinear input,
// 1 for a single point).
std::vector<Pt> convex_hull(std::vector<Pt> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const size_t n = pts.size();
    if (n <= 2) return pts;
    std::vector<Pt> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);  // the last point repeats the first
    return hull;
}

bool on_segment(const Pt& a, const Pt& b, const Pt& p) {
    if (cross(a, b, p) != 0) return false;
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

}  // namespace

Mask trusted_region_mask(const SparseDepth& sparse) {
    std::vector<Pt> pts;
    for (i64 y = 0; y < sparse.h; ++y)
        for (i64 x = 0; x < sparse.w; ++x)
            if (sparse.at(y, x) > 0) pts.push_back({x, y});
    check(!pts.empty(), "trusted region needs at least one sample");

    const std::vector<Pt> hull = convex_hull(std::move(pts));
    Mask mask(sparse.h, sparse.w);
    if (hull.size() == 1) {
        mask.at(hull[0].y, hull[0].x) = 1;
        return mask;
    }
    for (i64 y = 0; y < sparse.h; ++y)
        for (i64 x = 0; x < sparse.w; ++x) {
            const Pt p{x, y};
            bool inside;
            if (hull.size() == 2) {
                inside = on_segment(hull[0], hull[1], p);
            } else {
                inside = true;
                for (size_t i = 0; i < hull.size() && inside; ++i) {
                    const Pt& a = hull[i];
                    const Pt& b = hull[(i + 1) % hull.size()];
                    if (cross(a, b, p) < 0) inside = false;
                }
            }
            mask.at(y, x) = inside ? 1 : 0;
        }
    return mask;
}

PointCloud back_project(const DepthMap& depth, const CameraIntrinsics& k, const Mask& mask,
                        const RgbImage* rgb) {
    validate_intrinsics(k);
    check(depth.h == k.h && depth.w == k.w, "depth image does not match the intrinsics' size");
    check(mask.h == depth.h && mask.w == depth.w, "mask does not match the depth image");
    if (rgb) check(rgb->h == depth.h && rgb->w == depth.w, "rgb does not match the depth image");

    PointCloud cloud;
    for (i64 v = 0; v < depth.h; ++v)
        for (i64 u = 0; u < depth.w; ++u) {
            if (!mask.at(v, u)) continue;
            const double z = depth.at(v, u);
            check(z > 0, "masked pixel (" + std::to_string(u) + "," + std::to_string(v) +
                             ") has no positive depth");
            cloud.pts.push_back({(double(u) - k.cx) * z / k.fx, (double(v) - k.cy) * z / k.fy, z});
            if (rgb) {
                std::array<u8, 3> col{};
                for (i64 c = 0; c < 3; ++c)
                    col[size_t(c)] = static_cast<u8>(
                        std::clamp<i64>(std::llround(rgb->at(c, v, u) * 255.0), 0, 255));
                cloud.colors.push_back(col);
            }
        }
    return cloud;
}

PointCloud stitch(const std::vector<std::pair<PointCloud, Pose>>& frames) {
    bool all_colored = !frames.empty();
    for (const auto& [cloud, pose] : frames) {
        validate_pose(pose);
        if (cloud.colors.size() != cloud.pts.size()) all_colored = false;
    }
    PointCloud out;
    for (const auto& [cloud, pose] : frames) {
        const auto& r = pose.r;
        const auto& t = pose.t;
        for (const auto& p : cloud.pts)
            out.pts.push_back({r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + t[0],
                               r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + t[1],
                               r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + t[2]});
        if (all_colored)
            out.colors.insert(out.colors.end(), cloud.colors.begin(), cloud.colors.end());
    }
    return out;
}

SuperresResult lidar_superres(const PredictFn& predict, const RgbImage& rgb, const DepthMap& gt,
                              i64 row_stride, const CameraIntrinsics* k, double clamp_min,
                              double clamp_max) {
    check(row_stride >= 2, "row stride must be >= 2; stride 1 would be the full input");
    check(rgb.h == gt.h && rgb.w == gt.w, "rgb and depth sizes disagree");

    SuperresResult res;
    const SparseDepth sparse = scanline_sample(gt, row_stride, 0);
    Frame f;
    f.id = "superres";
    f.rgb = rgb;
    f.depth = gt;
    res.pred = predict(f, sparse);
    check(res.pred.h == gt.h && res.pred.w == gt.w, "prediction has the wrong size");
    for (double& v : res.pred.data) v = std::clamp(v, clamp_min, clamp_max);
    res.metrics = compute_metrics(res.pred, gt, valid_mask(gt));
    if (k) {
        check(k->h == gt.h && k->w == gt.w, "intrinsics do not match the frame size");
        Mask all(gt.h, gt.w);
        std::fill(all.data.begin(), all.data.end(), char(1));
        res.cloud = back_project(res.pred, *k, all, &rgb);
    }
    return res;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
    const bool colored = !cloud.colors.empty();
    check(!colored || cloud.colors.size() == cloud.pts.size(),
          "point cloud has colors for only some points");
    std::ofstream out(path);
    check(bool(out), "cannot open " + path + " for writing");
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.pts.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n";
    if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    out.precision(9);
    for (size_t i = 0; i < cloud.pts.size(); ++i) {
        out << cloud.pts[i][0] << ' ' << cloud.pts[i][1] << ' ' << cloud.pts[i][2];
        if (colored)
            out << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' '
                << int(cloud.colors[i][2]);
        out << '\n';
    }
    check(bool(out), "failed writing " + path);
}

namespace {

std::vector<std::vector<double>> read_number_lines(const std::string& path, size_t per_line,
                                                   const char* what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(std::string("cannot open ") + what + " file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    i64 lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.empty()) continue;
        if (vals.size() != per_line)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(per_line) + " numbers, got " +
                                     std::to_string(vals.size()));
        rows.push_back(std::move(vals));
    }
    return rows;
}

}  // namespace

std::vector<std::array<double, 3>> read_landmarks(const std::string& path) {
    std::vector<std::array<double, 3>> out;
    for (const auto& r : read_number_lines(path, 3, "landmark"))
        out.push_back({r[0], r[1], r[2]});
    return out;
}

std::vector<Pose> read_poses(const std::string& path) {
    std::vector<Pose> out;
    for (const auto& r : read_number_lines(path, 12, "pose")) {
        Pose p;
        for (int row = 0; row < 3; ++row) {
            for (int col = 0; col < 3; ++col) p.r[size_t(row * 3 + col)] = r[size_t(row * 4 + col)];
            p.t[size_t(row)] = r[size_t(row * 4 + 3)];
        }
        validate_pose(p);
        out.push_back(p);
    }
    return out;
}

}  // namespace s2d
