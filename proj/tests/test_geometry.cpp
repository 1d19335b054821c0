// Camera geometry: landmark projection, the convex-hull trusted region
// checked against an exhaustive point-in-hull oracle, back-projection
// round trips, rigid stitching, file formats, and the scanline
// super-resolution driver.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "s2d/geometry.hpp"
#include "test_util.hpp"

using namespace s2d;
using test::TempDir;

namespace {

CameraIntrinsics small_cam(i64 h = 16, i64 w = 16) {
    CameraIntrinsics k;
    k.fx = 20.0;
    k.fy = 18.0;
    k.cx = w / 2.0;
    k.cy = h / 2.0;
    k.h = h;
    k.w = w;
    return k;
}

// Point-in-hull decided without any hull construction: a point lies in
// the convex hull of S exactly when it coincides with a sample, lies on
// a segment between two samples, or lies in a nondegenerate triangle of
// three samples. Integer coordinates keep every test exact.
i64 orient(i64 ax, i64 ay, i64 bx, i64 by, i64 px, i64 py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

bool on_segment(i64 ax, i64 ay, i64 bx, i64 by, i64 px, i64 py) {
    if (orient(ax, ay, bx, by, px, py) != 0) return false;
    return std::min(ax, bx) <= px && px <= std::max(ax, bx) && std::min(ay, by) <= py &&
           py <= std::max(ay, by);
}

bool in_hull_oracle(const std::vector<std::array<i64, 2>>& pts, i64 px, i64 py) {
    const size_t n = pts.size();
    for (const auto& p : pts)
        if (p[0] == px && p[1] == py) return true;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            if (on_segment(pts[i][0], pts[i][1], pts[j][0], pts[j][1], px, py)) return true;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            for (size_t l = j + 1; l < n; ++l) {
                const i64 o1 = orient(pts[i][0], pts[i][1], pts[j][0], pts[j][1], px, py);
                const i64 o2 = orient(pts[j][0], pts[j][1], pts[l][0], pts[l][1], px, py);
                const i64 o3 = orient(pts[l][0], pts[l][1], pts[i][0], pts[i][1], px, py);
                if (orient(pts[i][0], pts[i][1], pts[j][0], pts[j][1], pts[l][0], pts[l][1]) == 0)
                    continue;
                if ((o1 >= 0 && o2 >= 0 && o3 >= 0) || (o1 <= 0 && o2 <= 0 && o3 <= 0))
                    return true;
            }
    return false;
}

SparseDepth sparse_at(i64 h, i64 w, const std::vector<std::array<i64, 2>>& pts) {
    SparseDepth s(h, w);
    for (const auto& p : pts) s.at(p[1], p[0]) = 1.0;
    return s;
}

Pose rotation_pose(double ax, double ay, double az, double angle,
                   std::array<double, 3> t = {0, 0, 0}) {
    const double n = std::sqrt(ax * ax + ay * ay + az * az);
    ax /= n;
    ay /= n;
    az /= n;
    const double c = std::cos(angle), s = std::sin(angle), m = 1 - c;
    Pose p;
    p.r = {c + ax * ax * m,      ax * ay * m - az * s, ax * az * m + ay * s,
           ay * ax * m + az * s, c + ay * ay * m,      ay * az * m - ax * s,
           az * ax * m - ay * s, az * ay * m + ax * s, c + az * az * m};
    p.t = t;
    return p;
}

}  // namespace

TEST_CASE("intrinsics validation bounds the principal point") {
    validate_intrinsics(small_cam());
    CameraIntrinsics k = small_cam();
    k.fx = 0;
    CHECK_THROWS_AS(validate_intrinsics(k), std::invalid_argument);
    k = small_cam();
    k.cx = 16.0;  // must be < w
    CHECK_THROWS_AS(validate_intrinsics(k), std::invalid_argument);
    k = small_cam();
    k.cy = -0.5;
    CHECK_THROWS_AS(validate_intrinsics(k), std::invalid_argument);
}

TEST_CASE("pose validation accepts rotations and rejects the rest") {
    validate_pose(Pose{});
    validate_pose(rotation_pose(1, 2, 3, 0.7));
    Pose scaled;
    scaled.r = {2, 0, 0, 0, 2, 0, 0, 0, 2};
    CHECK_THROWS_AS(validate_pose(scaled), std::invalid_argument);
    Pose mirror;
    mirror.r = {1, 0, 0, 0, 1, 0, 0, 0, -1};  // orthonormal but det -1
    CHECK_THROWS_AS(validate_pose(mirror), std::invalid_argument);
}

TEST_CASE("principal-axis landmark lands on the principal point") {
    CameraIntrinsics k;
    k.fx = k.fy = 50;
    k.cx = 32;
    k.cy = 24;
    k.h = 48;
    k.w = 64;
    LandmarkProjection p = landmarks_to_sparse({{0, 0, 2}}, k);
    CHECK(p.dropped == 0);
    CHECK(p.sparse.at(24, 32) == 2.0);
    CHECK(p.sparse.valid_count() == 1);
}

TEST_CASE("colliding landmarks keep the nearer depth") {
    CameraIntrinsics k = small_cam();
    LandmarkProjection p = landmarks_to_sparse({{0, 0, 3}, {0, 0, 2}}, k);
    CHECK(p.sparse.at(8, 8) == 2.0);
    LandmarkProjection q = landmarks_to_sparse({{0, 0, 2}, {0, 0, 3}}, k);
    CHECK(q.sparse.at(8, 8) == 2.0);
}

TEST_CASE("landmarks behind the camera or off frame are counted, not written") {
    CameraIntrinsics k = small_cam();
    LandmarkProjection p = landmarks_to_sparse(
        {{0, 0, -1}, {0, 0, 0}, {100, 0, 1}, {0, 0, 2}}, k);
    CHECK(p.dropped == 3);
    CHECK(p.sparse.valid_count() == 1);
}

TEST_CASE("four corner samples trust the whole rectangle") {
    SparseDepth s = sparse_at(10, 12, {{2, 1}, {9, 1}, {2, 7}, {9, 7}});
    Mask m = trusted_region_mask(s);
    for (i64 y = 0; y < 10; ++y)
        for (i64 x = 0; x < 12; ++x) {
            const bool inside = x >= 2 && x <= 9 && y >= 1 && y <= 7;
            CHECK(bool(m.at(y, x)) == inside);
        }
}

TEST_CASE("a single sample trusts only its own pixel") {
    Mask m = trusted_region_mask(sparse_at(8, 8, {{3, 5}}));
    CHECK(m.count() == 1);
    CHECK(m.at(5, 3) == 1);
}

TEST_CASE("collinear samples trust the segment pixels") {
    Mask m = trusted_region_mask(sparse_at(8, 8, {{1, 2}, {5, 2}, {3, 2}}));
    CHECK(m.count() == 5);
    for (i64 x = 1; x <= 5; ++x) CHECK(m.at(2, x) == 1);
}

TEST_CASE("trusted region matches the exhaustive hull oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 25; ++trial) {
        const i64 n = 1 + i64(rng.below(12));
        std::vector<std::array<i64, 2>> pts;
        for (i64 i = 0; i < n; ++i) {
            std::array<i64, 2> p{i64(rng.below(16)), i64(rng.below(16))};
            if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
        }
        Mask m = trusted_region_mask(sparse_at(16, 16, pts));
        for (i64 y = 0; y < 16; ++y)
            for (i64 x = 0; x < 16; ++x) {
                INFO("trial " << trial << " pixel (" << x << "," << y << ")");
                CHECK(bool(m.at(y, x)) == in_hull_oracle(pts, x, y));
            }
    }
}

TEST_CASE("every sample lies inside its own trusted region") {
    Rng rng(405);
    for (int trial = 0; trial < 20; ++trial) {
        SparseDepth s(16, 16);
        const i64 n = 1 + i64(rng.below(30));
        for (i64 i = 0; i < n; ++i)
            s.at(i64(rng.below(16)), i64(rng.below(16))) = 1.0 + double(i);
        Mask m = trusted_region_mask(s);
        for (i64 y = 0; y < 16; ++y)
            for (i64 x = 0; x < 16; ++x)
                if (s.at(y, x) > 0) CHECK(m.at(y, x) == 1);
    }
}

TEST_CASE("adding a sample never shrinks the trusted region") {
    Rng rng(406);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::array<i64, 2>> pts{{i64(rng.below(16)), i64(rng.below(16))}};
        Mask prev = trusted_region_mask(sparse_at(16, 16, pts));
        for (int add = 0; add < 6; ++add) {
            pts.push_back({i64(rng.below(16)), i64(rng.below(16))});
            Mask next = trusted_region_mask(sparse_at(16, 16, pts));
            for (size_t i = 0; i < prev.data.size(); ++i)
                if (prev.data[i]) CHECK(next.data[i] == 1);
            prev = next;
        }
    }
}

TEST_CASE("an empty sparse image has no trusted region") {
    CHECK_THROWS_AS(trusted_region_mask(SparseDepth(8, 8)), std::invalid_argument);
}

TEST_CASE("back projection hand values") {
    CameraIntrinsics k = small_cam();
    DepthMap d(16, 16);
    d.at(8, 8) = 3.5;  // the principal point
    Mask m(16, 16);
    m.at(8, 8) = 1;
    PointCloud c = back_project(d, k, m);
    REQUIRE(c.pts.size() == 1);
    CHECK(c.pts[0][0] == 0.0);
    CHECK(c.pts[0][1] == 0.0);
    CHECK(c.pts[0][2] == 3.5);
    CHECK(c.colors.empty());

    CameraIntrinsics unit;
    unit.fx = unit.fy = 1;
    unit.cx = unit.cy = 0;
    unit.h = unit.w = 16;
    DepthMap d2(16, 16);
    d2.at(3, 2) = 4.0;  // pixel u=2, v=3
    Mask m2(16, 16);
    m2.at(3, 2) = 1;
    PointCloud c2 = back_project(d2, unit, m2);
    REQUIRE(c2.pts.size() == 1);
    CHECK(c2.pts[0][0] == 8.0);
    CHECK(c2.pts[0][1] == 12.0);
    CHECK(c2.pts[0][2] == 4.0);
}

TEST_CASE("back projection samples colors and rejects masked holes") {
    CameraIntrinsics k = small_cam();
    DepthMap d(16, 16);
    d.at(2, 5) = 1.0;
    Mask m(16, 16);
    m.at(2, 5) = 1;
    RgbImage rgb(16, 16);
    rgb.at(0, 2, 5) = 1.0;
    rgb.at(1, 2, 5) = 0.5;
    rgb.at(2, 2, 5) = 0.0;
    PointCloud c = back_project(d, k, m, &rgb);
    REQUIRE(c.colors.size() == 1);
    CHECK(c.colors[0][0] == 255);
    CHECK(c.colors[0][1] == 128);
    CHECK(c.colors[0][2] == 0);

    m.at(9, 9) = 1;  // masked but depth 0
    CHECK_THROWS_AS(back_project(d, k, m), std::invalid_argument);
}

TEST_CASE("projecting a back-projected depth image restores it exactly") {
    CameraIntrinsics k = small_cam();
    Rng rng(407);
    DepthMap d(16, 16);
    for (double& v : d.data)
        if (rng.uniform() < 0.7) v = 0.5 + 3.0 * rng.uniform();
    PointCloud cloud = back_project(d, k, valid_mask(d));
    LandmarkProjection round = landmarks_to_sparse(cloud.pts, k);
    CHECK(round.dropped == 0);
    REQUIRE(round.sparse.data.size() == d.data.size());
    for (size_t i = 0; i < d.data.size(); ++i) CHECK(round.sparse.data[i] == d.data[i]);
}

TEST_CASE("landmark round trip recovers points to the pixel quantization bound") {
    CameraIntrinsics k = small_cam();
    Rng rng(408);
    std::vector<std::array<double, 3>> landmarks;
    std::map<std::pair<i64, i64>, std::array<double, 3>> by_pixel;
    for (i64 i = 0; i < 60; ++i) {
        const i64 u = i64(rng.below(16)), v = i64(rng.below(16));
        if (by_pixel.count({u, v})) continue;
        const double du = 0.98 * (rng.uniform() - 0.5);  // stays in the same pixel
        const double dv = 0.98 * (rng.uniform() - 0.5);
        const double z = 0.5 + 4.0 * rng.uniform();
        std::array<double, 3> l{(double(u) + du - k.cx) * z / k.fx,
                                (double(v) + dv - k.cy) * z / k.fy, z};
        landmarks.push_back(l);
        by_pixel[{u, v}] = l;
    }
    LandmarkProjection p = landmarks_to_sparse(landmarks, k);
    CHECK(p.dropped == 0);
    CHECK(p.sparse.valid_count() == i64(by_pixel.size()));

    PointCloud cloud = back_project(p.sparse, k, valid_mask(p.sparse));
    REQUIRE(cloud.pts.size() == by_pixel.size());
    for (const auto& q : cloud.pts) {
        const double z = q[2];
        const i64 u = std::llround(k.fx * q[0] / z + k.cx);
        const i64 v = std::llround(k.fy * q[1] / z + k.cy);
        REQUIRE(by_pixel.count({u, v}) == 1);
        const std::array<double, 3>& l = by_pixel[{u, v}];
        CHECK(l[2] == z);
        CHECK(std::abs(q[0] - l[0]) <= 0.5 * z / k.fx + 1e-12);
        CHECK(std::abs(q[1] - l[1]) <= 0.5 * z / k.fy + 1e-12);
    }
}

TEST_CASE("stitch with identity poses concatenates") {
    PointCloud a;
    a.pts = {{1, 2, 3}, {4, 5, 6}};
    PointCloud b;
    b.pts = {{7, 8, 9}};
    PointCloud out = stitch({{a, Pose{}}, {b, Pose{}}});
    REQUIRE(out.pts.size() == 3);
    CHECK(out.pts[0] == std::array<double, 3>{1, 2, 3});
    CHECK(out.pts[2] == std::array<double, 3>{7, 8, 9});
}

TEST_CASE("stitch translation shifts every coordinate") {
    PointCloud a;
    a.pts = {{0, 0, 1}, {2, -1, 3}};
    Pose shift;
    shift.t = {1, 0, 0};
    PointCloud out = stitch({{a, shift}});
    CHECK(out.pts[0] == std::array<double, 3>{1, 0, 1});
    CHECK(out.pts[1] == std::array<double, 3>{3, -1, 3});
}

TEST_CASE("stitch preserves pairwise distances under random rotations") {
    Rng rng(409);
    PointCloud a;
    for (int i = 0; i < 12; ++i)
        a.pts.push_back({rng.uniform() * 4 - 2, rng.uniform() * 4 - 2,
                         rng.uniform() * 4 - 2});
    for (int trial = 0; trial < 10; ++trial) {
        Pose p = rotation_pose(rng.uniform() + 0.1, rng.uniform(), rng.uniform(),
                               rng.uniform() * 6.0,
                               {rng.uniform(), rng.uniform(), rng.uniform()});
        validate_pose(p);
        PointCloud out = stitch({{a, p}});
        REQUIRE(out.pts.size() == a.pts.size());
        for (size_t i = 0; i < a.pts.size(); ++i)
            for (size_t j = i + 1; j < a.pts.size(); ++j) {
                auto dist = [](const std::array<double, 3>& x, const std::array<double, 3>& y) {
                    const double dx = x[0] - y[0], dy = x[1] - y[1], dz = x[2] - y[2];
                    return std::sqrt(dx * dx + dy * dy + dz * dz);
                };
                CHECK(std::abs(dist(out.pts[i], out.pts[j]) - dist(a.pts[i], a.pts[j])) <= 1e-9);
            }
    }
}

TEST_CASE("stitch color policy is all or nothing") {
    PointCloud colored;
    colored.pts = {{1, 1, 1}};
    colored.colors = {{10, 20, 30}};
    PointCloud plain;
    plain.pts = {{2, 2, 2}};

    PointCloud both = stitch({{colored, Pose{}}, {colored, Pose{}}});
    REQUIRE(both.colors.size() == 2);
    CHECK(both.colors[1] == std::array<u8, 3>{10, 20, 30});

    PointCloud mixed = stitch({{colored, Pose{}}, {plain, Pose{}}});
    CHECK(mixed.pts.size() == 2);
    CHECK(mixed.colors.empty());
}

TEST_CASE("stitch validates its poses") {
    PointCloud a;
    a.pts = {{1, 1, 1}};
    Pose bad;
    bad.r = {1, 0, 0, 0, 1, 0, 0, 0, 2};
    CHECK_THROWS_AS(stitch({{a, bad}}), std::invalid_argument);
}

TEST_CASE("ply output carries the declared vertex layout") {
    TempDir dir("ply");
    PointCloud c;
    c.pts = {{1.5, -2.0, 3.0}};
    c.colors = {{255, 0, 128}};
    write_ply(dir.file("c.ply"), c);
    std::ifstream in(dir.file("c.ply"));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 11);
    CHECK(lines[0] == "ply");
    CHECK(lines[1] == "format ascii 1.0");
    CHECK(lines[2] == "element vertex 1");
    CHECK(lines[3] == "property float x");
    CHECK(lines[6] == "property uchar red");
    CHECK(lines[9] == "end_header");
    CHECK(lines[10] == "1.5 -2 3 255 0 128");

    PointCloud plain;
    plain.pts = {{0, 0, 1}};
    write_ply(dir.file("p.ply"), plain);
    std::ifstream in2(dir.file("p.ply"));
    lines.clear();
    while (std::getline(in2, line)) lines.push_back(line);
    REQUIRE(lines.size() == 8);
    CHECK(lines[2] == "element vertex 1");
    CHECK(lines[5] == "property float z");
    CHECK(lines[6] == "end_header");

    PointCloud broken;
    broken.pts = {{0, 0, 1}, {0, 0, 2}};
    broken.colors = {{1, 2, 3}};
    CHECK_THROWS_AS(write_ply(dir.file("b.ply"), broken), std::invalid_argument);
}

TEST_CASE("landmark files allow comments and blank lines") {
    TempDir dir("lm");
    {
        std::ofstream out(dir.file("l.txt"));
        out << "# heading\n\n1 2 3\n 4 5 6  # trailing note\n\n";
    }
    auto pts = read_landmarks(dir.file("l.txt"));
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == std::array<double, 3>{1, 2, 3});
    CHECK(pts[1] == std::array<double, 3>{4, 5, 6});

    {
        std::ofstream out(dir.file("bad.txt"));
        out << "1 2\n";
    }
    CHECK_THROWS_WITH_AS(read_landmarks(dir.file("bad.txt")),
                         doctest::Contains("expected 3 numbers"), std::runtime_error);
    CHECK_THROWS_AS(read_landmarks(dir.file("missing.txt")), std::runtime_error);
}

TEST_CASE("pose files parse row-major transform rows and validate them") {
    TempDir dir("poses");
    {
        std::ofstream out(dir.file("p.txt"));
        out << "1 0 0 0.5  0 1 0 -1  0 0 1 2\n";
    }
    auto poses = read_poses(dir.file("p.txt"));
    REQUIRE(poses.size() == 1);
    CHECK(poses[0].r == std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(poses[0].t == std::array<double, 3>{0.5, -1, 2});

    {
        std::ofstream out(dir.file("bad.txt"));
        out << "2 0 0 0  0 1 0 0  0 0 1 0\n";
    }
    CHECK_THROWS_AS(read_poses(dir.file("bad.txt")), std::invalid_argument);
}

TEST_CASE("scanline super-resolution with the identity oracle scores zero") {
    Frame f = generate_scene(33, 16, 16, 2);
    PredictFn identity = [](const Frame& fr, const SparseDepth&) { return fr.depth; };
    SuperresResult r = lidar_superres(identity, f.rgb, f.depth, 4);
    CHECK(r.metrics.rmse == 0.0);
    CHECK(r.metrics.delta1 == 100.0);
    CHECK(!r.cloud.has_value());

    CameraIntrinsics k = small_cam();
    SuperresResult with_cloud = lidar_superres(identity, f.rgb, f.depth, 4, &k);
    REQUIRE(with_cloud.cloud.has_value());
    CHECK(with_cloud.cloud->pts.size() == size_t(16 * 16));
    CHECK(with_cloud.cloud->colors.size() == size_t(16 * 16));

    CHECK_THROWS_AS(lidar_superres(identity, f.rgb, f.depth, 1), std::invalid_argument);
}

TEST_CASE("scanline super-resolution clamps predictions before scoring") {
    Frame f = generate_scene(34, 16, 16, 2);
    PredictFn wild = [](const Frame& fr, const SparseDepth&) {
        DepthMap d(fr.depth.h, fr.depth.w);
        for (double& v : d.data) v = -5.0;
        return d;
    };
    SuperresResult r = lidar_superres(wild, f.rgb, f.depth, 4, nullptr, 0.1, 100.0);
    for (double v : r.pred.data) CHECK(v == 0.1);
    CHECK(r.metrics.rmse > 0.0);
}
