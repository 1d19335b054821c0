#pragma once

// Camera geometry around the depth network: projecting visual-odometry
// landmarks into sparse depth images, the convex-hull trusted region,
// back-projection into point clouds, rigid stitching across frames, and
// the scanline super-resolution driver.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "s2d/image.hpp"
#include "s2d/metrics.hpp"
#include "s2d/trainer.hpp"

namespace s2d {

struct CameraIntrinsics {
    double fx = 0, fy = 0;  // focal lengths in pixels
    double cx = 0, cy = 0;  // principal point in pixels
    i64 h = 0, w = 0;       // image size the intrinsics refer to
};

// fx, fy > 0 and the principal point inside the image.
void validate_intrinsics(const CameraIntrinsics& k);

struct Pose {
    std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major camera-to-world rotation
    std::array<double, 3> t{0, 0, 0};                    // translation, meters
};

// Throws unless r is a rotation: r^T r = I and det r = +1, both to 1e-9.
void validate_pose(const Pose& p);

struct PointCloud {
    std::vector<std::array<double, 3>> pts;      // meters
    std::vector<std::array<u8, 3>> colors;       // empty, or one entry per point
};

struct LandmarkProjection {
    SparseDepth sparse;
    i64 dropped = 0;  // landmarks behind the camera or outside the frame
};

// Projects camera-frame points to pixels (round(fx x/z + cx), round(fy y/z
// + cy)); collisions keep the nearer depth.
LandmarkProjection landmarks_to_sparse(const std::vector<std::array<double, 3>>& landmarks,
                                       const CameraIntrinsics& k);

// True exactly at pixels on or inside the convex hull of the sample pixel
// coordinates. Degenerate inputs (one sample, collinear samples) mark the
// point or segment pixels only. Throws when no sample is valid.
Mask trusted_region_mask(const SparseDepth& sparse);

// Pixel (u,v) with depth z maps to ((u-cx) z/fx, (v-cy) z/fy, z). Only
// masked pixels are emitted; a masked pixel with depth <= 0 throws. Colors
// are sampled from rgb when given.
PointCloud back_project(const DepthMap& depth, const CameraIntrinsics& k, const Mask& mask,
                        const RgbImage* rgb = nullptr);

// Maps every cloud into the world frame (p -> R p + t) and concatenates.
// Colors survive only when every input cloud carries them.
PointCloud stitch(const std::vector<std::pair<PointCloud, Pose>>& frames);

struct SuperresResult {
    DepthMap pred;
    MetricsReport metrics;
    std::optional<PointCloud> cloud;  // present when intrinsics were given
};

// Densifies a scanline-subsampled depth image: keeps rows congruent to 0
// mod row_stride as input, predicts, clamps, scores against the full
// ground truth, and optionally back-projects the colored result.
SuperresResult lidar_superres(const PredictFn& predict, const RgbImage& rgb, const DepthMap& gt,
                              i64 row_stride, const CameraIntrinsics* k = nullptr,
                              double clamp_min = 0.1, double clamp_max = 100.0);

// ASCII PLY with float x,y,z and optional uchar red,green,blue.
void write_ply(const std::string& path, const PointCloud& cloud);

// One "x y z" triple per line; blank lines and '#' comments allowed.
std::vector<std::array<double, 3>> read_landmarks(const std::string& path);

// Twelve numbers per line: the 3x4 matrix [R | t], row-major, so each row
// reads r r r t. Every pose is validated.
std::vector<Pose> read_poses(const std::string& path);

}  // namespace s2d
