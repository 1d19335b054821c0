#pragma once

// Procedural RGB-D scenes for self-contained training, plus the on-disk
// dataset layout: binary PPM color, 16-bit PGM depth in millimeters, and
// a plain-text manifest per split.

#include <array>
#include <string>
#include <vector>

#include "s2d/image.hpp"
#include "s2d/rng.hpp"

namespace s2d {

// Renders a constant-depth background with shaded boxes, sphere caps and
// tilted planes in front of it. Shading brightens near surfaces, so image
// luminance carries depth information; about 1% of pixels are knocked out
// as invalid. Deterministic in the seed.
Frame generate_scene(u64 seed, i64 h, i64 w, i64 object_count);

// PPM (P6, maxval 255) color image in [0,1].
void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

// PGM (P5, maxval 65535, big-endian) depth image; stored value is
// round(meters * scale), 0 = invalid. Depths beyond the 16-bit range are
// rejected before anything is written.
void write_pgm16(const std::string& path, const DepthMap& depth, double scale);
DepthMap read_pgm16(const std::string& path, double scale);

struct Manifest {
    std::string dir;  // directory holding the manifest file; rgb/ and depth/ live under it
    std::string split = "train";
    double depth_scale = 1000.0;
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> std{1, 1, 1};
    std::vector<std::string> ids;

    std::string rgb_path(const std::string& id) const { return dir + "/rgb/" + id + ".ppm"; }
    std::string depth_path(const std::string& id) const { return dir + "/depth/" + id + ".pgm"; }
};

// Key=value header, blank line, then one frame id per line.
void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

void write_frame(const Manifest& m, const Frame& f);
Frame read_frame(const Manifest& m, const std::string& id);  // errors name the id
std::vector<Frame> read_all_frames(const Manifest& m);

// Per-channel mean and standard deviation over every pixel of the frames.
void compute_normalization(const std::vector<Frame>& frames, std::array<double, 3>& mean,
                           std::array<double, 3>& std);

// Seed-deterministic shuffle chopped into batches; the final batch may be
// short. Every index appears exactly once.
std::vector<std::vector<i64>> epoch_batches(i64 count, i64 batch_size, Rng& rng);

}  // namespace s2d
