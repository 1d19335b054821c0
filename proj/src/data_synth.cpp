#include "s2d/data_synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace s2d {

Frame generate_scene(u64 seed, i64 h, i64 w, i64 object_count) {
    check(h >= 16 && w >= 16, "generate_scene: size must be at least 16x16");
    check(object_count >= 0, "generate_scene: object count must be >= 0");
    Rng rng(seed);

    Frame f;
    f.id = "seed" + std::to_string(seed);
    f.rgb = RgbImage(h, w);
    f.depth = DepthMap(h, w);

    const double bg_depth = rng.uniform(2.8, 4.0);
    const std::array<double, 3> bg_albedo{rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9),
                                          rng.uniform(0.3, 0.9)};
    std::vector<std::array<double, 3>> albedo(static_cast<size_t>(h * w), bg_albedo);
    std::vector<char> textured(static_cast<size_t>(h * w), 0);
    for (auto& v : f.depth.data) v = bg_depth;

    for (i64 obj = 0; obj < object_count; ++obj) {
        const i64 type = static_cast<i64>(rng.below(3));
        const double cx = rng.uniform(0.15, 0.85) * double(w - 1);
        const double cy = rng.uniform(0.15, 0.85) * double(h - 1);
        const double half = std::max(2.0, rng.uniform(0.08, 0.22) * double(std::min(h, w)));
        const double zc = rng.uniform(1.0, 2.4);
        const std::array<double, 3> alb{rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0),
                                        rng.uniform(0.2, 1.0)};
        const double slope = rng.uniform(-0.3, 0.3) / half;
        const bool tilt_x = rng.below(2) == 0;

        const i64 y0 = std::max<i64>(0, static_cast<i64>(std::floor(cy - half)));
        const i64 y1 = std::min(h - 1, static_cast<i64>(std::ceil(cy + half)));
        const i64 x0 = std::max<i64>(0, static_cast<i64>(std::floor(cx - half)));
        const i64 x1 = std::min(w - 1, static_cast<i64>(std::ceil(cx + half)));
        for (i64 y = y0; y <= y1; ++y) {
            for (i64 x = x0; x <= x1; ++x) {
                const double dx = x - cx, dy = y - cy;
                double z;
                if (type == 1) {  // sphere cap
                    const double r2 = (dx * dx + dy * dy) / (half * half);
                    if (r2 > 1.0) continue;
                    z = zc - 0.3 * std::sqrt(1.0 - r2);
                } else if (std::abs(dx) > half || std::abs(dy) > half) {
                    continue;
                } else if (type == 2) {  // tilted plane
                    z = std::clamp(zc + slope * (tilt_x ? dx : dy), 0.8, 2.6);
                } else {  // box
                    z = zc;
                }
                const size_t i = static_cast<size_t>(y * w + x);
                f.depth.data[i] = z;
                albedo[i] = alb;
                textured[i] = 1;
            }
        }
    }

    for (i64 y = 0; y < h; ++y) {
        for (i64 x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y * w + x);
            const double shade = std::clamp(1.2 / f.depth.data[i], 0.15, 1.0);
            const double checker =
                textured[i] && ((x / 4 + y / 4) % 2 == 0) ? 0.85 : 1.0;
            for (i64 c = 0; c < 3; ++c)
                f.rgb.at(c, y, x) =
                    std::clamp(albedo[i][static_cast<size_t>(c)] * shade * checker, 0.0, 1.0);
        }
    }

    // Sensor-style dropout, capped so at least 95% of pixels stay valid.
    const i64 max_invalid = h * w / 20;
    i64 invalid = 0;
    for (auto& v : f.depth.data) {
        if (invalid >= max_invalid) break;
        if (rng.uniform() < 0.01) {
            v = 0;
            ++invalid;
        }
    }
    return f;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments, as PPM/PGM
// headers allow.
std::string next_header_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw std::runtime_error("malformed image header in " + path);
    return tok;
}

i64 header_int(std::istream& in, const std::string& path) {
    const std::string tok = next_header_token(in, path);
    try {
        size_t pos = 0;
        const i64 v = std::stoll(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("malformed image header in " + path + ": '" + tok + "'");
    }
}

}  // namespace

void write_ppm(const std::string& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    check(bool(out), "cannot open " + path + " for writing");
    out << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(img.h * img.w * 3));
    size_t k = 0;
    for (i64 y = 0; y < img.h; ++y)
        for (i64 x = 0; x < img.w; ++x)
            for (i64 c = 0; c < 3; ++c)
                buf[k++] = static_cast<unsigned char>(
                    std::clamp<i64>(std::llround(img.at(c, y, x) * 255.0), 0, 255));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    check(bool(out), "failed writing " + path);
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    if (next_header_token(in, path) != "P6")
        throw std::runtime_error("malformed image header in " + path + ": not a binary PPM");
    const i64 w = header_int(in, path);
    const i64 h = header_int(in, path);
    const i64 maxval = header_int(in, path);
    if (w < 1 || h < 1) throw std::runtime_error("malformed image header in " + path);
    if (maxval != 255)
        throw std::runtime_error("malformed image header in " + path + ": maxval must be 255");
    // the tokenizer consumed the single whitespace after maxval, so the
    // payload starts here
    std::vector<unsigned char> buf(static_cast<size_t>(h * w * 3));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("truncated payload in " + path);
    RgbImage img(h, w);
    size_t k = 0;
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x)
            for (i64 c = 0; c < 3; ++c) img.at(c, y, x) = buf[k++] / 255.0;
    return img;
}

void write_pgm16(const std::string& path, const DepthMap& depth, double scale) {
    check(scale > 0, "depth scale must be positive");
    std::vector<unsigned char> buf(static_cast<size_t>(depth.h * depth.w * 2));
    size_t k = 0;
    for (i64 y = 0; y < depth.h; ++y)
        for (i64 x = 0; x < depth.w; ++x) {
            const i64 v = std::llround(depth.at(y, x) * scale);
            if (v < 0 || v > 65535)
                throw std::invalid_argument("depth value " + std::to_string(depth.at(y, x)) +
                                            " m exceeds the storable range at scale " +
                                            std::to_string(scale));
            buf[k++] = static_cast<unsigned char>(v >> 8);
            buf[k++] = static_cast<unsigned char>(v & 0xff);
        }
    std::ofstream out(path, std::ios::binary);
    check(bool(out), "cannot open " + path + " for writing");
    out << "P5\n" << depth.w << ' ' << depth.h << "\n65535\n";
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    check(bool(out), "failed writing " + path);
}

DepthMap read_pgm16(const std::string& path, double scale) {
    check(scale > 0, "depth scale must be positive");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    if (next_header_token(in, path) != "P5")
        throw std::runtime_error("malformed image header in " + path + ": not a binary PGM");
    const i64 w = header_int(in, path);
    const i64 h = header_int(in, path);
    const i64 maxval = header_int(in, path);
    if (w < 1 || h < 1) throw std::runtime_error("malformed image header in " + path);
    if (maxval != 65535)
        throw std::runtime_error("malformed image header in " + path + ": maxval must be 65535");
    std::vector<unsigned char> buf(static_cast<size_t>(h * w * 2));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("truncated payload in " + path);
    DepthMap d(h, w);
    size_t k = 0;
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
            const i64 v = (i64(buf[k]) << 8) | i64(buf[k + 1]);
            k += 2;
            d.at(y, x) = double(v) / scale;
        }
    return d;
}

void write_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    check(bool(out), "cannot open " + path + " for writing");
    out.precision(17);
    out << "split=" << m.split << '\n';
    out << "depth_scale=" << m.depth_scale << '\n';
    const char* ch = "rgb";
    for (int c = 0; c < 3; ++c) out << "mean_" << ch[c] << '=' << m.mean[c] << '\n';
    for (int c = 0; c < 3; ++c) out << "std_" << ch[c] << '=' << m.std[c] << '\n';
    out << '\n';
    for (const auto& id : m.ids) out << id << '\n';
    check(bool(out), "failed writing " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path);
    Manifest m;
    const size_t slash = path.find_last_of('/');
    m.dir = slash == std::string::npos ? "." : path.substr(0, slash);

    std::string line;
    bool in_header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (in_header) {
            if (line.empty()) {
                in_header = false;
                continue;
            }
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("malformed manifest line in " + path + ": " + line);
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            if (key == "split")
                m.split = val;
            else if (key == "depth_scale")
                m.depth_scale = std::stod(val);
            else if (key == "mean_r")
                m.mean[0] = std::stod(val);
            else if (key == "mean_g")
                m.mean[1] = std::stod(val);
            else if (key == "mean_b")
                m.mean[2] = std::stod(val);
            else if (key == "std_r")
                m.std[0] = std::stod(val);
            else if (key == "std_g")
                m.std[1] = std::stod(val);
            else if (key == "std_b")
                m.std[2] = std::stod(val);
            else
                throw std::runtime_error("unknown manifest key in " + path + ": " + key);
        } else if (!line.empty()) {
            m.ids.push_back(line);
        }
    }
    return m;
}

void write_frame(const Manifest& m, const Frame& f) {
    write_ppm(m.rgb_path(f.id), f.rgb);
    write_pgm16(m.depth_path(f.id), f.depth, m.depth_scale);
}

Frame read_frame(const Manifest& m, const std::string& id) {
    try {
        Frame f;
        f.id = id;
        f.rgb = read_ppm(m.rgb_path(id));
        f.depth = read_pgm16(m.depth_path(id), m.depth_scale);
        check(f.rgb.h == f.depth.h && f.rgb.w == f.depth.w,
              "rgb and depth sizes disagree");
        return f;
    } catch (const std::exception& e) {
        throw std::runtime_error("frame " + id + ": " + e.what());
    }
}

std::vector<Frame> read_all_frames(const Manifest& m) {
    std::vector<Frame> frames;
    frames.reserve(m.ids.size());
    for (const auto& id : m.ids) frames.push_back(read_frame(m, id));
    return frames;
}

void compute_normalization(const std::vector<Frame>& frames, std::array<double, 3>& mean,
                           std::array<double, 3>& std) {
    check(!frames.empty(), "normalization needs at least one frame");
    std::array<double, 3> sum{0, 0, 0}, sq{0, 0, 0};
    i64 n = 0;
    for (const auto& f : frames) {
        const i64 npix = f.rgb.h * f.rgb.w;
        for (i64 c = 0; c < 3; ++c)
            for (i64 i = 0; i < npix; ++i) {
                const double v = f.rgb.data[static_cast<size_t>(c * npix + i)];
                sum[static_cast<size_t>(c)] += v;
                sq[static_cast<size_t>(c)] += v * v;
            }
        n += npix;
    }
    for (int c = 0; c < 3; ++c) {
        mean[c] = sum[c] / double(n);
        const double var = std::max(0.0, sq[c] / double(n) - mean[c] * mean[c]);
        std[c] = std::max(1e-6, std::sqrt(var));  // constant channels would divide by zero
    }
}

std::vector<std::vector<i64>> epoch_batches(i64 count, i64 batch_size, Rng& rng) {
    check(batch_size >= 1, "batch size must be >= 1");
    check(count >= 0, "frame count must be >= 0");
    std::vector<i64> order(static_cast<size_t>(count));
    for (i64 i = 0; i < count; ++i) order[static_cast<size_t>(i)] = i;
    for (i64 i = count - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[rng.below(static_cast<u64>(i + 1))]);
    std::vector<std::vector<i64>> batches;
    for (i64 at = 0; at < count; at += batch_size) {
        const i64 end = std::min(count, at + batch_size);
        batches.emplace_back(order.begin() + at, order.begin() + end);
    }
    return batches;
}

}  // namespace s2d
