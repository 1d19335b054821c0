// Command-line front end: dataset synthesis, training, evaluation,
// prediction, sample-count sweeps and the gradient self-check. Exit codes:
// 0 success, 1 usage error (bad flags, missing named files), 2 runtime
// failure. stdout carries only declared machine-readable output.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "s2d/checkpoint.hpp"
#include "s2d/data_synth.hpp"
#include "s2d/geometry.hpp"
#include "s2d/gradcheck.hpp"
#include "s2d/parallel.hpp"
#include "s2d/sampling.hpp"
#include "s2d/trainer.hpp"

namespace fs = std::filesystem;
using namespace s2d;

namespace {

// Flag-level mistakes discovered after CLI11 parsing; exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string resolve_manifest(const std::string& flag, const std::string& data,
                             const char* split_file) {
    if (fs::is_directory(data)) {
        const std::string path = data + "/" + split_file;
        if (!fs::exists(path))
            throw UsageError(flag + ": directory " + data + " has no " + split_file);
        return path;
    }
    if (!fs::exists(data)) throw UsageError(flag + ": " + data + " does not exist");
    return data;
}

void require_file(const std::string& flag, const std::string& path) {
    if (path.empty()) return;
    if (!fs::exists(path)) throw UsageError(flag + ": " + path + " does not exist");
}

struct TrainFlags {
    std::string preset = "desk";
    i64 epochs = -1;
    i64 batch = -1;
    double lr0 = -1;
    i64 lr_step = -1;
    double lr_decay = -1;
    double weight_decay = -1;
    double momentum = -1;
    bool no_augment = false;
    std::string loss, first_layer, decoder, precision, widths;
    i64 decoder_stages = -1;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--preset", f.preset, "training preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--epochs", f.epochs, "override the preset epoch count");
    cmd->add_option("--batch", f.batch, "override the preset batch size");
    cmd->add_option("--lr0", f.lr0, "override the initial learning rate");
    cmd->add_option("--lr-step", f.lr_step, "override the epochs between learning-rate decays");
    cmd->add_option("--lr-decay", f.lr_decay, "override the learning-rate decay factor");
    cmd->add_option("--weight-decay", f.weight_decay, "override the weight decay coefficient");
    cmd->add_option("--momentum", f.momentum, "override the SGD momentum coefficient");
    cmd->add_option("--loss", f.loss, "loss: l1, l2 or berhu")
        ->check(CLI::IsMember({"l1", "l2", "berhu"}));
    cmd->add_option("--first-layer", f.first_layer, "first layer: conv, depthwise or chandrop")
        ->check(CLI::IsMember({"conv", "depthwise", "chandrop"}));
    cmd->add_option("--decoder", f.decoder, "decoder: deconv2, deconv3, upconv or upproj")
        ->check(CLI::IsMember({"deconv2", "deconv3", "upconv", "upproj"}));
    cmd->add_option("--precision", f.precision, "element type: single or double")
        ->check(CLI::IsMember({"single", "double"}));
    cmd->add_flag("--no-augment", f.no_augment,
                  "train on the frames as stored, without random scale/rotate/jitter/flip");
    cmd->add_option("--widths", f.widths,
                    "encoder stage widths as a comma list, e.g. 16,32,64,128");
    cmd->add_option("--decoder-stages", f.decoder_stages,
                    "number of upsampling stages in the decoder");
}

TrainConfig config_from_flags(const TrainFlags& f, Problem problem, i64 samples, u64 seed) {
    TrainConfig cfg = f.preset == "paper" ? paper_preset() : desk_preset();
    cfg.problem = problem;
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.model.input_channels = problem_channels(problem);
    if (f.epochs >= 0) cfg.epochs = f.epochs;
    if (f.batch >= 0) cfg.batch_size = f.batch;
    if (f.lr0 >= 0) cfg.lr0 = f.lr0;
    if (f.lr_step >= 0) cfg.lr_step = f.lr_step;
    if (f.lr_decay >= 0) cfg.lr_decay = f.lr_decay;
    if (f.weight_decay >= 0) cfg.weight_decay = f.weight_decay;
    if (f.momentum >= 0) cfg.momentum = f.momentum;
    if (!f.loss.empty()) cfg.loss = parse_loss(f.loss);
    if (!f.first_layer.empty()) cfg.model.first_layer = parse_first_layer(f.first_layer);
    if (!f.decoder.empty()) cfg.model.decoder_kind = parse_decoder(f.decoder);
    if (!f.precision.empty()) cfg.double_precision = f.precision == "double";
    if (f.no_augment) cfg.augment = false;
    if (!f.widths.empty()) {
        cfg.model.encoder_widths.clear();
        for (const std::string& part : split_csv(f.widths)) {
            try {
                cfg.model.encoder_widths.push_back(std::stoll(part));
            } catch (const std::exception&) {
                throw UsageError("--widths: expected a comma list of integers, got '" + f.widths +
                                 "'");
            }
        }
    }
    if (f.decoder_stages >= 0) cfg.model.decoder_stages = f.decoder_stages;
    return cfg;
}

CameraIntrinsics parse_intrinsics(const std::string& spec, i64 h, i64 w) {
    const auto parts = split_csv(spec);
    if (parts.size() != 4)
        throw UsageError("--intrinsics: expected fx,fy,cx,cy, got '" + spec + "'");
    CameraIntrinsics k;
    try {
        k.fx = std::stod(parts[0]);
        k.fy = std::stod(parts[1]);
        k.cx = std::stod(parts[2]);
        k.cy = std::stod(parts[3]);
    } catch (const std::exception&) {
        throw UsageError("--intrinsics: could not parse '" + spec + "'");
    }
    k.h = h;
    k.w = w;
    return k;
}

int run_synth(const std::string& out_dir, i64 count, i64 size, u64 seed, i64 objects,
              double test_frac) {
    if (count < 1) throw UsageError("--count: must be >= 1");
    if (test_frac < 0 || test_frac >= 1) throw UsageError("--test-frac: must be in [0, 1)");
    fs::create_directories(out_dir + "/rgb");
    fs::create_directories(out_dir + "/depth");

    std::vector<Frame> frames;
    for (i64 i = 0; i < count; ++i) {
        Frame f = generate_scene(derive_seed(seed, 7, static_cast<u64>(i)), size, size, objects);
        char id[32];
        std::snprintf(id, sizeof id, "frame_%05lld", static_cast<long long>(i));
        f.id = id;
        frames.push_back(std::move(f));
    }
    const i64 n_test = std::llround(double(count) * test_frac);
    const i64 n_train = count - n_test;

    // Normalization constants come from the training split alone so the
    // test frames leak nothing into the preprocessing.
    Manifest all;
    all.dir = out_dir;
    all.split = "all";
    std::vector<Frame> train_frames(frames.begin(), frames.begin() + n_train);
    compute_normalization(train_frames.empty() ? frames : train_frames, all.mean, all.std);
    for (const auto& f : frames) {
        all.ids.push_back(f.id);
        write_frame(all, f);
    }
    write_manifest(out_dir + "/manifest.txt", all);

    Manifest train = all;
    train.split = "train";
    train.ids.assign(all.ids.begin(), all.ids.begin() + n_train);
    write_manifest(out_dir + "/manifest_train.txt", train);

    Manifest test = all;
    test.split = "test";
    test.ids.assign(all.ids.begin() + n_train, all.ids.end());
    write_manifest(out_dir + "/manifest_test.txt", test);

    std::cerr << "wrote " << count << " frames (" << n_train << " train, " << n_test
              << " test) to " << out_dir << '\n';
    return 0;
}

int run_train_cmd(const TrainFlags& flags, const std::string& data, const std::string& out,
                  const std::string& problem_s, i64 samples, u64 seed,
                  const std::string& resume, const std::string& log_path) {
    const std::string manifest_path = resolve_manifest("--data", data, "manifest_train.txt");
    require_file("--resume", resume);
    const Manifest manifest = read_manifest(manifest_path);
    const TrainConfig cfg = config_from_flags(flags, parse_problem(problem_s), samples, seed);

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw UsageError("--log: cannot open " + log_path + " for writing");
        log = &log_file;
    }
    train(cfg, manifest, out, resume, log, &std::cerr);
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data, i64 samples, i64 seed_flag) {
    const std::string manifest_path = resolve_manifest("--data", data, "manifest_test.txt");
    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    const Manifest manifest = read_manifest(manifest_path);
    const std::vector<Frame> frames = read_all_frames(manifest);

    const TrainConfig& cfg = ckpt.cfg;
    const i64 m = samples >= 0 ? samples : cfg.samples;
    const u64 seed = seed_flag >= 0 ? static_cast<u64>(seed_flag) : cfg.seed;

    MetricsReport report;
    if (cfg.oracle == OracleKind::Identity) {
        report = evaluate_with([](const Frame& f, const SparseDepth&) { return f.depth; }, frames,
                               cfg.problem, m, seed, cfg.clamp_min, cfg.clamp_max);
    } else if (cfg.double_precision) {
        Restored<double> r = restore_model<double>(ckpt);
        report = evaluate_model(r.model, frames, cfg.problem, m, seed, cfg.clamp_min,
                                cfg.clamp_max, cfg.norm_mean, cfg.norm_std);
    } else {
        Restored<float> r = restore_model<float>(ckpt);
        report = evaluate_model(r.model, frames, cfg.problem, m, seed, cfg.clamp_min,
                                cfg.clamp_max, cfg.norm_mean, cfg.norm_std);
    }
    std::cout << MetricsReport::csv_header() << '\n' << report.csv_row() << '\n';
    return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& rgb_path,
                const std::string& out_path, const std::string& sparse_path,
                const std::string& landmarks_path, const std::string& intrinsics_spec,
                const std::string& depth_path, i64 scanline_stride, bool trusted_region,
                const std::string& ply_path, double scale) {
    const int modes = int(!sparse_path.empty()) + int(!landmarks_path.empty()) +
                      int(!depth_path.empty());
    if (modes != 1)
        throw UsageError(
            "exactly one sparse-input source is required: --sparse, --landmarks or --depth");
    if (!landmarks_path.empty() && intrinsics_spec.empty())
        throw UsageError("--landmarks requires --intrinsics fx,fy,cx,cy");
    if (!depth_path.empty() && scanline_stride < 2)
        throw UsageError("--depth requires --scanline-stride >= 2");
    if (!ply_path.empty() && intrinsics_spec.empty())
        throw UsageError("--ply requires --intrinsics fx,fy,cx,cy");

    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    const RgbImage rgb = read_ppm(rgb_path);

    SparseDepth sparse(rgb.h, rgb.w);
    DepthMap gt;
    i64 dropped = 0;
    CameraIntrinsics k;
    const bool have_k = !intrinsics_spec.empty();
    if (have_k) k = parse_intrinsics(intrinsics_spec, rgb.h, rgb.w);
    if (!sparse_path.empty()) {
        sparse = read_pgm16(sparse_path, scale);
    } else if (!landmarks_path.empty()) {
        LandmarkProjection proj = landmarks_to_sparse(read_landmarks(landmarks_path), k);
        sparse = std::move(proj.sparse);
        dropped = proj.dropped;
        if (dropped) std::cerr << dropped << " landmarks fell outside the frame\n";
    } else {
        gt = read_pgm16(depth_path, scale);
        check(gt.h == rgb.h && gt.w == rgb.w, "--depth image does not match --rgb size");
        sparse = scanline_sample(gt, scanline_stride, 0);
    }
    check(sparse.h == rgb.h && sparse.w == rgb.w, "sparse input does not match --rgb size");

    const TrainConfig& cfg = ckpt.cfg;
    DepthMap pred;
    if (cfg.oracle == OracleKind::Identity) {
        check(!depth_path.empty(), "an identity-oracle checkpoint needs --depth for its answer");
        pred = gt;
    } else if (cfg.double_precision) {
        Restored<double> r = restore_model<double>(ckpt);
        pred = predict_dense(r.model, rgb, sparse, cfg.problem, cfg.norm_mean, cfg.norm_std);
    } else {
        Restored<float> r = restore_model<float>(ckpt);
        pred = predict_dense(r.model, rgb, sparse, cfg.problem, cfg.norm_mean, cfg.norm_std);
    }
    for (double& v : pred.data) v = std::clamp(v, cfg.clamp_min, cfg.clamp_max);

    // Metrics against the full-resolution input when it is available.
    if (!depth_path.empty())
        std::cout << MetricsReport::csv_header() << '\n'
                  << compute_metrics(pred, gt, valid_mask(gt)).csv_row() << '\n';

    Mask region;
    if (trusted_region) {
        region = trusted_region_mask(sparse);
        for (i64 y = 0; y < pred.h; ++y)
            for (i64 x = 0; x < pred.w; ++x)
                if (!region.at(y, x)) pred.at(y, x) = 0;
    }
    write_pgm16(out_path, pred, scale);

    if (!ply_path.empty()) {
        Mask cloud_mask = trusted_region ? region : Mask(pred.h, pred.w);
        if (!trusted_region) std::fill(cloud_mask.data.begin(), cloud_mask.data.end(), char(1));
        write_ply(ply_path, back_project(pred, k, cloud_mask, &rgb));
    }
    return 0;
}

int run_sweep(const TrainFlags& flags, const std::string& data, const std::string& problems_s,
              const std::string& counts_s, const std::string& seeds_s, const std::string& out) {
    const std::string train_path = resolve_manifest("--data", data, "manifest_train.txt");
    const std::string test_path = resolve_manifest("--data", data, "manifest_test.txt");

    std::vector<Problem> problems;
    for (const auto& p : split_csv(problems_s)) problems.push_back(parse_problem(p));
    std::vector<i64> counts;
    std::vector<u64> seeds;
    try {
        for (const auto& c : split_csv(counts_s)) counts.push_back(std::stoll(c));
        for (const auto& s : split_csv(seeds_s)) seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
        throw UsageError("--sample-counts and --seeds must be comma-separated integers");
    }
    if (problems.empty()) throw UsageError("--problems: at least one problem is required");
    if (counts.empty()) throw UsageError("--sample-counts: at least one count is required");
    if (seeds.empty()) throw UsageError("--seeds: at least one seed is required");

    const TrainConfig base = config_from_flags(flags, Problem::RGBd, counts[0], seeds[0]);
    const std::vector<SweepRow> rows = sweep(base, problems, counts, seeds,
                                             read_manifest(train_path), read_manifest(test_path),
                                             &std::cerr);
    std::ofstream out_file(out);
    if (!out_file) throw UsageError("--out: cannot open " + out + " for writing");
    write_sweep_csv(out_file, rows);
    write_sweep_csv(std::cout, rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    parallel::configure_from_env();
    CLI::App app{"sparse-to-dense depth prediction toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string sy_out;
    i64 sy_count = 16, sy_size = 64, sy_objects = 4;
    u64 sy_seed = 1;
    double sy_frac = 0.25;
    synth->add_option("--out", sy_out, "output dataset directory")->required();
    synth->add_option("--count", sy_count, "number of frames");
    synth->add_option("--size", sy_size, "frame height and width");
    synth->add_option("--seed", sy_seed, "generator seed");
    synth->add_option("--objects", sy_objects, "objects per scene");
    synth->add_option("--test-frac", sy_frac, "fraction of frames held out for testing");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    TrainFlags tr_flags;
    std::string tr_data, tr_out, tr_problem = "rgbd", tr_resume, tr_log;
    i64 tr_samples = 100;
    u64 tr_seed = 1;
    tr->add_option("--data", tr_data, "dataset root or manifest file")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--problem", tr_problem, "input modalities: rgb, sd or rgbd")
        ->check(CLI::IsMember({"rgb", "sd", "rgbd"}));
    tr->add_option("--samples", tr_samples, "sparse sample target m");
    tr->add_option("--seed", tr_seed, "run seed");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_option("--log", tr_log, "per-epoch CSV path (stdout when omitted)");
    add_train_flags(tr, tr_flags);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data;
    i64 ev_samples = -1, ev_seed = -1;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--data", ev_data, "dataset root or manifest file")->required();
    ev->add_option("--samples", ev_samples, "sparse sample target (checkpoint value when omitted)");
    ev->add_option("--seed", ev_seed, "evaluation seed (checkpoint value when omitted)");

    // predict
    auto* pr = app.add_subcommand("predict", "densify one frame");
    std::string pr_ckpt, pr_rgb, pr_out, pr_sparse, pr_landmarks, pr_intrinsics, pr_depth, pr_ply;
    i64 pr_stride = 0;
    bool pr_trusted = false;
    double pr_scale = 1000.0;
    pr->add_option("--checkpoint", pr_ckpt, "checkpoint path")
        ->required()
        ->check(CLI::ExistingFile);
    pr->add_option("--rgb", pr_rgb, "input PPM image")->required()->check(CLI::ExistingFile);
    pr->add_option("--out", pr_out, "output 16-bit PGM depth path")->required();
    pr->add_option("--sparse", pr_sparse, "sparse depth PGM")->check(CLI::ExistingFile);
    pr->add_option("--landmarks", pr_landmarks, "x y z landmark file")->check(CLI::ExistingFile);
    pr->add_option("--intrinsics", pr_intrinsics, "camera intrinsics fx,fy,cx,cy");
    pr->add_option("--depth", pr_depth, "dense depth PGM to scanline-subsample")
        ->check(CLI::ExistingFile);
    pr->add_option("--scanline-stride", pr_stride, "keep every k-th row of --depth");
    pr->add_flag("--trusted-region", pr_trusted, "zero the output outside the sample hull");
    pr->add_option("--ply", pr_ply, "also write a point cloud (needs --intrinsics)");
    pr->add_option("--scale", pr_scale, "PGM units per meter");

    // sweep
    auto* sw = app.add_subcommand("sweep", "accuracy vs sample count table");
    TrainFlags sw_flags;
    std::string sw_data, sw_problems = "rgb,sd,rgbd", sw_counts = "20,100", sw_seeds = "1,2,3",
                sw_out;
    sw->add_option("--data", sw_data, "dataset root with train and test manifests")->required();
    sw->add_option("--problems", sw_problems, "comma-separated problems");
    sw->add_option("--sample-counts", sw_counts, "comma-separated m values");
    sw->add_option("--seeds", sw_seeds, "comma-separated seeds");
    sw->add_option("--out", sw_out, "output CSV path")->required();
    add_train_flags(sw, sw_flags);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient self-check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed())
            return run_synth(sy_out, sy_count, sy_size, sy_seed, sy_objects, sy_frac);
        if (tr->parsed())
            return run_train_cmd(tr_flags, tr_data, tr_out, tr_problem, tr_samples, tr_seed,
                                 tr_resume, tr_log);
        if (ev->parsed()) return run_eval(ev_ckpt, ev_data, ev_samples, ev_seed);
        if (pr->parsed())
            return run_predict(pr_ckpt, pr_rgb, pr_out, pr_sparse, pr_landmarks, pr_intrinsics,
                               pr_depth, pr_stride, pr_trusted, pr_ply, pr_scale);
        if (sw->parsed())
            return run_sweep(sw_flags, sw_data, sw_problems, sw_counts, sw_seeds, sw_out);
        if (gc->parsed()) return run_gradcheck_suite(std::cout) ? 0 : 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
