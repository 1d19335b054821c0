// Training loop determinism, the learning-rate schedule, checkpoint
// persistence with resume equivalence, evaluation pooling and the sweep
// row contract. Training runs here are seconds-scale.

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "s2d/checkpoint.hpp"
#include "s2d/trainer.hpp"
#include "test_util.hpp"

using namespace s2d;
using test::TempDir;

namespace {

// A tiny dataset and config that train in about a second.
struct Scenario {
    TempDir dir{"trainer"};
    Manifest manifest;

    explicit Scenario(i64 frames = 4, i64 size = 16, u64 seed = 50) {
        std::filesystem::create_directories(dir.file("rgb"));
        std::filesystem::create_directories(dir.file("depth"));
        manifest.dir = dir.path();
        std::vector<Frame> all;
        for (i64 i = 0; i < frames; ++i) {
            Frame f = generate_scene(derive_seed(seed, 7, static_cast<u64>(i)), size, size, 2);
            f.id = "f" + std::to_string(i);
            manifest.ids.push_back(f.id);
            write_frame(manifest, f);
            all.push_back(std::move(f));
        }
        compute_normalization(all, manifest.mean, manifest.std);
        write_manifest(dir.file("manifest.txt"), manifest);
    }
};

TrainConfig tiny_config(i64 epochs) {
    TrainConfig cfg = desk_preset();
    cfg.epochs = epochs;
    cfg.batch_size = 2;
    cfg.samples = 30;
    cfg.model.encoder_widths = {8, 16};
    cfg.model.decoder_stages = 2;
    cfg.model.out_h = 16;
    cfg.model.out_w = 16;
    return cfg;
}

std::string log_of(const TrainOutcome& o) {
    std::ostringstream os;
    write_log_header(os);
    for (const EpochLog& row : o.log) write_log_row(os, row);
    return os.str();
}

}  // namespace

TEST_CASE("learning rate schedule steps down by the decay factor") {
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.lr_decay = 0.2;
    cfg.lr_step = 5;
    CHECK(lr_schedule(0, cfg) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_schedule(4, cfg) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_schedule(5, cfg) == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(lr_schedule(9, cfg) == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(lr_schedule(10, cfg) == doctest::Approx(0.0004).epsilon(1e-12));
    for (i64 e = 1; e < 30; ++e) CHECK(lr_schedule(e, cfg) <= lr_schedule(e - 1, cfg));
}

TEST_CASE("presets differ in scale, not in kind") {
    const TrainConfig desk = desk_preset();
    const TrainConfig paper = paper_preset();
    CHECK(desk.batch_size == 4);
    CHECK(paper.batch_size == 16);
    CHECK(paper.model.encoder_widths.size() == 4);
    CHECK(paper.model.encoder_widths[0] == 64);
    CHECK(desk.lr0 == paper.lr0);
    validate_train_config(desk);
    validate_train_config(paper);
}

TEST_CASE("config validation rejects nonsense") {
    TrainConfig cfg = tiny_config(1);
    cfg.epochs = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = tiny_config(1);
    cfg.lr0 = -0.1;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = tiny_config(1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
    cfg = tiny_config(1);
    cfg.lr0 = 0.0;  // frozen parameters are an allowed control
    validate_train_config(cfg);
}

TEST_CASE("same seed reproduces the epoch log bitwise") {
    Scenario sc;
    const TrainConfig cfg = tiny_config(3);
    TrainOutcome a = train(cfg, sc.manifest, "");
    TrainOutcome b = train(cfg, sc.manifest, "");
    CHECK(log_of(a) == log_of(b));
    REQUIRE(a.log.size() == 3);
    CHECK(a.log[0].lr == cfg.lr0);
}

TEST_CASE("different seeds give different losses") {
    Scenario sc;
    TrainConfig cfg = tiny_config(2);
    TrainOutcome a = train(cfg, sc.manifest, "");
    cfg.seed = 2;
    TrainOutcome b = train(cfg, sc.manifest, "");
    CHECK(a.log.back().train_loss != b.log.back().train_loss);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    Scenario sc;
    TrainConfig cfg = tiny_config(2);
    cfg.lr0 = 0.0;
    cfg.augment = false;

    TempDir out("frozen");
    train(cfg, sc.manifest, out.file("ck.bin"));
    CheckpointData ckpt = load_checkpoint(out.file("ck.bin"));
    Restored<float> r = restore_model<float>(ckpt);

    Rng init(derive_seed(cfg.seed, kStreamModelInit));
    Model<float> fresh = build_model<float>(cfg.model, init);
    REQUIRE(fresh.params.size() == r.model.params.size());
    for (size_t i = 0; i < fresh.params.size(); ++i)
        CHECK(test::bitwise_equal(fresh.params[i].value, r.model.params[i].value));
}

TEST_CASE("checkpoint save-load-save is byte identical") {
    Scenario sc;
    TrainConfig cfg = tiny_config(2);
    TempDir out("ckpt");
    train(cfg, sc.manifest, out.file("a.bin"));

    CheckpointData ckpt = load_checkpoint(out.file("a.bin"));
    save_checkpoint(out.file("b.bin"), ckpt);

    std::ifstream fa(out.file("a.bin"), std::ios::binary);
    std::ifstream fb(out.file("b.bin"), std::ios::binary);
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(da == db);
    CHECK(!da.empty());
}

TEST_CASE("checkpoint loader reports distinct failures") {
    TempDir dir("badckpt");
    {
        std::ofstream out(dir.file("magic.bin"), std::ios::binary);
        out << "NOTACKPTAAAABBBB";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("magic.bin")), doctest::Contains("magic"),
                         std::runtime_error);

    Scenario sc;
    TrainConfig cfg = tiny_config(1);
    TempDir out("ckpt2");
    train(cfg, sc.manifest, out.file("full.bin"));
    const auto size = std::filesystem::file_size(out.file("full.bin"));
    std::filesystem::copy_file(out.file("full.bin"), out.file("cut.bin"));
    std::filesystem::resize_file(out.file("cut.bin"), size / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(out.file("cut.bin")), doctest::Contains("truncated"),
                         std::runtime_error);
}

TEST_CASE("resume from mid-run equals uninterrupted training bitwise") {
    Scenario sc;
    TempDir out("resume");

    TrainConfig full_cfg = tiny_config(4);
    TrainOutcome full = train(full_cfg, sc.manifest, out.file("full.bin"));

    // Per-epoch randomness is derived from (seed, stream, epoch) alone, so a
    // run stopped after 2 epochs is bitwise the first 2 epochs of the 4-epoch
    // run. Retag the saved target epoch count and continue from there.
    train(tiny_config(2), sc.manifest, out.file("half.bin"));
    CheckpointData half = load_checkpoint(out.file("half.bin"));
    half.cfg.epochs = 4;
    save_checkpoint(out.file("half.bin"), half);
    TrainOutcome rest = train(full_cfg, sc.manifest, out.file("rest.bin"), out.file("half.bin"));

    REQUIRE(full.log.size() == 4);
    REQUIRE(rest.log.size() == 2);
    CHECK(full.log[2].train_loss == rest.log[0].train_loss);
    CHECK(full.log[3].train_loss == rest.log[1].train_loss);
    CHECK(full.log[3].metrics.rmse == rest.log[1].metrics.rmse);

    std::ifstream fa(out.file("full.bin"), std::ios::binary);
    std::ifstream fb(out.file("rest.bin"), std::ios::binary);
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(da == db);
}

TEST_CASE("resume rejects a mismatched configuration") {
    Scenario sc;
    TempDir out("mismatch");
    train(tiny_config(1), sc.manifest, out.file("one.bin"));
    TrainConfig other = tiny_config(3);
    other.lr0 = 0.5;
    CHECK_THROWS_AS(train(other, sc.manifest, "", out.file("one.bin")), std::invalid_argument);
}

TEST_CASE("identity oracle evaluates to zero error") {
    Scenario sc;
    const std::vector<Frame> frames = read_all_frames(sc.manifest);
    MetricsReport r = evaluate_with([](const Frame& f, const SparseDepth&) { return f.depth; },
                                    frames, Problem::RGBd, 30, 1, 0.1, 100.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.rel == 0.0);
    CHECK(r.delta1 == 100.0);
}

TEST_CASE("evaluation is deterministic and pools like one big image") {
    Scenario sc;
    const std::vector<Frame> frames = read_all_frames(sc.manifest);

    // A predictor with frame-dependent constant output exercises pooling.
    PredictFn shifted = [](const Frame& f, const SparseDepth&) {
        DepthMap d(f.depth.h, f.depth.w);
        const double v = 1.0 + double(f.id.back() - '0') * 0.5;
        for (double& x : d.data) x = v;
        return d;
    };
    MetricsReport a = evaluate_with(shifted, frames, Problem::RGBd, 30, 9, 0.1, 100.0);
    MetricsReport b = evaluate_with(shifted, frames, Problem::RGBd, 30, 9, 0.1, 100.0);
    CHECK(a.rmse == b.rmse);
    CHECK(a.pixel_count == b.pixel_count);

    MetricsAccumulator acc;
    for (const Frame& f : frames) acc.add_image(shifted(f, SparseDepth(f.depth.h, f.depth.w)),
                                                f.depth, valid_mask(f.depth));
    MetricsReport pooled = acc.report();
    CHECK(a.rmse == doctest::Approx(pooled.rmse).epsilon(1e-14));
    CHECK(a.rel == doctest::Approx(pooled.rel).epsilon(1e-14));
    CHECK(a.pixel_count == pooled.pixel_count);
}

TEST_CASE("predictions are clamped into the evaluation range") {
    Scenario sc;
    const std::vector<Frame> frames = read_all_frames(sc.manifest);
    PredictFn wild = [](const Frame& f, const SparseDepth&) {
        DepthMap d(f.depth.h, f.depth.w);
        for (double& x : d.data) x = 1e6;  // clamped to 100
        return d;
    };
    MetricsReport r = evaluate_with(wild, frames, Problem::RGBd, 10, 1, 0.1, 100.0);
    // A clamp to 100 m against ~3 m scenes caps rmse near 97, far from 1e6.
    CHECK(r.rmse < 101.0);
    CHECK(r.rmse > 90.0);
}

TEST_CASE("sweep emits one row per problem and count with rgb collapsed") {
    Scenario train_sc(4, 16, 60);
    Scenario test_sc(2, 16, 61);

    TrainConfig base = tiny_config(1);
    std::vector<SweepRow> rows =
        sweep(base, {Problem::RGB, Problem::sd, Problem::RGBd}, {20, 100}, {1, 2},
              train_sc.manifest, test_sc.manifest);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].problem == Problem::RGB);
    CHECK(rows[0].m == 0);
    CHECK(rows[1].problem == Problem::sd);
    CHECK(rows[1].m == 20);
    CHECK(rows[2].problem == Problem::sd);
    CHECK(rows[2].m == 100);
    CHECK(rows[3].problem == Problem::RGBd);
    CHECK(rows[3].m == 20);
    CHECK(rows[4].problem == Problem::RGBd);
    CHECK(rows[4].m == 100);
    for (const SweepRow& r : rows) CHECK(r.metrics.pixel_count > 0);

    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "problem,m,rmse,rel,delta1,delta2,delta3");
    i64 data_rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++data_rows;
    CHECK(data_rows == 5);
}

TEST_CASE("sweep rejects sample counts beyond the smallest frame") {
    Scenario train_sc(2, 16, 62);
    Scenario test_sc(2, 16, 63);
    TrainConfig base = tiny_config(1);
    CHECK_THROWS_AS(sweep(base, {Problem::sd}, {100000}, {1}, train_sc.manifest,
                          test_sc.manifest),
                    std::invalid_argument);
}

TEST_CASE("identity-oracle checkpoint round-trips through the file format") {
    TrainConfig cfg = tiny_config(1);
    cfg.oracle = OracleKind::Identity;
    CheckpointData ckpt = make_identity_checkpoint(cfg);
    TempDir dir("oracle");
    save_checkpoint(dir.file("id.bin"), ckpt);
    CheckpointData back = load_checkpoint(dir.file("id.bin"));
    CHECK(back.cfg == cfg);
    CHECK(back.cfg.oracle == OracleKind::Identity);
    CHECK(back.tensors.empty());
}
