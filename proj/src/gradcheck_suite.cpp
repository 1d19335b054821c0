#include <cmath>
#include <iomanip>
#include <ostream>

#include "s2d/gradcheck.hpp"
#include "s2d/layers.hpp"
#include "s2d/losses.hpp"

namespace s2d {

namespace {

constexpr double kLayerTol = 1e-4;
constexpr double kEndToEndTol = 1e-3;

Tensor<double> randn(Shape4 s, Rng& rng, double stddev = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.data) v = stddev * rng.normal();
    return t;
}

bool report(std::ostream& out, const std::string& name, double err, double tol, i64 checked,
            i64 skipped) {
    const bool ok = err < tol;
    out << (ok ? "ok   " : "FAIL ") << std::left << std::setw(28) << name << " max rel err "
        << std::scientific << std::setprecision(3) << err << std::defaultfloat << "  ("
        << checked << " checked, " << skipped << " kinks skipped)\n";
    return ok;
}

bool run_case(std::ostream& out, const std::string& name,
              const std::vector<Tensor<double>>& leaves, const BuildFn& build,
              double tol = kLayerTol) {
    const GradCheckResult r = grad_check(build, leaves);
    return report(out, name, r.max_rel_err, tol, r.checked, r.skipped);
}

// Weighted sum against a fixed probe so permuted or misplaced outputs
// cannot cancel to the same scalar.
Var<double> probe_sum(Tape<double>& tape, Var<double> y, const Tensor<double>& probe) {
    return ops::sum_all(ops::mul(y, tape.constant(probe)));
}

Tensor<double> probe_for(Shape4 s, u64 salt) {
    Rng rng(derive_seed(4242, salt));
    return randn(s, rng);
}

bool check_layers(std::ostream& out, u64 seed) {
    Rng rng(derive_seed(7, seed));
    bool ok = true;
    const std::string tag = " [seed " + std::to_string(seed) + "]";

    {
        std::vector<Tensor<double>> leaves = {randn({2, 3, 5, 6}, rng), randn({4, 3, 3, 3}, rng),
                                              randn({1, 4, 1, 1}, rng)};
        Tensor<double> probe = probe_for({2, 4, 5, 6}, seed * 10 + 0);
        ok &= run_case(out, "conv2d s1 p1" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::conv2d(v[0], v[1], &v[2], 1, 1), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 3, 9, 9}, rng), randn({2, 3, 7, 7}, rng),
                                              randn({1, 2, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 2, 5, 5}, seed * 10 + 1);
        ok &= run_case(out, "conv2d s2 k7" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::conv2d(v[0], v[1], &v[2], 2, 3), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 3, 6, 5}, rng), randn({3, 1, 3, 3}, rng)};
        Tensor<double> probe = probe_for({2, 3, 6, 5}, seed * 10 + 2);
        ok &= run_case(out, "dwconv2d s1 p1" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::dwconv2d(v[0], v[1], 1, 1), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 3, 7, 7}, rng), randn({3, 1, 7, 7}, rng),
                                              randn({4, 3, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 4, 4, 4}, seed * 10 + 3);
        ok &= run_case(out, "depthwise_separable" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, depthwise_separable(v[0], v[1], v[2], 2, 3), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 3, 3, 4}, rng), randn({3, 2, 2, 2}, rng),
                                              randn({1, 2, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 2, 6, 8}, seed * 10 + 4);
        ok &= run_case(out, "tconv2d k2" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::tconv2d(v[0], v[1], &v[2]), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 2, 3, 3}, rng), randn({2, 3, 3, 3}, rng),
                                              randn({1, 3, 1, 1}, rng)};
        Tensor<double> probe = probe_for({2, 3, 6, 6}, seed * 10 + 5);
        ok &= run_case(out, "tconv2d k3" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::tconv2d(v[0], v[1], &v[2]), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 3, 3, 4}, rng)};
        Tensor<double> probe = probe_for({2, 3, 6, 8}, seed * 10 + 6);
        ok &= run_case(out, "unpool2x" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::unpool2x(v[0]), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 2, 3, 3}, rng)};
        Tensor<double> probe = probe_for({1, 2, 7, 8}, seed * 10 + 7);
        ok &= run_case(out, "bilinear_upsample" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::bilinear_upsample(v[0], 7, 8), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 3, 4, 4}, rng), randn({1, 3, 1, 1}, rng),
                                              randn({1, 3, 1, 1}, rng)};
        Tensor<double> probe = probe_for({2, 3, 4, 4}, seed * 10 + 8);
        ok &= run_case(out, "batch_norm train" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(
                               t, ops::batch_norm_train(v[0], v[1], v[2], kBnEps).y, probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 3, 3, 3}, rng), randn({1, 3, 1, 1}, rng),
                                              randn({1, 3, 1, 1}, rng)};
        Rng stat_rng(derive_seed(11, seed));
        Tensor<double> rmean = randn({1, 3, 1, 1}, stat_rng);
        Tensor<double> rvar({1, 3, 1, 1});
        for (auto& v : rvar.data) v = 0.5 + stat_rng.uniform();
        Tensor<double> probe = probe_for({2, 3, 3, 3}, seed * 10 + 9);
        ok &= run_case(out, "batch_norm eval" + tag, leaves,
                       [probe, rmean, rvar](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(
                               t, ops::batch_norm_eval(v[0], v[1], v[2], rmean, rvar, kBnEps),
                               probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({2, 4, 3, 3}, rng)};
        Rng mask_rng(derive_seed(13, seed));
        Tensor<double> mask({2, 4, 1, 1});
        for (auto& v : mask.data) v = mask_rng.bernoulli(0.5) ? 1.0 : 0.0;
        Tensor<double> probe = probe_for({2, 4, 3, 3}, seed * 10 + 10);
        ok &= run_case(out, "channel_mask" + tag, leaves,
                       [probe, mask](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, ops::channel_mask(v[0], mask), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 3, 3, 3}, rng), randn({2, 3, 5, 5}, rng),
                                              randn({1, 2, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 2, 6, 6}, seed * 10 + 11);
        ok &= run_case(out, "up_conv" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(t, up_conv(v[0], v[1], v[2]), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {
            randn({1, 2, 3, 3}, rng), randn({2, 2, 5, 5}, rng), randn({1, 2, 1, 1}, rng),
            randn({2, 2, 3, 3}, rng), randn({1, 2, 1, 1}, rng), randn({2, 2, 5, 5}, rng),
            randn({1, 2, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 2, 6, 6}, seed * 10 + 12);
        ok &= run_case(out, "up_proj" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           return probe_sum(
                               t, up_proj(v[0], v[1], v[2], v[3], v[4], v[5], v[6]), probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {
            randn({1, 3, 4, 4}, rng),      randn({3, 3, 3, 3}, rng), randn({1, 3, 1, 1}, rng),
            randn({1, 3, 1, 1}, rng),      randn({3, 3, 3, 3}, rng), randn({1, 3, 1, 1}, rng),
            randn({1, 3, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 3, 4, 4}, seed * 10 + 13);
        ok &= run_case(out, "residual_block s1" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           BnUse<double> bn1{v[2], v[3], nullptr, nullptr};
                           BnUse<double> bn2{v[5], v[6], nullptr, nullptr};
                           Var<double> y =
                               residual_block(v[0], v[1], bn1, v[4], bn2,
                                              static_cast<const Var<double>*>(nullptr),
                                              static_cast<BnUse<double>*>(nullptr), 1, Mode::Train);
                           return probe_sum(t, y, probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {
            randn({1, 3, 4, 4}, rng),  randn({4, 3, 3, 3}, rng), randn({1, 4, 1, 1}, rng),
            randn({1, 4, 1, 1}, rng),  randn({4, 4, 3, 3}, rng), randn({1, 4, 1, 1}, rng),
            randn({1, 4, 1, 1}, rng),  randn({4, 3, 1, 1}, rng), randn({1, 4, 1, 1}, rng),
            randn({1, 4, 1, 1}, rng)};
        Tensor<double> probe = probe_for({1, 4, 2, 2}, seed * 10 + 14);
        ok &= run_case(out, "residual_block s2 proj" + tag, leaves,
                       [probe](Tape<double>& t, const std::vector<Var<double>>& v) {
                           BnUse<double> bn1{v[2], v[3], nullptr, nullptr};
                           BnUse<double> bn2{v[5], v[6], nullptr, nullptr};
                           BnUse<double> bnp{v[8], v[9], nullptr, nullptr};
                           Var<double> y = residual_block(v[0], v[1], bn1, v[4], bn2, &v[7], &bnp,
                                                          2, Mode::Train);
                           return probe_sum(t, y, probe);
                       });
    }
    {
        std::vector<Tensor<double>> leaves = {randn({1, 2, 4, 4}, rng),
                                              randn({1, 2, 4, 4}, rng)};
        ok &= run_case(out, "elementwise composite" + tag, leaves,
                       [](Tape<double>& t, const std::vector<Var<double>>& v) {
                           (void)t;
                           Var<double> a = ops::mul(ops::relu(v[0]), v[1]);
                           Var<double> b = ops::scale(ops::square(ops::sub(v[0], v[1])), 0.3);
                           Var<double> c = ops::abs_val(ops::add(a, b));
                           return ops::sum_all(ops::berhu_elem(c, 0.7));
                       });
    }
    return ok;
}

bool check_losses(std::ostream& out, u64 seed) {
    Rng rng(derive_seed(17, seed));
    bool ok = true;
    const std::string tag = " [seed " + std::to_string(seed) + "]";

    Tensor<double> gt({1, 1, 6, 6});
    for (auto& v : gt.data) v = 0.5 + 2.5 * rng.uniform();
    Tensor<double> mask({1, 1, 6, 6});
    for (auto& v : mask.data) v = rng.bernoulli(0.8) ? 1.0 : 0.0;
    mask.data[5] = 1.0;  // at least one valid pixel

    std::vector<Tensor<double>> leaves = {randn({1, 1, 6, 6}, rng)};
    for (auto& v : leaves[0].data) v += 1.5;

    ok &= run_case(out, "loss l1" + tag, leaves,
                   [gt, mask](Tape<double>& t, const std::vector<Var<double>>& v) {
                       (void)t;
                       return loss_l1(v[0], gt, mask);
                   });
    ok &= run_case(out, "loss l2" + tag, leaves,
                   [gt, mask](Tape<double>& t, const std::vector<Var<double>>& v) {
                       (void)t;
                       return loss_l2(v[0], gt, mask);
                   });

    // The berHu threshold tracks the largest masked error and backward
    // treats it as a constant. Two pixels tie for that maximum, so any
    // nudge to either changes the threshold on one side only and the
    // sided-difference rule rejects those two coordinates as kinks
    // instead of comparing against the frozen-threshold gradient.
    std::vector<Tensor<double>> bleaves = leaves;
    for (size_t i = 2; i < bleaves[0].data.size(); ++i)
        bleaves[0].data[i] = gt.data[i] + rng.uniform(-2.0, 2.0);
    bleaves[0].data[0] = gt.data[0] + 4.0;
    bleaves[0].data[1] = gt.data[1] - 4.0;
    mask.data[0] = mask.data[1] = 1.0;
    ok &= run_case(out, "loss berhu" + tag, bleaves,
                   [gt, mask](Tape<double>& t, const std::vector<Var<double>>& v) {
                       (void)t;
                       return loss_berhu(v[0], gt, mask);
                   });
    return ok;
}

// Finite differences through the real assembler: build_model plus
// model_forward plus the masked loss, perturbing every parameter tensor
// in place. Train mode, so the batch-norm batch-statistics path is the
// one being differentiated.
bool check_end_to_end(std::ostream& out) {
    ModelConfig cfg;
    cfg.input_channels = 4;
    cfg.encoder_widths = {4, 8};
    cfg.decoder_kind = DecoderKind::UpProj;
    cfg.decoder_stages = 2;
    cfg.out_h = 12;
    cfg.out_w = 12;
    Rng rng(991);
    Model<double> model = build_model<double>(cfg, rng);

    Tensor<double> input = randn({1, 4, 12, 12}, rng);
    Tensor<double> gt({1, 1, 12, 12});
    for (auto& v : gt.data) v = 0.5 + 2.5 * rng.uniform();
    Tensor<double> mask({1, 1, 12, 12});
    for (auto& v : mask.data) v = rng.bernoulli(0.8) ? 1.0 : 0.0;
    mask.data[0] = 1.0;

    auto loss_value = [&]() {
        Tape<double> tape;
        Forward<double> fw = model_forward(model, tape, input, nullptr);
        return loss_l1(fw.out, gt, mask).val().data[0];
    };

    Tape<double> tape;
    Forward<double> fw = model_forward(model, tape, input, nullptr);
    Var<double> loss = loss_l1(fw.out, gt, mask);
    const double f0 = loss.val().data[0];
    Grads<double> grads = tape.backward(loss);

    const double eps = 1e-5, kink_tol = 1e-3;
    double max_rel = 0;
    i64 checked = 0, skipped = 0;
    for (size_t p = 0; p < model.params.size(); ++p) {
        const Tensor<double>& analytic = grads.at(fw.param_vars[p].id);
        Tensor<double>& value = model.params[p].value;
        for (size_t i = 0; i < value.data.size(); ++i) {
            const double x0 = value.data[i];
            value.data[i] = x0 + eps;
            const double fp = loss_value();
            value.data[i] = x0 - eps;
            const double fm = loss_value();
            value.data[i] = x0;

            const double d_plus = (fp - f0) / eps;
            const double d_minus = (f0 - fm) / eps;
            const double scale = std::max({1.0, std::abs(d_plus), std::abs(d_minus)});
            if (std::abs(d_plus - d_minus) > kink_tol * scale) {
                ++skipped;
                continue;
            }
            const double numeric = (fp - fm) / (2 * eps);
            const double rel = std::abs(analytic.data[i] - numeric) /
                               std::max(1.0, std::abs(analytic.data[i]));
            ++checked;
            max_rel = std::max(max_rel, rel);
        }
    }
    return report(out, "end-to-end model", max_rel, kEndToEndTol, checked, skipped);
}

}  // namespace

bool run_gradcheck_suite(std::ostream& out) {
    bool ok = true;
    for (u64 seed = 1; seed <= 3; ++seed) {
        ok &= check_layers(out, seed);
        ok &= check_losses(out, seed);
    }
    ok &= check_end_to_end(out);
    out << (ok ? "gradient suite passed\n" : "gradient suite FAILED\n");
    return ok;
}

}  // namespace s2d
