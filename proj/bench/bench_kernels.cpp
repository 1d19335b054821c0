// Timing comparison between the OpenMP kernels and their naive serial
// references. Prints one table row per kernel: best-of-three wall times,
// the speedup, and the largest element difference between the two
// implementations on identical inputs.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "s2d/kernels.hpp"
#include "s2d/parallel.hpp"
#include "s2d/ref.hpp"
#include "s2d/rng.hpp"

using namespace s2d;
namespace k = s2d::kernels;

namespace {

Tensor<float> randn(Shape4 s, Rng& rng) {
    Tensor<float> t(s);
    for (auto& v : t.data) v = float(rng.normal());
    return t;
}

double best_ms(const std::function<void()>& fn, int reps = 3) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double worst = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    return worst;
}

void row(const char* name, const std::string& shape, double serial_ms, double parallel_ms,
         double diff) {
    std::printf("%-18s %-22s %10.2f %11.2f %9.2fx %10.2e\n", name, shape.c_str(), serial_ms,
                parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
    parallel::configure_from_env();
    std::printf("threads: %d\n\n", parallel::threads());
    std::printf("%-18s %-22s %10s %11s %10s %10s\n", "kernel", "shape", "serial ms",
                "parallel ms", "speedup", "max |diff|");

    Rng rng(1234);
    const Tensor<float> x = randn({2, 16, 64, 64}, rng);
    const Tensor<float> w = randn({32, 16, 3, 3}, rng);
    const Tensor<float> b = randn({1, 32, 1, 1}, rng);

    {
        Tensor<float> serial, fast;
        const double sm = best_ms([&] { serial = ref::conv2d_fwd(x, w, &b, 1, 1); });
        const double pm = best_ms([&] { fast = k::conv2d_fwd(x, w, &b, 1, 1); });
        row("conv2d_fwd", "2x16x64x64 k3 s1", sm, pm, max_abs_diff(serial, fast));

        const Tensor<float> gy = randn(fast.shape, rng);
        Tensor<float> sgx, pgx;
        const double sm2 = best_ms([&] { sgx = ref::conv2d_bwd_input(gy, w, 1, 1, x.shape); });
        const double pm2 = best_ms([&] { pgx = k::conv2d_bwd_input(gy, w, 1, 1, x.shape); });
        row("conv2d_bwd_input", "2x16x64x64 k3 s1", sm2, pm2, max_abs_diff(sgx, pgx));

        Tensor<float> sgw, pgw;
        const double sm3 = best_ms([&] { sgw = ref::conv2d_bwd_weight(gy, x, 1, 1, w.shape); });
        const double pm3 = best_ms([&] { pgw = k::conv2d_bwd_weight(gy, x, 1, 1, w.shape); });
        row("conv2d_bwd_weight", "2x16x64x64 k3 s1", sm3, pm3, max_abs_diff(sgw, pgw));
    }

    {
        const Tensor<float> dx = randn({2, 32, 64, 64}, rng);
        const Tensor<float> dw = randn({32, 1, 3, 3}, rng);
        Tensor<float> serial, fast;
        const double sm = best_ms([&] { serial = ref::dwconv2d_fwd(dx, dw, 1, 1); });
        const double pm = best_ms([&] { fast = k::dwconv2d_fwd(dx, dw, 1, 1); });
        row("dwconv2d_fwd", "2x32x64x64 k3 s1", sm, pm, max_abs_diff(serial, fast));
    }

    {
        const Tensor<float> tx = randn({2, 16, 32, 32}, rng);
        const Tensor<float> tw = randn({16, 16, 3, 3}, rng);
        Tensor<float> serial, fast;
        const double sm = best_ms([&] { serial = ref::tconv2d_full_fwd(tx, tw); });
        const double pm = best_ms([&] { fast = k::tconv2d_full_fwd(tx, tw); });
        row("tconv2d_full_fwd", "2x16x32x32 k3 s2", sm, pm, max_abs_diff(serial, fast));
    }

    {
        const Tensor<float> bx = randn({2, 16, 64, 64}, rng);
        Tensor<float> serial, fast;
        const double sm = best_ms([&] { serial = ref::bilinear_fwd(bx, 128, 128); });
        const double pm = best_ms([&] { fast = k::bilinear_fwd(bx, 128, 128); });
        row("bilinear_fwd", "2x16x64x64 to 128^2", sm, pm, max_abs_diff(serial, fast));
    }

    {
        const Tensor<float> nx = randn({8, 32, 64, 64}, rng);
        const Tensor<float> gamma = randn({1, 32, 1, 1}, rng);
        const Tensor<float> beta = randn({1, 32, 1, 1}, rng);
        k::BnForward<float> serial, fast;
        const double sm = best_ms([&] { serial = ref::bn_fwd_train(nx, gamma, beta, 1e-5); });
        const double pm = best_ms([&] { fast = k::bn_fwd_train(nx, gamma, beta, 1e-5); });
        row("bn_fwd_train", "8x32x64x64", sm, pm, max_abs_diff(serial.y, fast.y));
    }

    return 0;
}
