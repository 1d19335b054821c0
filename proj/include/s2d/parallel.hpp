#pragma once

namespace s2d {

/// Worker-count control. Every parallel kernel assigns each output element
/// to exactly one thread and reduces serially inside it, so results are
/// bit-identical for any thread count.
namespace parallel {

/// Reads S2D_THREADS (0 or unset = all hardware threads) and applies it
/// to the OpenMP runtime. Call once at process start.
void configure_from_env();

void set_threads(int n);
int threads();

}  // namespace parallel
}  // namespace s2d
