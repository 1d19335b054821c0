#include "s2d/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace s2d::parallel {

void set_threads(int n) {
#ifdef _OPENMP
    if (n <= 0) n = omp_get_num_procs();
    omp_set_num_threads(n);
    omp_set_dynamic(0);
#else
    (void)n;
#endif
}

int threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void configure_from_env() {
    int n = 0;
    if (const char* env = std::getenv("S2D_THREADS")) {
        try {
            n = std::stoi(env);
        } catch (...) {
            n = 0;
        }
    }
    set_threads(n);
}

}  // namespace s2d::parallel
