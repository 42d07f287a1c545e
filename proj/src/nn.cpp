#include "plateinspect/nn/layers.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace plateinspect::nn {

namespace {
int g_threads = 0;  // 0 = library default
}

int thread_count() {
    if (g_threads > 0) return g_threads;
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_thread_count(int n) { g_threads = n; }

}  // namespace plateinspect::nn
