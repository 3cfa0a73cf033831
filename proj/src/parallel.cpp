#include "fundusqa/parallel.hpp"

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fundusqa {

int worker_count() {
    static const int cached = [] {
        int n = 0;
        if (const char* env = std::getenv("FUNDUS_QA_THREADS")) {
            n = std::atoi(env);
        }
#ifdef _OPENMP
        if (n <= 0) n = omp_get_max_threads();
#else
        n = 1;
#endif
        return n < 1 ? 1 : n;
    }();
    return cached;
}

}  // namespace fundusqa
