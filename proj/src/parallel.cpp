#include "mcen/parallel.hpp"

#include <atomic>

#include <omp.h>

namespace mcen {

namespace {
std::atomic<int> g_budget{0};
}

void set_thread_budget(int threads) { g_budget.store(threads > 0 ? threads : 0); }

int thread_budget() {
    const int b = g_budget.load();
    return b > 0 ? b : omp_get_num_procs();
}

}  // namespace mcen
