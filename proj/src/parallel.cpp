#include "hsc/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace hsc {

namespace {
std::atomic<int> g_workers{0}; // 0 = not yet resolved
}

int worker_count() {
    int w = g_workers.load(std::memory_order_relaxed);
    if (w == 0) {
        w = 1;
        if (const char* env = std::getenv("HSC_WORKERS")) {
            const int parsed = std::atoi(env);
            if (parsed >= 1) w = parsed;
        }
        g_workers.store(w, std::memory_order_relaxed);
    }
    return w;
}

void set_worker_count(int n) { g_workers.store(n >= 1 ? n : 1, std::memory_order_relaxed); }

} // namespace hsc
