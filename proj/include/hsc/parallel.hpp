#pragma once

#include <thread>
#include <vector>

namespace hsc {

// Worker count for data-parallel sections; HSC_WORKERS overrides, default 1.
int worker_count();
void set_worker_count(int n);

// Static block partition of [0, n) across workers. Each index is processed
// exactly once; f must only write state owned by its index.
template <class F>
void parallel_for(int n, F&& f) {
    const int workers = worker_count();
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    const int used = workers < n ? workers : n;
    std::vector<std::thread> pool;
    pool.reserve(used);
    for (int t = 0; t < used; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += used) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace hsc
