#include "nightseg/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace nightseg {

namespace {

thread_local int tls_worker_override = 0;

int default_workers() {
    static const int value = [] {
        if (const char* env = std::getenv("NIGHTSEG_WORKERS")) {
            const int parsed = std::atoi(env);
            if (parsed > 0) return parsed;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }();
    return value;
}

} // namespace

int effective_workers() {
    return tls_worker_override > 0 ? tls_worker_override : default_workers();
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn,
                  int workers) {
    if (n <= 0) return;
    if (workers <= 0) workers = effective_workers();
    workers = static_cast<int>(std::min<std::int64_t>(workers, n));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min<std::int64_t>(chunk, n));
    for (auto& t : threads) t.join();
}

WorkerScope::WorkerScope(int workers) : previous_(tls_worker_override) {
    tls_worker_override = workers;
}

WorkerScope::~WorkerScope() { tls_worker_override = previous_; }

} // namespace nightseg
