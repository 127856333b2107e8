#pragma once

#include <cstdint>
#include <functional>

namespace nightseg {

/// Number of workers used by parallel_for when none is given explicitly:
/// the NIGHTSEG_WORKERS environment variable if set, otherwise the hardware
/// concurrency. A thread-local override (see WorkerScope) takes precedence.
int effective_workers();

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one chunk
/// per worker. Chunk boundaries depend only on (n, workers), so any
/// computation with disjoint per-index outputs is deterministic.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn,
                  int workers = 0);

/// Scoped thread-local worker-count override. The batch driver pins inner
/// pipelines to one worker while it parallelizes across items.
class WorkerScope {
public:
    explicit WorkerScope(int workers);
    ~WorkerScope();
    WorkerScope(const WorkerScope&) = delete;
    WorkerScope& operator=(const WorkerScope&) = delete;

private:
    int previous_;
};

} // namespace nightseg
