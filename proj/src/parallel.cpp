#include "refseg/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace refseg {

int thread_budget() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("REFSEG_THREADS")) {
        long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) return static_cast<int>(std::min<long>(cap, 256));
    }
    return static_cast<int>(hw);
}

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body,
                  int threads_override) {
    if (n == 0) return;
    size_t workers = threads_override >= 1 ? static_cast<size_t>(threads_override)
                                           : static_cast<size_t>(thread_budget());
    workers = std::min(workers, n);
    if (workers <= 1) {
        body(0, n);
        return;
    }

    std::vector<std::thread> threads;
    threads.reserve(workers);
    size_t chunk = (n + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
        size_t begin = w * chunk;
        size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& t : threads) t.join();
}

}  // namespace refseg
