#include "aesfa/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace aesfa {

namespace {

std::atomic<int> g_cap{0};

int env_cap() {
    static int cached = [] {
        const char* v = std::getenv("AESFA_THREADS");
        if (!v) return 0;
        int n = std::atoi(v);
        return n > 0 ? n : 1;
    }();
    return cached;
}

}  // namespace

int worker_threads() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (int e = env_cap(); e > 0) n = std::min(n, e);
    if (int c = g_cap.load(); c > 0) n = std::min(n, c);
    return std::max(n, 1);
}

void set_thread_cap(int cap) { g_cap.store(cap); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<int64_t>(worker_threads(), n));
    if (workers <= 1 || n < 2) {
        body(0, n);
        return;
    }
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) {
        const int64_t b = w * chunk;
        const int64_t e = std::min<int64_t>(b + chunk, n);
        if (b >= e) break;
        threads.emplace_back([&body, b, e] { body(b, e); });
    }
    body(0, std::min<int64_t>(chunk, n));
    for (auto& t : threads) t.join();
}

}  // namespace aesfa
