#include "gravglue/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace gravglue {

namespace {
int g_max_threads = 0;  // 0 = uninitialized

int hardware_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}
}  // namespace

int max_threads() {
    if (g_max_threads <= 0) g_max_threads = hardware_threads();
    return g_max_threads;
}

void set_max_threads(int n) { g_max_threads = n > 0 ? n : hardware_threads(); }

void parallel_for_blocks(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& f) {
    if (n <= 0) return;
    const std::int64_t block = 1024;
    const std::int64_t nblocks = (n + block - 1) / block;
    int nt = static_cast<int>(std::min<std::int64_t>(max_threads(), nblocks));
    if (nt <= 1) {
        f(0, n);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mu;
    auto worker = [&]() {
        try {
            for (;;) {
                std::int64_t b = next.fetch_add(1);
                if (b >= nblocks) return;
                std::int64_t lo = b * block;
                std::int64_t hi = std::min(lo + block, n);
                f(lo, hi);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!first_error) first_error = std::current_exception();
            next.store(nblocks);  // stop handing out work
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    for (int t = 0; t < nt - 1; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& f) {
    parallel_for_blocks(n, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) f(i);
    });
}

double pairwise_sum(const std::vector<double>& v) {
    // iterative pairwise folding, deterministic
    if (v.empty()) return 0.0;
    std::vector<double> cur = v;
    while (cur.size() > 1) {
        std::size_t half = (cur.size() + 1) / 2;
        std::vector<double> nxt(half);
        for (std::size_t i = 0; i < half; ++i) {
            std::size_t a = 2 * i, b = 2 * i + 1;
            nxt[i] = (b < cur.size()) ? cur[a] + cur[b] : cur[a];
        }
        cur.swap(nxt);
    }
    return cur[0];
}

double parallel_sum(std::int64_t n, const std::function<double(std::int64_t)>& term) {
    if (n <= 0) return 0.0;
    const std::int64_t chunk = 4096;
    const std::int64_t nchunks = (n + chunk - 1) / chunk;
    std::vector<double> partials(static_cast<std::size_t>(nchunks), 0.0);
    parallel_for(nchunks, [&](std::int64_t c) {
        std::int64_t lo = c * chunk;
        std::int64_t hi = std::min(lo + chunk, n);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) s += term(i);
        partials[static_cast<std::size_t>(c)] = s;
    });
    return pairwise_sum(partials);
}

}  // namespace gravglue
