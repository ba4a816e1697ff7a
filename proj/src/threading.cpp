#include "tvase/threading.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tvase {

int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("TVASE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < n) n = cap;
    }
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<int64_t>(worker_count(), n));
    if (workers == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto body = [&] {
        for (;;) {
            const int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers - 1));
    for (int i = 1; i < workers; ++i) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace tvase
