#include "bsdecert/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bsdecert {

namespace {
std::atomic<unsigned> g_thread_cap{0};
}

void set_thread_cap(unsigned n) noexcept { g_thread_cap.store(n); }

unsigned thread_cap() noexcept {
    const unsigned cap = g_thread_cap.load();
    if (cap != 0) return cap;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                     std::size_t chunk) {
    const std::size_t chunks = chunk_count(n, chunk);
    const std::size_t workers = std::min<std::size_t>(thread_cap(), chunks);
    auto run = [&](std::size_t c) { fn(c, c * chunk, std::min(n, (c + 1) * chunk)); };
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
                try {
                    run(c);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bsdecert
