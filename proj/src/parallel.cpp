#include "nlsem/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace nlsem {

std::size_t thread_count() {
    if (const char* env = std::getenv("NLSEM_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t threads) {
    if (n == 0) {
        return;
    }
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    const std::size_t workers = std::min(threads == 0 ? thread_count() : threads, n_chunks);
    std::vector<std::exception_ptr> errors(n_chunks);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) {
            try {
                body(c * chunk, std::min(n, (c + 1) * chunk));
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

double stable_sum(std::span<const double> values) {
    constexpr std::size_t kBlock = 256;
    std::vector<double> partial;
    partial.reserve(values.size() / kBlock + 1);
    for (std::size_t i = 0; i < values.size(); i += kBlock) {
        const std::size_t end = std::min(values.size(), i + kBlock);
        double s = 0.0;
        for (std::size_t j = i; j < end; ++j) {
            s += values[j];
        }
        partial.push_back(s);
    }
    while (partial.size() > 1) {
        std::vector<double> next((partial.size() + 1) / 2);
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] = partial[2 * i] + (2 * i + 1 < partial.size() ? partial[2 * i + 1] : 0.0);
        }
        partial.swap(next);
    }
    return partial.empty() ? 0.0 : partial.front();
}

} // namespace nlsem
