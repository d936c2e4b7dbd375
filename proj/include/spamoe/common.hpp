#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spamoe {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad shapes, non-finite values, mismatched operands.
struct InvalidInput : Error {
    using Error::Error;
};

// Rejected configuration (K < 2, modes past Nyquist, top-k out of range, ...).
struct InvalidConfig : Error {
    using Error::Error;
};

// Brute-force oracle invoked on a grid it is not meant for.
struct OracleTooLarge : Error {
    using Error::Error;
};

// A theorem-harness case whose constructed operator fails its own premise.
// Distinct from a theorem violation so failures stay attributable.
struct PremiseViolation : Error {
    using Error::Error;
};

// Object used after it was consumed (a tape differentiated twice).
struct InvalidState : Error {
    using Error::Error;
};

// Non-finite gradient encountered during an optimizer step.
struct NanGradient : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sigma = 1.0) {
    return std::normal_distribution<double>(mean, sigma)(rng);
}

namespace detail {
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};  // 0 = all hardware threads
    return n;
}
}  // namespace detail

inline void set_thread_count(int n) { detail::thread_count_slot().store(n < 0 ? 0 : n); }

inline int thread_count() {
    int n = detail::thread_count_slot().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Work items must be independent; callers that
/// aggregate must do so after the call, in index order, so results do not
/// depend on the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    int workers = thread_count();
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (static_cast<std::size_t>(workers) > n) workers = static_cast<int>(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace spamoe
