#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "holovol/errors.hpp"

namespace holovol {

// Worker count for data-parallel loops: HOLOVOL_THREADS if set, otherwise
// whatever the machine offers. Read once; changing the environment mid-run
// has no effect.
inline int thread_count() {
    static const int count = [] {
        if (const char* env = std::getenv("HOLOVOL_THREADS")) {
            try {
                int n = std::stoi(env);
                if (n >= 1)
                    return n;
            } catch (...) {
            }
            fail(ErrorCode::config_error,
                 std::string("HOLOVOL_THREADS must be a positive integer, got '") +
                     env + "'");
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return count;
}

// Runs fn(i) for i in [0, n) across threads with a static block partition.
// Each index writes only its own slot in the caller's output, so results
// do not depend on the schedule. Exceptions are captured and the first one
// (by index order) is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    if (n <= 0)
        return;
    const int workers = std::min(thread_count(), n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<int> first_bad(workers, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w)
        threads.emplace_back([&, w] {
            const int lo = static_cast<int>(static_cast<long long>(n) * w /
                                            workers);
            const int hi = static_cast<int>(static_cast<long long>(n) *
                                            (w + 1) / workers);
            for (int i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                    first_bad[w] = i;
                    return;
                }
            }
        });
    for (auto& t : threads)
        t.join();
    int best = -1;
    for (int w = 0; w < workers; ++w)
        if (errors[w] && (best == -1 || first_bad[w] < first_bad[best]))
            best = w;
    if (best >= 0)
        std::rethrow_exception(errors[best]);
}

} // namespace holovol
