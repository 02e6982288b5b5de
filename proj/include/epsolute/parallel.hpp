#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace epsolute {

// Runs body(i) for i in [0, count), either across OpenMP threads or in a
// plain loop. Exceptions are captured per iteration and the first one (by
// index) is rethrown after all iterations finish, so both paths fail alike.
template <typename Body>
void for_each_index(std::size_t count, bool parallel, Body&& body) {
    std::vector<std::exception_ptr> errors(count);
    const auto n = static_cast<long>(count);
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (long i = 0; i < n; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    } else {
        for (long i = 0; i < n; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace epsolute
