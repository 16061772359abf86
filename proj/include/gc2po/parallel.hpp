#ifndef GC2PO_PARALLEL_HPP
#define GC2PO_PARALLEL_HPP

#include <exception>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gc2po {

/// Data-parallel loop over independent work items. threads == 1 is the serial
/// reference path; threads == 0 uses the OpenMP default. Bodies must write
/// only to their own index's slots; callers reduce afterwards in index order,
/// so any thread count produces bit-identical results.
///
/// Exceptions thrown by bodies are captured per index and the lowest-index one
/// is rethrown after the loop, which keeps failure behavior deterministic too.
template <class F>
void parallel_for(int n, int threads, F&& body) {
    if (n <= 0) return;
    if (threads == 1 || n == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    if (threads > 0) omp_set_num_threads(threads);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            body(i);
        } catch (...) {
            errors[static_cast<size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
#else
    for (int i = 0; i < n; ++i) body(i);
#endif
}

inline int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace gc2po

#endif
