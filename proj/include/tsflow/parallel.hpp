#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsflow {

// Every parallel kernel in this project is an independent per-index map whose
// results are reduced in index order afterwards. That makes the parallel path
// bitwise identical to the serial reference regardless of thread count.
enum class exec_mode { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <class F>
void parallel_for(std::ptrdiff_t n, exec_mode mode, F&& body) {
    if (mode == exec_mode::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

// sum of value_at(0..n-1), always accumulated in index order
template <class F>
double ordered_sum(std::ptrdiff_t n, exec_mode mode, F&& value_at) {
    std::vector<double> slot(static_cast<std::size_t>(n));
    parallel_for(n, mode, [&](std::ptrdiff_t i) { slot[static_cast<std::size_t>(i)] = value_at(i); });
    double acc = 0.0;
    for (double v : slot) acc += v;
    return acc;
}

template <class F>
double ordered_mean(std::ptrdiff_t n, exec_mode mode, F&& value_at) {
    return ordered_sum(n, mode, std::forward<F>(value_at)) / static_cast<double>(n);
}

}  // namespace tsflow
