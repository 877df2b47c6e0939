#pragma once

#include <cstddef>
#include <functional>

namespace stb {

/// Worker count used by parallel_for. Defaults to STDC_THREADS, else 1.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n) over a static partition. Callers must make
/// each index's work independent of the others.
void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& body);

}  // namespace stb
