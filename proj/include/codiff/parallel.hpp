#pragma once

#include <cstddef>
#include <exception>

namespace codiff {

/// Static-schedule OpenMP loop over [0, n). The first exception thrown by any iteration is
/// rethrown on the calling thread once the loop finishes.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr error;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(codiff_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Sets the OpenMP thread count for subsequent parallel regions; 0 keeps the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace codiff
