#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>

namespace hqnn {

/// Selects between the OpenMP kernels and the plain-loop reference path.
/// Both paths evaluate the same per-item function; reductions happen afterwards
/// in index order, so results are bit-identical.
enum class Exec { serial, parallel };

/// Calls fn(i) for i in [0, n). Exceptions thrown inside the parallel region
/// are captured and rethrown on the calling thread.
template <class Fn>
void for_each_index(Exec exec, std::size_t n, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Derives an independent 64-bit stream seed from a base seed and up to two
/// indices (splitmix64 finalizer). Used everywhere a per-sample RNG is needed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

}  // namespace hqnn
