#ifndef S3C_PARALLEL_HPP
#define S3C_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "s3c/numeric.hpp"

namespace s3c {

// Worker count: explicit value, else S3C_WORKERS, else hardware concurrency.
inline int resolve_workers(std::optional<int> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("S3C_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is owned
// by exactly one worker; the first exception thrown is rethrown here.
template <typename Fn>
void parallel_for(Index n, int workers, Fn&& fn) {
  if (n <= 0) return;
  const Index w = std::clamp<Index>(workers, 1, n);
  if (w == 1) {
    fn(Index{0}, n);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(w));
  for (Index t = 0; t < w; ++t) {
    const Index begin = n * t / w;
    const Index end = n * (t + 1) / w;
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace s3c

#endif  // S3C_PARALLEL_HPP
