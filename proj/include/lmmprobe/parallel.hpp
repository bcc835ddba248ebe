#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace lmmprobe {

// Runs fn(i) for i in [0, n).  Each index must write only to its own output
// slots; with that discipline results are independent of the worker count.
// workers <= 1 runs serially; workers == 0 uses the hardware thread count.
inline void parallel_for(Eigen::Index n, int workers,
                         const std::function<void(Eigen::Index)>& fn) {
  if (workers == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    workers = hw > 0 ? static_cast<int>(hw) : 1;
  }
  if (workers <= 1 || n <= 1) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = static_cast<int>(std::min<Eigen::Index>(workers, n));
  std::vector<std::thread> threads;
  threads.reserve(used);
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  for (int w = 0; w < used; ++w) {
    const Eigen::Index begin = n * w / used;
    const Eigen::Index end = n * (w + 1) / used;
    threads.emplace_back([&, begin, end]() {
      try {
        for (Eigen::Index i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace lmmprobe
