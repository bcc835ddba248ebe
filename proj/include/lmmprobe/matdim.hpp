#pragma once

#include <atomic>
#include <cstdint>
#include <utility>

#include <Eigen/Core>

namespace lmmprobe::matdim {

// Peak-allocation proxy: estimator code records the shape of every dense
// temporary it creates, so scaling runs can assert that no p-by-p (or larger)
// matrix is ever materialized.  Recording is cheap and thread safe.

inline std::atomic<std::int64_t>& max_dim_slot() {
  static std::atomic<std::int64_t> slot{0};
  return slot;
}

inline std::atomic<std::int64_t>& max_cells_slot() {
  static std::atomic<std::int64_t> slot{0};
  return slot;
}

inline void record(Eigen::Index rows, Eigen::Index cols) {
  const std::int64_t cells = static_cast<std::int64_t>(rows) * static_cast<std::int64_t>(cols);
  if (rows > 1 && cols > 1) {
    // The dimension bound applies to true matrices; vectors (coefficients,
    // statistics, per-observation moments) are linear in p or M by nature
    // and show up in the cell count instead.
    const std::int64_t dim = static_cast<std::int64_t>(rows > cols ? rows : cols);
    auto& dslot = max_dim_slot();
    std::int64_t seen = dslot.load(std::memory_order_relaxed);
    while (seen < dim && !dslot.compare_exchange_weak(seen, dim, std::memory_order_relaxed)) {
    }
  }
  auto& cslot = max_cells_slot();
  std::int64_t seen = cslot.load(std::memory_order_relaxed);
  while (seen < cells && !cslot.compare_exchange_weak(seen, cells, std::memory_order_relaxed)) {
  }
}

inline void reset() {
  max_dim_slot().store(0, std::memory_order_relaxed);
  max_cells_slot().store(0, std::memory_order_relaxed);
}

inline Eigen::Index max_dim() {
  return static_cast<Eigen::Index>(max_dim_slot().load(std::memory_order_relaxed));
}

inline std::int64_t max_cells() { return max_cells_slot().load(std::memory_order_relaxed); }

}  // namespace lmmprobe::matdim
