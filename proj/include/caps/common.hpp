#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace caps {

// All numerics are 64-bit. Row-major storage so flat serialization order is
// row-major, matching the on-disk formats.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Out-of-range id (token id, feature id, class id...).
struct IndexError : Error {
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// File or parse failure.
struct IoError : Error {
  using Error::Error;
};

// Bad run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Every slot of a decoded sequence was PAD; no subset can be formed.
struct EmptyDecodeError : Error {
  using Error::Error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

inline std::string shape_str(const Matrix& m) { return shape_str(m.rows(), m.cols()); }

// ---------------------------------------------------------------------------
// FeatureSubset: canonical sorted list of distinct feature indices.
// ---------------------------------------------------------------------------

class FeatureSubset {
 public:
  FeatureSubset() = default;

  // Sorts and deduplicates. Negative ids are rejected.
  explicit FeatureSubset(std::vector<int> ids) : ids_(std::move(ids)) {
    for (int id : ids_) {
      if (id < 0) throw IndexError("FeatureSubset: negative feature id " + std::to_string(id));
    }
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  static FeatureSubset full(int d) {
    std::vector<int> ids(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) ids[static_cast<std::size_t>(i)] = i;
    return FeatureSubset(std::move(ids));
  }

  const std::vector<int>& ids() const { return ids_; }
  int size() const { return static_cast<int>(ids_.size()); }
  bool empty() const { return ids_.empty(); }
  int max_id() const { return ids_.empty() ? -1 : ids_.back(); }
  bool contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

  // Canonical cache key, e.g. "1,4,7".
  std::string key() const {
    std::string k;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (i) k += ',';
      k += std::to_string(ids_[i]);
    }
    return k;
  }

  friend bool operator==(const FeatureSubset&, const FeatureSubset&) = default;

 private:
  std::vector<int> ids_;
};

// Tie order used wherever equal-score subsets must be ranked: smaller first,
// then lexicographic ids.
inline bool subset_tie_less(const FeatureSubset& a, const FeatureSubset& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a.ids() < b.ids();
}

// ---------------------------------------------------------------------------
// Static-chunk parallel loop. Chunk boundaries depend only on (n, threads) so
// any reduction done in chunk order is reproducible.
// ---------------------------------------------------------------------------

inline int default_thread_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(std::min(hw, 8u));
}

template <typename Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 0) threads = default_thread_count();
  if (n == 0) return;
  const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (t <= 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t begin = i * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, i, begin, end] { fn(i, begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace caps
