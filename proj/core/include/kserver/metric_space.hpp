#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kserver {

// Finite metric with integral distances.  Off-diagonal entries are >= 1,
// symmetric, and satisfy the triangle inequality; D is the largest entry.
class MetricSpace {
 public:
  // dist must be a flattened n*n matrix in row-major order.
  MetricSpace(int n, std::vector<std::int64_t> dist);

  int n() const { return n_; }
  std::int64_t dist(int a, int b) const { return dist_[a * n_ + b]; }
  std::int64_t diameter() const { return diameter_; }

  // Uniform metric: all off-diagonal distances 1.
  static MetricSpace uniform(int n);

  std::string to_json() const;
  static MetricSpace from_json(const std::string& text);

 private:
  int n_;
  std::vector<std::int64_t> dist_;
  std::int64_t diameter_ = 0;
};

}  // namespace kserver
