#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace ol4el {

// Hungarian algorithm (shortest augmenting paths, O(n^2 m)). `cost` is rows x
// cols, row-major. Returns, for each row, its assigned column (or -1 when rows
// exceed cols). Minimizes total cost; negate the matrix to maximize.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto at = [&](std::size_t i, std::size_t j) {
    return transposed ? cost[j * cols + i] : cost[i * cols + j];
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> result(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    if (transposed)
      result[j - 1] = static_cast<int>(match[j] - 1);
    else
      result[match[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

}  // namespace ol4el
