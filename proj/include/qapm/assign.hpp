#pragma once

#include <limits>
#include <vector>

#include "qapm/graph.hpp"

namespace qapm {

struct Assignment {
  Permutation perm;  // row i is assigned to column perm(i)
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Shortest augmenting paths with row/column potentials (Hungarian method),
/// O(n³). Rows are inserted in index order and columns scanned left to right,
/// so ties resolve the same way on every run.
inline Assignment lap_solve(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeError("lap_solve: cost matrix must be square");
  if (!cost.allFinite()) throw ParameterError("lap_solve: cost matrix has non-finite entries");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {Permutation(std::vector<int>{}), 0.0};

  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is the virtual source of each augmentation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int row = 1; row <= n; ++row) {
    owner[0] = row;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < minv[j]) {
          minv[j] = reduced;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> map(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) map[static_cast<std::size_t>(owner[j] - 1)] = j - 1;
  Assignment out{Permutation(std::move(map)), 0.0};
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.perm(i));
  return out;
}

/// Both forms of the quadratic assignment objective for a candidate matching.
struct QapObjective {
  double trace = 0.0;      // trace(A X B Xᵀ), to be maximized
  double frobenius = 0.0;  // ‖A X − X B‖_F², to be minimized
};

inline QapObjective qap_objective(const Graph& a, const Graph& b, const Permutation& x) {
  if (a.n() != b.n() || x.size() != a.n()) throw ShapeError("qap_objective: sizes differ");
  const Matrix xm = x.matrix();
  const Matrix ax = a.adj() * xm;
  const Matrix xb = xm * b.adj();
  return {(ax * b.adj() * xm.transpose()).trace(), (ax - xb).squaredNorm()};
}

}  // namespace qapm
